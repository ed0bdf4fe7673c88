//! State-quality metrics: reduced states, fidelity, Wigner function, CV-mana
//! and logarithmic negativity.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{populations, purity, Populations};
use crate::error::{Error, Result};
use crate::hilbert::{SpaceSpec, Subsystem};
use crate::linalg::{self, CMatrix, CVector, C64, ZERO};

fn kept_dims(space: SpaceSpec, keep: &[Subsystem]) -> Result<Vec<Subsystem>> {
    let mut kept: Vec<Subsystem> = keep.to_vec();
    kept.sort();
    kept.dedup();
    if kept.is_empty() {
        return Err(Error::InvalidArgument(
            "partial trace needs at least one kept subsystem".into(),
        ));
    }
    let _ = space;
    Ok(kept)
}

/// Reduced density operator on `keep`, factors in atom ⊗ cavity ⊗ oscillator
/// order.
pub fn partial_trace(rho: &CMatrix, space: SpaceSpec, keep: &[Subsystem]) -> Result<CMatrix> {
    let n = space.dim();
    if rho.nrows() != n || rho.ncols() != n {
        return Err(Error::InvalidDimension(format!(
            "state is {}x{}, space {space} needs {n}x{n}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let kept = kept_dims(space, keep)?;
    let dims = space.dims();
    let keep_mask: Vec<bool> = Subsystem::ALL.iter().map(|s| kept.contains(s)).collect();
    let reduced_index = |levels: [usize; 3]| {
        (0..3)
            .filter(|&k| keep_mask[k])
            .fold(0, |acc, k| acc * dims[k] + levels[k])
    };
    let m: usize = (0..3).filter(|&k| keep_mask[k]).map(|k| dims[k]).product();
    let mut out = CMatrix::zeros(m, m);
    for col in 0..n {
        let lc = space.levels(col);
        for row in 0..n {
            let lr = space.levels(row);
            if (0..3).all(|k| keep_mask[k] || lr[k] == lc[k]) {
                out[(reduced_index(lr), reduced_index(lc))] += rho[(row, col)];
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`partial_trace`]: `X ⊗ 1` on the traced factors, reordered into
/// the full space.
pub fn partial_trace_adjoint(x: &CMatrix, space: SpaceSpec, keep: &[Subsystem]) -> Result<CMatrix> {
    let kept = kept_dims(space, keep)?;
    let dims = space.dims();
    let keep_mask: Vec<bool> = Subsystem::ALL.iter().map(|s| kept.contains(s)).collect();
    let m: usize = (0..3).filter(|&k| keep_mask[k]).map(|k| dims[k]).product();
    if x.nrows() != m || x.ncols() != m {
        return Err(Error::InvalidDimension(format!(
            "reduced operator must be {m}x{m}, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let reduced_index = |levels: [usize; 3]| {
        (0..3)
            .filter(|&k| keep_mask[k])
            .fold(0, |acc, k| acc * dims[k] + levels[k])
    };
    let n = space.dim();
    let mut out = CMatrix::zeros(n, n);
    for col in 0..n {
        let lc = space.levels(col);
        for row in 0..n {
            let lr = space.levels(row);
            if (0..3).all(|k| keep_mask[k] || lr[k] == lc[k]) {
                out[(row, col)] = x[(reduced_index(lr), reduced_index(lc))];
            }
        }
    }
    Ok(out)
}

/// `<ψ|ρ|ψ>`.
pub fn fidelity(rho: &CMatrix, target: &CVector) -> Result<f64> {
    if rho.nrows() != target.len() || rho.ncols() != target.len() {
        return Err(Error::InvalidDimension(format!(
            "state is {}x{}, target has {} entries",
            rho.nrows(),
            rho.ncols(),
            target.len()
        )));
    }
    Ok((target.adjoint() * rho * target)[(0, 0)].re)
}

/// Generalized Laguerre polynomials `L_0^(k)(x) ..= L_n^(k)(x)`.
fn laguerre_sequence(n: usize, k: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(1.0 + k as f64 - x);
    }
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + k as f64 - x) * out[j] - (jf + k as f64) * out[j - 1]) / (jf + 1.0);
        out.push(next);
    }
    out
}

/// `<m|D(β)|n>` of the untruncated displacement operator, for all
/// `m, n < dim`.
fn displacement_elements(beta: C64, dim: usize) -> CMatrix {
    let x = beta.norm_sqr();
    let gauss = (-0.5 * x).exp();
    let mut d = CMatrix::zeros(dim, dim);
    // log-factorials keep the prefactors finite for larger truncations
    let lf: Vec<f64> = (0..=dim)
        .scan(0.0, |acc, k| {
            if k > 0 {
                *acc += (k as f64).ln();
            }
            Some(*acc)
        })
        .collect();
    for k in 0..dim {
        let lag = laguerre_sequence(dim - 1 - k, k, x);
        let bk = beta.powu(k as u32);
        let mbk = (-beta.conj()).powu(k as u32);
        for (low, l) in lag.iter().enumerate() {
            let high = low + k;
            let pref = (0.5 * (lf[low] - lf[high])).exp() * gauss * l;
            d[(high, low)] = bk * pref;
            if k > 0 {
                d[(low, high)] = mbk * pref;
            }
        }
    }
    d
}

/// Square phase-space grid, `α = x + i p` with `x, p ∈ [-extent, extent]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub extent: f64,
    pub n_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            extent: 4.0,
            n_points: 201,
        }
    }
}

impl GridSpec {
    pub fn axis(&self) -> Vec<f64> {
        let n = self.n_points;
        (0..n)
            .map(|i| -self.extent + 2.0 * self.extent * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / (self.n_points - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub extent: f64,
    pub n_points: usize,
    /// `values[i * n_points + j]` is `W(x_i + i p_j)`.
    pub values: Vec<f64>,
}

impl WignerGrid {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            extent: self.extent,
            n_points: self.n_points,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_points + j]
    }

    /// Trapezoid rule over the grid.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let n = self.n_points;
        let h = self.spec().spacing();
        let w = |k: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                sum += w(i) * w(j) * f(self.at(i, j));
            }
        }
        sum * h * h
    }

    pub fn boundary_max(&self) -> f64 {
        let n = self.n_points;
        let mut m: f64 = 0.0;
        for k in 0..n {
            for (i, j) in [(0, k), (n - 1, k), (k, 0), (k, n - 1)] {
                m = m.max(self.at(i, j).abs());
            }
        }
        m
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "p", "W"])?;
        let axis = self.spec().axis();
        for (i, x) in axis.iter().enumerate() {
            for (j, p) in axis.iter().enumerate() {
                wtr.write_record(&[x.to_string(), p.to_string(), self.at(i, j).to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `W(α) = (2/π) tr[ρ D(α) Π D(α)†]` for a single-mode state, evaluated with
/// the exact matrix elements of the displacement operator, i.e. as if the
/// state were embedded in an untruncated Fock space.
pub fn wigner_point(rho: &CMatrix, alpha: C64) -> f64 {
    // D(α) Π D(α)† = D(2α) Π
    let d = displacement_elements(alpha * 2.0, rho.nrows());
    let mut w = ZERO;
    for n in 0..rho.nrows() {
        let parity = if n % 2 == 0 { 1.0 } else { -1.0 };
        for m in 0..rho.nrows() {
            w += rho[(n, m)] * d[(m, n)] * parity;
        }
    }
    2.0 / PI * w.re
}

pub fn wigner(rho: &CMatrix, grid: GridSpec) -> Result<WignerGrid> {
    if grid.n_points < 2 || !(grid.extent > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least 2 points and a positive extent, got {grid:?}"
        )));
    }
    if rho.nrows() != rho.ncols() {
        return Err(Error::InvalidDimension("state must be square".into()));
    }
    let axis = grid.axis();
    let mut values = Vec::with_capacity(axis.len() * axis.len());
    for &x in &axis {
        for &p in &axis {
            values.push(wigner_point(rho, C64::new(x, p)));
        }
    }
    Ok(WignerGrid {
        extent: grid.extent,
        n_points: grid.n_points,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mana {
    /// `∫ |W| d²α` on the grid.
    pub abs_integral: f64,
    /// Natural log of the integral, unclamped.
    pub raw: f64,
    /// `max(raw, 0)`.
    pub clamped: f64,
}

pub fn cv_mana_from_grid(w: &WignerGrid) -> Result<Mana> {
    let edge = w.boundary_max();
    if edge >= 1e-8 {
        return Err(Error::GridTooSmall(edge));
    }
    let abs_integral = w.integrate(f64::abs);
    let raw = abs_integral.ln();
    Ok(Mana {
        abs_integral,
        raw,
        clamped: raw.max(0.0),
    })
}

/// `log ∫ |W(α)| d²α`.
pub fn cv_mana(rho: &CMatrix, grid: GridSpec) -> Result<Mana> {
    cv_mana_from_grid(&wigner(rho, grid)?)
}

/// Partial transpose on the second factor of a `dim_a ⊗ dim_b` operator.
pub fn partial_transpose(rho: &CMatrix, dim_a: usize, dim_b: usize) -> Result<CMatrix> {
    let n = dim_a * dim_b;
    if rho.nrows() != n || rho.ncols() != n {
        return Err(Error::InvalidDimension(format!(
            "state is {}x{}, split {dim_a}x{dim_b} needs {n}x{n}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let mut out = CMatrix::zeros(n, n);
    for i in 0..dim_a {
        for j in 0..dim_a {
            for k in 0..dim_b {
                for l in 0..dim_b {
                    out[(i * dim_b + k, j * dim_b + l)] = rho[(i * dim_b + l, j * dim_b + k)];
                }
            }
        }
    }
    Ok(out)
}

/// `log₂ ‖ρ^{T_B}‖_tr`.
pub fn log_negativity(rho: &CMatrix, dim_a: usize, dim_b: usize) -> Result<f64> {
    let pt = partial_transpose(rho, dim_a, dim_b)?;
    let norm: f64 = linalg::eigvalsh(&pt).iter().map(|v| v.abs()).sum();
    Ok(norm.log2())
}

/// Metrics reported for every final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub populations: Populations,
    pub purity: f64,
    pub oscillator_mana: Mana,
    pub cavity_oscillator_log_negativity: f64,
}

pub fn summarize(rho: &CMatrix, space: SpaceSpec, grid: GridSpec) -> Result<StateSummary> {
    let osc = partial_trace(rho, space, &[Subsystem::Oscillator])?;
    let co = partial_trace(rho, space, &[Subsystem::Cavity, Subsystem::Oscillator])?;
    Ok(StateSummary {
        populations: populations(rho, space),
        purity: purity(rho),
        oscillator_mana: cv_mana(&osc, grid)?,
        cavity_oscillator_log_negativity: log_negativity(&co, space.cavity_dim, space.osc_dim)?,
    })
}
