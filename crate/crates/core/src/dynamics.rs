//! Piecewise-constant control sequences, their propagation and the driven
//! steady state.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::SpaceSpec;
use crate::linalg::{self, CMatrix, C64, ZERO};
use crate::liouville::{
    build_hamiltonians, build_lindblad, build_preparation_hamiltonian, Generator, HamiltonianSet,
    SuperOp, N_CONTROLS,
};
use crate::model::{derive_frame, FrameParams, PhysicalParams};
use crate::sparse::{ChebyshevPlan, CsrMatrix};

/// Atom detuning from the drive used whenever the atom should sit out of the
/// dynamics, MHz.
pub const DEFAULT_FAR_DETUNING: f64 = -1000.0;
/// Detuning that brings the atom into resonance with the shifted cavity, MHz.
pub fn cavity_resonance(frame: &FrameParams) -> f64 {
    -frame.delta_r_prime
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: [f64; N_CONTROLS],
    pub upper: [f64; N_CONTROLS],
}

impl Bounds {
    /// Detuning ±1 GHz, drive quadratures ±R_max.
    pub fn for_params(params: &PhysicalParams) -> Self {
        Bounds {
            lower: [-1000.0, -params.r_max, -params.r_max],
            upper: [1000.0, params.r_max, params.r_max],
        }
    }

    pub fn unbounded() -> Self {
        Bounds {
            lower: [f64::NEG_INFINITY; N_CONTROLS],
            upper: [f64::INFINITY; N_CONTROLS],
        }
    }

    pub fn contains(&self, u: &[f64; N_CONTROLS]) -> bool {
        (0..N_CONTROLS).all(|j| {
            let slack = 1e-12 * self.lower[j].abs().max(self.upper[j].abs()).min(1e300);
            u[j] >= self.lower[j] - slack && u[j] <= self.upper[j] + slack
        })
    }

    pub fn clip(&self, u: &mut [f64; N_CONTROLS]) {
        for j in 0..N_CONTROLS {
            u[j] = u[j].clamp(self.lower[j], self.upper[j]);
        }
    }

    pub fn validate(&self) -> Result<()> {
        for j in 0..N_CONTROLS {
            if !(self.lower[j] <= self.upper[j]) {
                return Err(Error::Config(format!(
                    "control bound {j}: lower {} exceeds upper {}",
                    self.lower[j], self.upper[j]
                )));
            }
        }
        Ok(())
    }
}

/// Control amplitudes in MHz, one row per slot of width `tau` µs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence {
    pub tau: f64,
    pub u: Vec<[f64; N_CONTROLS]>,
    pub bounds: Bounds,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    slot: usize,
    t_start_us: f64,
    tau_us: f64,
    u_detuning: f64,
    #[serde(rename = "u_atomX")]
    u_atom_x: f64,
    #[serde(rename = "u_atomY")]
    u_atom_y: f64,
}

impl ControlSequence {
    pub fn new(tau: f64, u: Vec<[f64; N_CONTROLS]>, bounds: Bounds) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("slot width {tau} must be positive")));
        }
        bounds.validate()?;
        for (k, row) in u.iter().enumerate() {
            if !bounds.contains(row) {
                return Err(Error::InvalidArgument(format!(
                    "slot {k} amplitudes {row:?} outside bounds"
                )));
            }
        }
        Ok(ControlSequence { tau, u, bounds })
    }

    pub fn constant(n_slots: usize, tau: f64, value: [f64; N_CONTROLS], bounds: Bounds) -> Result<Self> {
        Self::new(tau, vec![value; n_slots], bounds)
    }

    pub fn n_slots(&self) -> usize {
        self.u.len()
    }

    pub fn duration(&self) -> f64 {
        self.tau * self.u.len() as f64
    }

    /// Slot-major flattening `[u_0^det, u_0^X, u_0^Y, u_1^det, ...]`.
    pub fn flat(&self) -> Vec<f64> {
        self.u.iter().flatten().copied().collect()
    }

    pub fn with_flat(&self, x: &[f64]) -> Self {
        assert_eq!(x.len(), self.n_slots() * N_CONTROLS);
        let u = x
            .chunks_exact(N_CONTROLS)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        ControlSequence {
            tau: self.tau,
            u,
            bounds: self.bounds,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for (k, u) in self.u.iter().enumerate() {
            wtr.serialize(CsvRow {
                slot: k,
                t_start_us: k as f64 * self.tau,
                tau_us: self.tau,
                u_detuning: u[0],
                u_atom_x: u[1],
                u_atom_y: u[2],
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, bounds: Bounds) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut u = Vec::new();
        let mut tau = None;
        for (k, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = row?;
            if row.slot != k {
                return Err(Error::Config(format!("slot {} found at row {k}", row.slot)));
            }
            match tau {
                None => tau = Some(row.tau_us),
                Some(t) if (t - row.tau_us).abs() > 1e-12 * t => {
                    return Err(Error::Config(format!(
                        "slot {k} has width {} but earlier slots {t}",
                        row.tau_us
                    )))
                }
                _ => {}
            }
            u.push([row.u_detuning, row.u_atom_x, row.u_atom_y]);
        }
        let tau = tau.ok_or_else(|| Error::Config("control sequence file has no slots".into()))?;
        Self::new(tau, u, bounds)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: &Path, bounds: Bounds) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, bounds)
    }
}

/// Everything needed to simulate one parameter set at one truncation.
#[derive(Debug, Clone)]
pub struct ModelContext {
    pub params: PhysicalParams,
    pub frame: FrameParams,
    pub space: SpaceSpec,
    pub generator: Generator,
    pub far_detuning: f64,
}

impl ModelContext {
    pub fn new(params: PhysicalParams, space: SpaceSpec) -> Result<Self> {
        params.validate()?;
        let frame = derive_frame(&params);
        let generator = Generator::from_model(&params, &frame, space, true)?;
        Ok(ModelContext {
            params,
            frame,
            space,
            generator,
            far_detuning: DEFAULT_FAR_DETUNING,
        })
    }

    /// Same model at another truncation.
    pub fn with_space(&self, space: SpaceSpec) -> Result<Self> {
        let mut ctx = Self::new(self.params.clone(), space)?;
        ctx.far_detuning = self.far_detuning;
        Ok(ctx)
    }

    /// `ω_a - ω_l` while the atom idles far detuned, MHz.
    pub fn idle_atom_laser_detuning(&self) -> f64 {
        self.frame.omega_r + self.far_detuning - self.frame.omega_l
    }

    /// Liouvillian of the laser-driven preparation stage whose null vector is
    /// the initial state (controls enter as in the control stage).
    pub fn preparation_generator(&self) -> Result<Generator> {
        let drift = build_preparation_hamiltonian(
            &self.params,
            &self.frame,
            self.space,
            self.idle_atom_laser_detuning(),
        )?;
        let controls = build_hamiltonians(&self.params, &self.frame, self.space)?.controls;
        let linds = build_lindblad(&self.params, self.space)?;
        Generator::new(&HamiltonianSet { drift, controls }, Some(&linds))
    }

    /// Generator without dissipation.
    pub fn closed_generator(&self) -> Result<Generator> {
        Generator::from_model(&self.params, &self.frame, self.space, false)
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::for_params(&self.params)
    }

    pub fn idle_controls(&self) -> [f64; N_CONTROLS] {
        [self.far_detuning, 0.0, 0.0]
    }

    pub fn liouvillian(&self, u: &[f64; N_CONTROLS]) -> SuperOp {
        self.generator.dense(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Dense `exp(tau L)` per distinct control vector.
    Dense,
    /// Sparse Chebyshev expansion of `exp(tau L) v` per slot.
    #[default]
    Chebyshev,
}

fn key(u: &[f64; N_CONTROLS]) -> [u64; N_CONTROLS] {
    [u[0].to_bits(), u[1].to_bits(), u[2].to_bits()]
}

enum Step {
    Dense(CMatrix),
    Sparse(CsrMatrix, ChebyshevPlan),
}

/// Applies single-slot propagators, caching them per distinct control vector.
pub struct Stepper<'a> {
    generator: &'a Generator,
    tau: f64,
    method: Method,
    cache: HashMap<[u64; N_CONTROLS], Step>,
}

impl<'a> Stepper<'a> {
    pub fn new(generator: &'a Generator, tau: f64, method: Method) -> Self {
        Stepper {
            generator,
            tau,
            method,
            cache: HashMap::new(),
        }
    }

    fn build(&self, u: &[f64; N_CONTROLS]) -> Step {
        if self.method == Method::Chebyshev {
            if let Some(plan) = ChebyshevPlan::new(&self.generator.spectral_box(u), self.tau) {
                return Step::Sparse(self.generator.sparse(u), plan);
            }
        }
        Step::Dense(linalg::expm(&self.generator.dense(u).matrix.scale(self.tau)))
    }

    /// `exp(tau L(u)) v`.
    pub fn apply(&mut self, u: &[f64; N_CONTROLS], v: &[C64]) -> Vec<C64> {
        let k = key(u);
        if !self.cache.contains_key(&k) {
            let step = self.build(u);
            self.cache.insert(k, step);
        }
        match &self.cache[&k] {
            Step::Dense(f) => {
                let n = v.len();
                let mut out = vec![ZERO; n];
                for (col, &x) in v.iter().enumerate() {
                    if x != ZERO {
                        for (o, fv) in out.iter_mut().zip(f.column(col).iter()) {
                            *o += fv * x;
                        }
                    }
                }
                out
            }
            Step::Sparse(a, plan) => plan.apply(a, v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub atom: Vec<f64>,
    pub cavity: Vec<f64>,
    pub oscillator: Vec<f64>,
}

/// Marginal Fock-level populations of each subsystem.
pub fn populations(rho: &CMatrix, space: SpaceSpec) -> Populations {
    let mut p = Populations {
        atom: vec![0.0; space.atom_dim],
        cavity: vec![0.0; space.cavity_dim],
        oscillator: vec![0.0; space.osc_dim],
    };
    for idx in 0..space.dim() {
        let [i, j, k] = space.levels(idx);
        let d = rho[(idx, idx)].re;
        p.atom[i] += d;
        p.cavity[j] += d;
        p.oscillator[k] += d;
    }
    p
}

pub fn purity(rho: &CMatrix) -> f64 {
    linalg::inner(rho, rho).re
}

/// `½ ‖a - b‖_tr`.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let d = a - b;
    if d.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return f64::NAN;
    }
    0.5 * linalg::eigvalsh(&linalg::hermitize(&d)).iter().map(|v| v.abs()).sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub space: SpaceSpec,
    pub times: Vec<f64>,
    pub states: Vec<CMatrix>,
    pub populations: Vec<Populations>,
    pub purity: Vec<f64>,
}

/// Serialized density matrices (column-major real and imaginary parts).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateBundle {
    pub space: SpaceSpec,
    pub dim: usize,
    pub layout: String,
    pub times: Vec<f64>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl StateBundle {
    pub fn new(space: SpaceSpec, times: Vec<f64>, states: &[CMatrix]) -> Self {
        StateBundle {
            space,
            dim: space.dim(),
            layout: "column-major".into(),
            times,
            re: states.iter().map(|s| s.iter().map(|z| z.re).collect()).collect(),
            im: states.iter().map(|s| s.iter().map(|z| z.im).collect()).collect(),
        }
    }

    pub fn states(&self) -> Result<Vec<CMatrix>> {
        let n = self.space.dim();
        if self.dim != n || self.re.len() != self.im.len() || self.re.len() != self.times.len() {
            return Err(Error::Config("state bundle shape is inconsistent".into()));
        }
        self.re
            .iter()
            .zip(&self.im)
            .map(|(re, im)| {
                if re.len() != n * n || im.len() != n * n {
                    return Err(Error::Config(format!("state needs {} entries", n * n)));
                }
                Ok(CMatrix::from_iterator(
                    n,
                    n,
                    re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)),
                ))
            })
            .collect()
    }
}

impl Trajectory {
    fn from_states(space: SpaceSpec, times: Vec<f64>, states: Vec<CMatrix>) -> Self {
        let populations = states.iter().map(|s| populations(s, space)).collect();
        let purity = states.iter().map(purity).collect();
        Trajectory {
            space,
            times,
            states,
            populations,
            purity,
        }
    }

    pub fn final_state(&self) -> &CMatrix {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Hermiticity, unit trace and positivity of every recorded state.
    pub fn check_physical(&self) -> Result<()> {
        for (t, s) in self.times.iter().zip(&self.states) {
            let herm = linalg::hermitian_deviation(s);
            let tr = linalg::trace(s);
            let min_eig = linalg::eigvalsh(s)[0];
            if herm > 1e-9 || (tr - 1.0).norm() > 1e-9 || min_eig < -1e-8 {
                return Err(Error::Numerical(format!(
                    "state at t = {t} µs is unphysical: hermiticity {herm:.2e}, trace {tr:.12}, min eigenvalue {min_eig:.2e}"
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["time_us".to_string()];
        for (name, d) in [
            ("atom", self.space.atom_dim),
            ("cavity", self.space.cavity_dim),
            ("osc", self.space.osc_dim),
        ] {
            header.extend((0..d).map(|k| format!("{name}_p{k}")));
        }
        header.push("purity".into());
        wtr.write_record(&header)?;
        for ((t, p), pur) in self.times.iter().zip(&self.populations).zip(&self.purity) {
            let mut row = vec![format!("{t}")];
            row.extend(
                p.atom
                    .iter()
                    .chain(&p.cavity)
                    .chain(&p.oscillator)
                    .map(|v| format!("{v}")),
            );
            row.push(format!("{pur}"));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn bundle(&self) -> StateBundle {
        StateBundle::new(self.space, self.times.clone(), &self.states)
    }
}

fn check_state(rho: &CMatrix, space: SpaceSpec) -> Result<()> {
    let n = space.dim();
    if rho.nrows() != n || rho.ncols() != n {
        return Err(Error::InvalidDimension(format!(
            "state is {}x{}, space {space} needs {n}x{n}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    Ok(())
}

/// Applies the slot propagators in order and records the state at every slot
/// boundary.
pub fn propagate_with(
    rho0: &CMatrix,
    seq: &ControlSequence,
    generator: &Generator,
    method: Method,
) -> Result<Trajectory> {
    let space = generator.space;
    check_state(rho0, space)?;
    let n = space.dim();
    let mut stepper = Stepper::new(generator, seq.tau, method);
    let mut v = rho0.as_slice().to_vec();
    let mut states = vec![rho0.clone()];
    let mut times = vec![0.0];
    for (k, u) in seq.u.iter().enumerate() {
        v = stepper.apply(u, &v);
        states.push(linalg::unvec(&v, n));
        times.push((k + 1) as f64 * seq.tau);
    }
    Ok(Trajectory::from_states(space, times, states))
}

pub fn propagate(rho0: &CMatrix, seq: &ControlSequence, ctx: &ModelContext) -> Result<Trajectory> {
    propagate_with(rho0, seq, &ctx.generator, Method::default())
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: CMatrix,
    /// Smallest eigenvalue modulus of the Liouvillian.
    pub smallest: f64,
    /// Next eigenvalue modulus.
    pub next: f64,
    /// `‖L vec ρ‖ / (‖L‖ ‖vec ρ‖)` in the Frobenius norm.
    pub residual: f64,
}

/// Null vector of `L(u)` from an LU solve with one row replaced by the trace
/// functional.
pub fn steady_state_for(generator: &Generator, u: &[f64; N_CONTROLS]) -> Result<SteadyState> {
    let l = generator.dense(u).matrix;
    let n = generator.space.dim();
    let mut moduli: Vec<f64> = linalg::eigenvalues(&l)?.iter().map(|z| z.norm()).collect();
    moduli.sort_by(f64::total_cmp);
    let (smallest, next) = (moduli[0], moduli[1]);
    if next - smallest < 1e-6 {
        return Err(Error::AmbiguousSteadyState { smallest, next });
    }
    let mut a = l.clone();
    for col in 0..n * n {
        a[(0, col)] = ZERO;
    }
    for i in 0..n {
        a[(0, i * n + i)] = C64::new(1.0, 0.0);
    }
    let mut rhs = linalg::CVector::zeros(n * n);
    rhs[0] = C64::new(1.0, 0.0);
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("steady-state system is singular".into()))?;
    let mut rho = linalg::hermitize(&linalg::unvec(x.as_slice(), n));
    let tr = linalg::trace(&rho);
    rho.unscale_mut(tr.re);
    let v = linalg::vec(&rho);
    let residual = (&l * &v).norm() / (linalg::frobenius(&l) * v.norm());
    if residual > 1e-9 {
        return Err(Error::Numerical(format!(
            "steady state fails the fixed-point check (relative residual {residual:.2e})"
        )));
    }
    Ok(SteadyState {
        rho,
        smallest,
        next,
        residual,
    })
}

/// Steady state of the preparation stage: laser on, atomic drive off, atom
/// far detuned.
pub fn steady_state(ctx: &ModelContext) -> Result<SteadyState> {
    steady_state_for(&ctx.preparation_generator()?, &[0.0; N_CONTROLS])
}

/// `exp(t L(u)) ρ0` by one dense exponential; for large `t` this relaxes any
/// initial state onto the steady state.
pub fn evolve_constant(generator: &Generator, u: &[f64; N_CONTROLS], rho0: &CMatrix, t: f64) -> Result<CMatrix> {
    check_state(rho0, generator.space)?;
    let f = linalg::expm(&generator.dense(u).matrix.scale(t));
    let v = &f * linalg::vec(rho0);
    Ok(linalg::unvec(v.as_slice(), generator.space.dim()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let b = Bounds::for_params(&PhysicalParams::set1());
        let seq = ControlSequence::new(0.005, vec![[1.0, -2.5, 3.0], [0.0, 31.0, -0.125]], b).unwrap();
        let mut buf = Vec::new();
        seq.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("slot,t_start_us,tau_us,u_detuning,u_atomX,u_atomY"));
        let back = ControlSequence::read_csv(buf.as_slice(), b).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn rejects_out_of_bounds_and_bad_tau() {
        let b = Bounds::for_params(&PhysicalParams::set1());
        assert!(ControlSequence::new(0.005, vec![[0.0, 40.0, 0.0]], b).is_err());
        assert!(ControlSequence::new(0.0, vec![[0.0, 0.0, 0.0]], b).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let b = Bounds::unbounded();
        let seq = ControlSequence::new(0.01, vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], b).unwrap();
        assert_eq!(seq.flat(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(seq.with_flat(&seq.flat()), seq);
    }

    #[test]
    fn populations_of_product_state() {
        let space = SpaceSpec::uniform(3).unwrap();
        let psi = crate::hilbert::fock_state(space, 1, 0, 2).unwrap();
        let p = populations(&crate::hilbert::projector(&psi), space);
        assert_eq!(p.atom, vec![0.0, 1.0]);
        assert_eq!(p.cavity, vec![1.0, 0.0, 0.0]);
        assert_eq!(p.oscillator, vec![0.0, 0.0, 1.0]);
    }
}
