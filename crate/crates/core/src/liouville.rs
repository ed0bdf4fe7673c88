//! Hamiltonians, jump operators and their column-stacked superoperators.
//!
//! With `vec` stacking columns, `vec(A X B) = (B^T ⊗ A) vec(X)`, so the
//! commutator and the dissipator become
//!
//! ```text
//! Ĥ = 1 ⊗ H - H^T ⊗ 1
//! Γ̂ = Σ conj(V) ⊗ V - ½ (1 ⊗ V†V + (V†V)^T ⊗ 1)
//! ```
//!
//! and the master equation reads `d vec(ρ)/dt = (-i Ĥ + Γ̂) vec(ρ)`.
//! Hamiltonians are in rad/µs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Ladder, Operator, SpaceSpec};
use crate::linalg::{self, c, CMatrix, C64, I, ONE, ZERO};
use crate::model::{thermal, FrameParams, PhysicalParams};
use crate::sparse::{CsrMatrix, CsrPattern, SpectralBox};

pub const N_CONTROLS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    Detuning,
    AtomX,
    AtomY,
}

impl Control {
    pub const ALL: [Control; N_CONTROLS] = [Control::Detuning, Control::AtomX, Control::AtomY];

    pub fn name(self) -> &'static str {
        match self {
            Control::Detuning => "u_detuning",
            Control::AtomX => "u_atomX",
            Control::AtomY => "u_atomY",
        }
    }
}

#[derive(Debug, Clone)]
pub struct HamiltonianSet {
    pub drift: Operator,
    /// Control Hamiltonians per unit amplitude (1 MHz), in the order of [`Control::ALL`].
    pub controls: [Operator; N_CONTROLS],
}

impl HamiltonianSet {
    /// `H_drift + Σ u_j H_j`.
    pub fn total(&self, u: &[f64; N_CONTROLS]) -> Operator {
        let mut m = self.drift.matrix.clone();
        for (h, &uj) in self.controls.iter().zip(u) {
            if uj != 0.0 {
                m += h.matrix.scale(uj);
            }
        }
        Operator {
            matrix: m,
            space: self.drift.space,
        }
    }
}

/// Drift and control Hamiltonians in the frame rotating at the drive
/// frequency, with the atom reference frequency equal to the drive frequency.
pub fn build_hamiltonians(
    params: &PhysicalParams,
    frame: &FrameParams,
    space: SpaceSpec,
) -> Result<HamiltonianSet> {
    let l = Ladder::new(space)?;
    let two_pi = 2.0 * PI;
    let (a, b, sm) = (&l.a, &l.b, &l.sm);
    let (ad, bd, sp) = (a.adjoint(), b.adjoint(), sm.adjoint());
    let mode_freq = frame.wc_prime - frame.omega_r;
    let hop = params.g_co * params.s;

    let n_modes = &(&ad * a) + &(&bd * b);
    let hopping = &(a * &bd) + &(&ad * b);
    let jc = &(a * &sp) + &(&ad * sm);
    let drift = n_modes.scale(two_pi * mode_freq) - hopping.scale(two_pi * hop)
        + jc.scale(two_pi * params.g_ac);

    let detuning = (&sp * sm).scale(two_pi);
    let atom_x = (&sp + sm).scale(PI);
    let atom_y = (&sp - sm).scale_complex(c(0.0, -PI));
    let set = HamiltonianSet {
        drift,
        controls: [detuning, atom_x, atom_y],
    };
    for h in std::iter::once(&set.drift).chain(set.controls.iter()) {
        check_hermitian(h)?;
    }
    Ok(set)
}

/// Hamiltonian of the preparation stage, in the frame rotating at the laser
/// frequency for cavity, oscillator and atom: both the hopping and the
/// two-mode-squeezing halves of `-g₀s Q q` are kept, together with the weak
/// `-g₀ a†a q` term. `atom_detuning` is `ω_a - ω_l` in MHz. The drive term
/// `g s (σ₊ + σ₋)` is left out, as in the drift of the control stage.
pub fn build_preparation_hamiltonian(
    params: &PhysicalParams,
    frame: &FrameParams,
    space: SpaceSpec,
    atom_detuning: f64,
) -> Result<Operator> {
    let l = Ladder::new(space)?;
    let two_pi = 2.0 * PI;
    let (a, b, sm) = (&l.a, &l.b, &l.sm);
    let (ad, bd, sp) = (a.adjoint(), b.adjoint(), sm.adjoint());
    let na = &ad * a;
    let q = b + &bd;
    let big_q = a + &ad;
    let h = na.scale(-two_pi * frame.delta_prime) + (&bd * b).scale(two_pi * params.om)
        - (&big_q * &q).scale(two_pi * params.g_co * params.s)
        - (&na * &q).scale(two_pi * params.g_co)
        + (&sp * sm).scale(two_pi * atom_detuning)
        + (&(a * &sp) + &(&ad * sm)).scale(two_pi * params.g_ac);
    check_hermitian(&h)?;
    Ok(h)
}

fn check_hermitian(h: &Operator) -> Result<()> {
    let dev = h.hermitian_deviation();
    if dev > 1e-12 * linalg::max_abs(&h.matrix).max(1.0) {
        return Err(Error::NotHermitian(dev));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LindbladSet {
    pub labels: Vec<&'static str>,
    /// Jump operators with the square root of the angular rate folded in.
    pub ops: Vec<Operator>,
}

/// Cavity decay, oscillator emission and absorption, atomic decay.
pub fn build_lindblad(params: &PhysicalParams, space: SpaceSpec) -> Result<LindbladSet> {
    let l = Ladder::new(space)?;
    let th = thermal(params);
    let two_pi = 2.0 * PI;
    let rates = [
        params.kappa,
        th.gamma_eff,
        th.gamma_eff * th.x,
        params.kappa_a,
    ];
    let ops = [l.a.clone(), l.b.clone(), l.b.adjoint(), l.sm.clone()]
        .into_iter()
        .zip(rates)
        .map(|(op, rate)| op.scale((two_pi * rate).sqrt()))
        .collect();
    Ok(LindbladSet {
        labels: vec!["cavity decay", "oscillator decay", "oscillator heating", "atom decay"],
        ops,
    })
}

/// Column-stacked superoperator on an N-level space (matrix N²×N²).
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOp {
    pub matrix: CMatrix,
    pub space: SpaceSpec,
}

impl SuperOp {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let n = self.space.dim();
        let v = &self.matrix * linalg::vec(rho);
        linalg::unvec(v.as_slice(), n)
    }
}

/// `1 ⊗ H - H^T ⊗ 1`.
pub fn commutator_superop(h: &CMatrix) -> CMatrix {
    let n = h.nrows();
    let id = linalg::identity(n);
    linalg::kron(&id, h) - linalg::kron(&h.transpose(), &id)
}

/// `Σ conj(V) ⊗ V - ½ (1 ⊗ V†V + (V†V)^T ⊗ 1)`.
pub fn dissipator_superop<'a>(ops: impl IntoIterator<Item = &'a CMatrix>, n: usize) -> CMatrix {
    let id = linalg::identity(n);
    let mut d = CMatrix::zeros(n * n, n * n);
    for v in ops {
        let vdv = v.adjoint() * v;
        d += linalg::kron(&v.conjugate(), v);
        d -= (linalg::kron(&id, &vdv) + linalg::kron(&vdv.transpose(), &id)).scale(0.5);
    }
    d
}

/// `-i Ĥ + Γ̂` for a Hermitian total Hamiltonian.
pub fn vectorize_liouvillian(h_total: &Operator, linds: &LindbladSet) -> Result<SuperOp> {
    check_hermitian(h_total)?;
    let n = h_total.dim();
    for v in &linds.ops {
        if v.dim() != n {
            return Err(Error::InvalidDimension(format!(
                "jump operator is {}x{}, Hamiltonian {n}x{n}",
                v.dim(),
                v.dim()
            )));
        }
    }
    let matrix = commutator_superop(&h_total.matrix) * c(0.0, -1.0)
        + dissipator_superop(linds.ops.iter().map(|v| &v.matrix), n);
    Ok(SuperOp {
        matrix,
        space: h_total.space,
    })
}

/// `exp(tau L)`.
pub fn propagator(l: &SuperOp, tau: f64) -> Result<SuperOp> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("slot duration {tau} is negative")));
    }
    Ok(SuperOp {
        matrix: linalg::expm(&l.matrix.scale(tau)),
        space: l.space,
    })
}

/// One-sided difference `(exp(tau (L - i delta Ĥ_j)) - exp(tau L)) / delta`.
pub fn propagator_derivative(
    l: &SuperOp,
    h_j: &SuperOp,
    tau: f64,
    delta: f64,
) -> Result<CMatrix> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("step {delta} must be positive")));
    }
    let base = propagator(l, tau)?;
    let moved = SuperOp {
        matrix: &l.matrix + h_j.matrix.map(|z| z * c(0.0, -delta)),
        space: l.space,
    };
    let moved = propagator(&moved, tau)?;
    Ok((moved.matrix - base.matrix).unscale(delta))
}

/// `‖L L† - L† L‖ / ‖L‖²` in the Frobenius norm.
pub fn normality_defect(l: &CMatrix) -> f64 {
    let ld = l.adjoint();
    let comm = linalg::matmul(l, &ld) - linalg::matmul(&ld, l);
    let norm = linalg::frobenius(l);
    if norm == 0.0 {
        0.0
    } else {
        linalg::frobenius(&comm) / (norm * norm)
    }
}

/// Divided difference `(e^{tau a} - e^{tau b}) / (a - b)`, with the confluent
/// limit `tau e^{tau a}` for (nearly) equal arguments.
pub fn exp_divided_difference(a: C64, b: C64, tau: f64) -> C64 {
    let d = a - b;
    if d.norm() < 1e-10 {
        return (a * tau).exp() * tau;
    }
    let ea = (a * tau).exp();
    if (d * tau).norm() < 1e-3 {
        // e^{tau b} (e^{tau d} - 1) / d, series for small tau d
        let z = d * tau;
        let mut term = ONE;
        let mut sum = ONE;
        for k in 2..12 {
            term *= z / k as f64;
            sum += term;
        }
        return (b * tau).exp() * sum * tau;
    }
    (ea - (b * tau).exp()) / d
}

/// Exact derivative of `exp(tau L(u))` along `dL/du = -i Ĥ_j` for a normal
/// generator, from its unitary eigenbasis.
pub fn propagator_derivative_spectral(l: &SuperOp, h_j: &SuperOp, tau: f64) -> Result<CMatrix> {
    let defect = normality_defect(&l.matrix);
    if defect > 1e-8 {
        return Err(Error::NotNormal(defect));
    }
    let n = l.dim();
    if tau == 0.0 {
        return Ok(CMatrix::zeros(n, n));
    }
    let (q, t) = linalg::schur(&l.matrix)?;
    let lambda: Vec<C64> = t.diagonal().iter().copied().collect();
    let dl = h_j.matrix.map(|z| z * -I);
    let mut g = linalg::matmul(&q.adjoint(), &linalg::matmul(&dl, &q));
    for b in 0..n {
        for a in 0..n {
            g[(a, b)] *= exp_divided_difference(lambda[a], lambda[b], tau);
        }
    }
    Ok(linalg::matmul(&q, &linalg::matmul(&g, &q.adjoint())))
}

/// Choi matrix `Σ |i><j| ⊗ F(|i><j|)` of a column-stacked map on an
/// `n`-level space.
pub fn choi(f: &CMatrix, n: usize) -> CMatrix {
    let mut out = CMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let col = j * n + i;
            for k in 0..n {
                for l in 0..n {
                    out[(i * n + k, j * n + l)] = f[(l * n + k, col)];
                }
            }
        }
    }
    out
}

/// The generator family `L(u) = L_0 + Σ u_j C_j` of the bilinear control
/// system, kept both dense and on a shared sparse pattern.
#[derive(Debug, Clone)]
pub struct Generator {
    pub space: SpaceSpec,
    /// `L_0 = -i Ĥ_drift + Γ̂` (Γ̂ omitted for a closed system).
    pub drift: CMatrix,
    /// `C_j = -i Ĥ_j`.
    pub controls: [CMatrix; N_CONTROLS],
    /// `Ĥ_j`, as taken by the propagator derivatives.
    pub control_superops: [SuperOp; N_CONTROLS],
    pub dissipative: bool,
    hams: HamiltonianSet,
    /// Largest eigenvalue of `Σ V†V`.
    jump_norm: f64,
    pattern: CsrPattern,
    drift_values: Vec<C64>,
    control_values: [Vec<C64>; N_CONTROLS],
}

impl Generator {
    pub fn new(hams: &HamiltonianSet, linds: Option<&LindbladSet>) -> Result<Self> {
        let space = hams.drift.space;
        let n = space.dim();
        let mut drift = commutator_superop(&hams.drift.matrix) * -I;
        let mut jump_norm = 0.0;
        if let Some(linds) = linds {
            drift += dissipator_superop(linds.ops.iter().map(|v| &v.matrix), n);
            let mut sum = CMatrix::zeros(n, n);
            for v in &linds.ops {
                sum += v.matrix.adjoint() * &v.matrix;
            }
            jump_norm = linalg::eigvalsh(&sum).last().copied().unwrap_or(0.0).max(0.0);
        }
        let control_superops =
            hams.controls.clone().map(|h| SuperOp {
                matrix: commutator_superop(&h.matrix),
                space,
            });
        let controls = control_superops.clone().map(|s| s.matrix * -I);
        let pattern = CsrPattern::from_dense(&[
            &drift,
            &controls[0],
            &controls[1],
            &controls[2],
            &linalg::identity(n * n),
        ]);
        let drift_values = pattern.gather(&drift);
        let control_values = [
            pattern.gather(&controls[0]),
            pattern.gather(&controls[1]),
            pattern.gather(&controls[2]),
        ];
        Ok(Generator {
            space,
            drift,
            controls,
            control_superops,
            dissipative: linds.is_some(),
            hams: hams.clone(),
            jump_norm,
            pattern,
            drift_values,
            control_values,
        })
    }

    pub fn from_model(
        params: &PhysicalParams,
        frame: &FrameParams,
        space: SpaceSpec,
        dissipative: bool,
    ) -> Result<Self> {
        let hams = build_hamiltonians(params, frame, space)?;
        if dissipative {
            let linds = build_lindblad(params, space)?;
            Self::new(&hams, Some(&linds))
        } else {
            Self::new(&hams, None)
        }
    }

    /// Side length N² of the superoperators.
    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn dense(&self, u: &[f64; N_CONTROLS]) -> SuperOp {
        let mut m = self.drift.clone();
        for (cj, &uj) in self.controls.iter().zip(u) {
            if uj != 0.0 {
                m += cj.scale(uj);
            }
        }
        SuperOp {
            matrix: m,
            space: self.space,
        }
    }

    pub fn sparse(&self, u: &[f64; N_CONTROLS]) -> CsrMatrix {
        let mut values = self.drift_values.clone();
        for (cv, &uj) in self.control_values.iter().zip(u) {
            if uj != 0.0 {
                for (v, x) in values.iter_mut().zip(cv) {
                    *v += x * uj;
                }
            }
        }
        self.pattern.with_values(values)
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    pub fn hamiltonians(&self) -> &HamiltonianSet {
        &self.hams
    }

    /// Box containing the spectrum of `L(u)`: the commutator contributes
    /// `±i (E_max - E_min)`, the dissipator at most `2‖Σ V†V‖` of decay and
    /// `‖Σ V†V‖` of frequency shift.
    pub fn spectral_box(&self, u: &[f64; N_CONTROLS]) -> SpectralBox {
        let e = linalg::eigvalsh(&self.hams.total(u).matrix);
        let spread = e.last().copied().unwrap_or(0.0) - e.first().copied().unwrap_or(0.0);
        let half = spread + self.jump_norm;
        SpectralBox {
            re_min: -2.0 * self.jump_norm,
            re_max: 0.0,
            im_min: -half,
            im_max: half,
        }
    }
}

/// `vec(1)^dagger L`, which vanishes for a trace-preserving generator.
pub fn trace_defect(l: &CMatrix, n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for col in 0..l.ncols() {
        let mut s = ZERO;
        for i in 0..n {
            s += l[(i * n + i, col)];
        }
        worst = worst.max(s.norm());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::annihilator;
    use crate::model::derive_frame;

    fn set1_hams(dim: usize) -> (PhysicalParams, HamiltonianSet) {
        let p = PhysicalParams::set1();
        let f = derive_frame(&p);
        let h = build_hamiltonians(&p, &f, SpaceSpec::uniform(dim).unwrap()).unwrap();
        (p, h)
    }

    #[test]
    fn drift_hopping_coefficient_and_mode_symmetry() {
        let (p, h) = set1_hams(3);
        let space = h.drift.space;
        let i010 = space.index(0, 1, 0).unwrap();
        let i001 = space.index(0, 0, 1).unwrap();
        let hop = h.drift.matrix[(i001, i010)];
        assert!((hop.re + 2.0 * PI * 1.2).abs() < 2.0 * PI * 0.01, "{hop}");
        assert!((hop.re + 2.0 * PI * p.g_co * p.s).abs() < 1e-12);
        let diff = h.drift.matrix[(i010, i010)] - h.drift.matrix[(i001, i001)];
        assert_eq!(diff, ZERO);
    }

    #[test]
    fn atom_x_control_norm() {
        let (_, h) = set1_hams(3);
        let ev = linalg::eigvalsh(&h.controls[1].matrix);
        let top = ev.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!((top - PI).abs() < 1e-12);
    }

    #[test]
    fn damped_two_level_mode() {
        let kappa: f64 = 0.7;
        let a = annihilator(2).unwrap().scale(kappa.sqrt());
        let d = dissipator_superop([&a], 2);
        let mut ev: Vec<f64> = linalg::eigenvalues(&d).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        let want = [-kappa, -kappa / 2.0, -kappa / 2.0, 0.0];
        for (g, w) in ev.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{ev:?}");
        }
        let f = linalg::expm(&d.scale(1.0 / kappa));
        let rho = linalg::unvec(&[ZERO, ZERO, ZERO, ONE], 2);
        let out = linalg::unvec((f * linalg::vec(&rho)).as_slice(), 2);
        assert!((out[(1, 1)].re - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn closed_liouvillian_has_imaginary_spectrum() {
        let (_, h) = set1_hams(2);
        let none = LindbladSet {
            labels: vec![],
            ops: vec![],
        };
        let l = vectorize_liouvillian(&h.drift, &none).unwrap();
        let herm = l.matrix.map(|z| z * I);
        assert!(linalg::hermitian_deviation(&herm) < 1e-9);
    }

    #[test]
    fn rejects_non_hermitian() {
        let (_, h) = set1_hams(2);
        let mut bad = h.drift.clone();
        bad.matrix[(0, 1)] += c(1.0, 0.0);
        let none = LindbladSet {
            labels: vec![],
            ops: vec![],
        };
        assert!(matches!(
            vectorize_liouvillian(&bad, &none),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn propagator_edge_cases() {
        let (p, h) = set1_hams(2);
        let linds = build_lindblad(&p, h.drift.space).unwrap();
        let l = vectorize_liouvillian(&h.drift, &linds).unwrap();
        let f0 = propagator(&l, 0.0).unwrap();
        assert!(linalg::max_abs_diff(&f0.matrix, &linalg::identity(l.dim())) < 1e-15);
        assert!(propagator(&l, -1.0).is_err());
        assert!(propagator_derivative(&l, &l, 0.01, 0.0).is_err());
    }

    #[test]
    fn divided_difference_branches() {
        let a = c(-0.3, 2.0);
        let tau = 0.7;
        let conf = exp_divided_difference(a, a, tau);
        assert!((conf - (a * tau).exp() * tau).norm() < 1e-15);
        let b = a + c(1e-6, 0.0);
        let near = exp_divided_difference(a, b, tau);
        assert!((near - conf).norm() < 1e-6);
        let far = exp_divided_difference(a, c(1.0, 0.0), tau);
        let want = ((a * tau).exp() - c(tau, 0.0).exp()) / (a - c(1.0, 0.0));
        assert!((far - want).norm() < 1e-14);
    }

    #[test]
    fn generator_dense_and_sparse_agree() {
        let p = PhysicalParams::set1();
        let f = derive_frame(&p);
        let g = Generator::from_model(&p, &f, SpaceSpec::uniform(2).unwrap(), true).unwrap();
        let u = [3.0, -1.5, 0.25];
        let d = g.dense(&u);
        let s = g.sparse(&u).to_dense();
        assert!(linalg::max_abs_diff(&d.matrix, &s) < 1e-12);
        assert!(trace_defect(&d.matrix, 8) < 1e-12);
    }
}
