//! Optimal control of the piecewise-constant amplitudes: distance-plus-leakage
//! cost, adjoint gradients, projected BFGS and seeded multi-restart runs.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::bfgs::{self, BfgsOptions, Termination};
use crate::dynamics::{Bounds, ControlSequence, Method, ModelContext};
use crate::error::{Error, Result};
use crate::hilbert::{embed, fock, projector, SpaceSpec, Subsystem};
use crate::linalg::{self, CMatrix, CVector, C64, ZERO};
use crate::liouville::{exp_divided_difference, Generator, HamiltonianSet, N_CONTROLS};
use crate::sparse::{ChebyshevPlan, CsrMatrix};

/// Pure target state, given on the kept factors and padded with ground
/// states on the rest for the full-space form.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub name: String,
    pub keep: Vec<Subsystem>,
    pub reduced: CVector,
    pub full: CVector,
}

fn kept_sorted(keep: &[Subsystem]) -> Vec<Subsystem> {
    let mut k = keep.to_vec();
    k.sort();
    k.dedup();
    k
}

impl Target {
    pub fn from_reduced(name: &str, space: SpaceSpec, keep: &[Subsystem], reduced: CVector) -> Result<Self> {
        let keep = kept_sorted(keep);
        if keep.is_empty() {
            return Err(Error::InvalidArgument("target must keep at least one subsystem".into()));
        }
        let dims = space.dims();
        let mask: Vec<bool> = Subsystem::ALL.iter().map(|s| keep.contains(s)).collect();
        let m: usize = (0..3).filter(|&k| mask[k]).map(|k| dims[k]).product();
        if reduced.len() != m {
            return Err(Error::InvalidDimension(format!(
                "target '{name}' has {} amplitudes, kept factors need {m}",
                reduced.len()
            )));
        }
        let norm = reduced.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("target '{name}' has norm {norm}")));
        }
        let mut full = CVector::zeros(space.dim());
        for i in 0..space.dim() {
            let l = space.levels(i);
            if (0..3).all(|k| mask[k] || l[k] == 0) {
                let r = (0..3).filter(|&k| mask[k]).fold(0, |acc, k| acc * dims[k] + l[k]);
                full[i] = reduced[r];
            }
        }
        Ok(Target {
            name: name.to_string(),
            keep,
            reduced,
            full,
        })
    }

    /// Oscillator Fock state |1⟩.
    pub fn fock1(space: SpaceSpec) -> Result<Self> {
        Self::from_reduced("fock1", space, &[Subsystem::Oscillator], fock(space.osc_dim, 1)?)
    }

    /// `(|0,1⟩ + |1,0⟩)/√2` of cavity and oscillator.
    pub fn noon11(space: SpaceSpec) -> Result<Self> {
        let od = space.osc_dim;
        let mut psi = CVector::zeros(space.cavity_dim * od);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        psi[1] = C64::new(h, 0.0);
        psi[od] = C64::new(h, 0.0);
        if od < 2 || space.cavity_dim < 2 {
            return Err(Error::InvalidDimension("noon11 needs two levels per mode".into()));
        }
        Self::from_reduced("noon11", space, &[Subsystem::Cavity, Subsystem::Oscillator], psi)
    }

    pub fn by_name(name: &str, space: SpaceSpec) -> Result<Self> {
        match name {
            "fock1" => Self::fock1(space),
            "noon11" => Self::noon11(space),
            other => Err(Error::Config(format!("unknown target '{other}' (use fock1 or noon11)"))),
        }
    }

    /// Fidelity of the reduced state with the reduced target.
    pub fn fidelity(&self, rho: &CMatrix, space: SpaceSpec) -> Result<f64> {
        let r = analysis::partial_trace(rho, space, &self.keep)?;
        analysis::fidelity(&r, &self.reduced)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    /// `ρ_T` on the full space, or on `reduce_to` when set.
    pub target: CMatrix,
    pub penalty_weight: f64,
    pub penalized_levels: Vec<(Subsystem, usize)>,
    pub reduce_to: Option<Vec<Subsystem>>,
}

pub const DEFAULT_PENALTY_WEIGHT: f64 = 10.0;

impl CostConfig {
    /// Top Fock level of the cavity and of the oscillator.
    pub fn default_penalized(space: SpaceSpec) -> Vec<(Subsystem, usize)> {
        vec![
            (Subsystem::Cavity, space.cavity_dim - 1),
            (Subsystem::Oscillator, space.osc_dim - 1),
        ]
    }

    pub fn for_target(target: &Target, space: SpaceSpec, reduced: bool, penalty_weight: f64) -> Result<Self> {
        let cfg = if reduced {
            CostConfig {
                target: projector(&target.reduced),
                penalty_weight,
                penalized_levels: Self::default_penalized(space),
                reduce_to: Some(target.keep.clone()),
            }
        } else {
            CostConfig {
                target: projector(&target.full),
                penalty_weight,
                penalized_levels: Self::default_penalized(space),
                reduce_to: None,
            }
        };
        cfg.validate(space)?;
        Ok(cfg)
    }

    pub fn validate(&self, space: SpaceSpec) -> Result<()> {
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return Err(Error::Config(format!(
                "penalty weight must be nonnegative, got {}",
                self.penalty_weight
            )));
        }
        for &(s, n) in &self.penalized_levels {
            if n >= space.dim_of(s) {
                return Err(Error::Config(format!(
                    "penalized level {n} of the {s} exceeds its truncation {}",
                    space.dim_of(s)
                )));
            }
        }
        let m = match &self.reduce_to {
            Some(keep) => {
                let keep = kept_sorted(keep);
                if keep.is_empty() {
                    return Err(Error::Config("reduce_to must name at least one subsystem".into()));
                }
                keep.iter().map(|&s| space.dim_of(s)).product()
            }
            None => space.dim(),
        };
        if self.target.nrows() != m || self.target.ncols() != m {
            return Err(Error::InvalidDimension(format!(
                "target operator is {}x{}, expected {m}x{m}",
                self.target.nrows(),
                self.target.ncols()
            )));
        }
        Ok(())
    }

    fn reduce(&self, rho: &CMatrix, space: SpaceSpec) -> CMatrix {
        match &self.reduce_to {
            Some(keep) => analysis::partial_trace(rho, space, keep).expect("validated dimensions"),
            None => rho.clone(),
        }
    }

    /// `½‖ρ‖²_F - Re tr(ρ_T† ρ)` on the (optionally reduced) final state.
    pub fn distance(&self, rho: &CMatrix, space: SpaceSpec) -> f64 {
        let r = self.reduce(rho, space);
        0.5 * linalg::inner(&r, &r).re - linalg::inner(&self.target, &r).re
    }

    /// Gradient of [`CostConfig::distance`] with respect to the full final
    /// state.
    pub fn distance_gradient(&self, rho: &CMatrix, space: SpaceSpec) -> CMatrix {
        let r = self.reduce(rho, space);
        let g = r - &self.target;
        match &self.reduce_to {
            Some(keep) => analysis::partial_trace_adjoint(&g, space, keep).expect("validated dimensions"),
            None => g,
        }
    }

    /// Sum of the projectors onto the penalized levels.
    pub fn penalty_operator(&self, space: SpaceSpec) -> Result<CMatrix> {
        let n = space.dim();
        let mut p = CMatrix::zeros(n, n);
        for &(s, level) in &self.penalized_levels {
            p += embed(&projector(&fock(space.dim_of(s), level)?), s, space)?.matrix;
        }
        Ok(p)
    }
}

/// Trapezoid weights over the `n + 1` slot boundaries.
fn trapezoid(n: usize, tau: f64) -> Vec<f64> {
    (0..=n)
        .map(|k| if k == 0 || k == n { 0.5 * tau } else { tau })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    /// `½‖ρ(T)‖² - Re tr(ρ_T† ρ(T))`.
    pub distance: f64,
    /// `λ ∫ tr(Π ρ(t)) dt`.
    pub penalty: f64,
    /// Largest penalized population over the slot boundaries.
    pub max_penalized: f64,
}

fn real_inner(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn dense_matvec(f: &CMatrix, v: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; v.len()];
    for (col, &x) in v.iter().enumerate() {
        if x != ZERO {
            for (o, fv) in out.iter_mut().zip(f.column(col).iter()) {
                *o += fv * x;
            }
        }
    }
    out
}

enum SlotProp {
    Sparse(CsrMatrix, ChebyshevPlan),
    Dense(CMatrix, CMatrix),
}

/// Cost and gradient of a sequence under the full (or closed) Liouvillian.
pub struct Objective<'a> {
    generator: &'a Generator,
    rho0: &'a CMatrix,
    cfg: &'a CostConfig,
    tau: f64,
    method: Method,
    penalty: Vec<C64>,
    control_csr: Vec<CsrMatrix>,
}

impl<'a> Objective<'a> {
    pub fn new(
        generator: &'a Generator,
        rho0: &'a CMatrix,
        cfg: &'a CostConfig,
        tau: f64,
        method: Method,
    ) -> Result<Self> {
        let space = generator.space;
        cfg.validate(space)?;
        if rho0.nrows() != space.dim() || rho0.ncols() != space.dim() {
            return Err(Error::InvalidDimension(format!(
                "initial state is {}x{}, space {space} needs {n}x{n}",
                rho0.nrows(),
                rho0.ncols(),
                n = space.dim()
            )));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("slot width {tau} must be positive")));
        }
        let penalty = cfg.penalty_operator(space)?.as_slice().to_vec();
        let control_csr = generator.controls.iter().map(CsrMatrix::from_dense).collect();
        Ok(Objective {
            generator,
            rho0,
            cfg,
            tau,
            method,
            penalty,
            control_csr,
        })
    }

    fn slot(&self, u: &[f64; N_CONTROLS]) -> SlotProp {
        if self.method == Method::Chebyshev {
            if let Some(plan) = ChebyshevPlan::new(&self.generator.spectral_box(u), self.tau) {
                return SlotProp::Sparse(self.generator.sparse(u), plan);
            }
        }
        let l = self.generator.dense(u).matrix.scale(self.tau);
        SlotProp::Dense(linalg::expm(&l), l)
    }

    fn apply(&self, p: &SlotProp, v: &[C64]) -> Vec<C64> {
        match p {
            SlotProp::Sparse(a, plan) => plan.apply(a, v),
            SlotProp::Dense(f, _) => dense_matvec(f, v),
        }
    }

    fn apply_adjoint(&self, p: &SlotProp, v: &[C64]) -> Vec<C64> {
        match p {
            SlotProp::Sparse(a, plan) => plan.adjoint().apply(&a.adjoint(), v),
            SlotProp::Dense(f, _) => dense_matvec(&f.adjoint(), v),
        }
    }

    /// `F ρ` and `(∂F/∂u_j) ρ` for every channel.
    fn apply_with_derivatives(&self, p: &SlotProp, v: &[C64]) -> (Vec<C64>, Vec<Vec<C64>>) {
        match p {
            SlotProp::Sparse(a, plan) => {
                let dirs: Vec<&CsrMatrix> = self.control_csr.iter().collect();
                plan.apply_with_derivatives(a, &dirs, v)
            }
            SlotProp::Dense(f, l) => {
                // exp([[τL, τC_j], [0, τL]]) carries the Fréchet derivative in
                // its upper right block
                let n = l.nrows();
                let derivs = self
                    .generator
                    .controls
                    .iter()
                    .map(|cj| {
                        let mut block = CMatrix::zeros(2 * n, 2 * n);
                        block.view_mut((0, 0), (n, n)).copy_from(l);
                        block.view_mut((n, n), (n, n)).copy_from(l);
                        block.view_mut((0, n), (n, n)).copy_from(&cj.scale(self.tau));
                        let e = linalg::expm(&block);
                        dense_matvec(&e.view((0, n), (n, n)).into_owned(), v)
                    })
                    .collect();
                (dense_matvec(f, v), derivs)
            }
        }
    }

    fn forward(&self, props: &[SlotProp]) -> Vec<Vec<C64>> {
        let mut states = Vec::with_capacity(props.len() + 1);
        states.push(self.rho0.as_slice().to_vec());
        for p in props {
            let next = self.apply(p, states.last().unwrap());
            states.push(next);
        }
        states
    }

    fn breakdown(&self, states: &[Vec<C64>]) -> CostBreakdown {
        let space = self.generator.space;
        let n = space.dim();
        let w = trapezoid(states.len() - 1, self.tau);
        let mut integral = 0.0;
        let mut max_penalized: f64 = 0.0;
        for (s, wk) in states.iter().zip(&w) {
            let p = real_inner(&self.penalty, s);
            integral += wk * p;
            max_penalized = max_penalized.max(p);
        }
        let rho_t = linalg::unvec(states.last().unwrap(), n);
        let distance = self.cfg.distance(&rho_t, space);
        let penalty = self.cfg.penalty_weight * integral;
        CostBreakdown {
            total: distance + penalty,
            distance,
            penalty,
            max_penalized,
        }
    }

    fn build(&self, u: &[[f64; N_CONTROLS]]) -> Vec<SlotProp> {
        u.par_iter().map(|uk| self.slot(uk)).collect()
    }

    pub fn cost(&self, u: &[[f64; N_CONTROLS]]) -> CostBreakdown {
        let props = self.build(u);
        self.breakdown(&self.forward(&props))
    }

    /// States at every slot boundary.
    pub fn trajectory(&self, u: &[[f64; N_CONTROLS]]) -> Vec<CMatrix> {
        let props = self.build(u);
        let n = self.generator.space.dim();
        self.forward(&props).iter().map(|v| linalg::unvec(v, n)).collect()
    }

    pub fn final_state(&self, u: &[[f64; N_CONTROLS]]) -> CMatrix {
        self.trajectory(u).pop().expect("initial state is always present")
    }

    /// Cost and its gradient, `grad[k][j] = ∂cost/∂u_j(t_k)` per MHz, from
    /// the backward costate recursion and the exact slot derivatives of the
    /// propagator as evaluated.
    pub fn cost_and_gradient(&self, u: &[[f64; N_CONTROLS]]) -> (CostBreakdown, Vec<[f64; N_CONTROLS]>) {
        let n_slots = u.len();
        let space = self.generator.space;
        let props = self.build(u);
        let mut states = Vec::with_capacity(n_slots + 1);
        let mut derivs = Vec::with_capacity(n_slots);
        states.push(self.rho0.as_slice().to_vec());
        for p in &props {
            let (next, d) = self.apply_with_derivatives(p, states.last().unwrap());
            states.push(next);
            derivs.push(d);
        }
        let cost = self.breakdown(&states);
        if n_slots == 0 {
            return (cost, Vec::new());
        }
        let w = trapezoid(n_slots, self.tau);
        let lambda = self.cfg.penalty_weight;
        let rho_t = linalg::unvec(&states[n_slots], space.dim());
        let mut mu: Vec<C64> = self.cfg.distance_gradient(&rho_t, space).as_slice().to_vec();
        for (m, p) in mu.iter_mut().zip(&self.penalty) {
            *m += p * (lambda * w[n_slots]);
        }
        let mut grad = vec![[0.0; N_CONTROLS]; n_slots];
        for k in (0..n_slots).rev() {
            // mu is the costate at boundary k + 1, paired with slot k
            for (j, gj) in grad[k].iter_mut().enumerate() {
                *gj = real_inner(&mu, &derivs[k][j]);
            }
            if k > 0 {
                mu = self.apply_adjoint(&props[k], &mu);
                for (m, p) in mu.iter_mut().zip(&self.penalty) {
                    *m += p * (lambda * w[k]);
                }
            }
        }
        (cost, grad)
    }
}

/// Closed-system cost and exact gradient on the Hilbert space, with slot
/// unitaries from the Hamiltonian eigenbasis.
pub struct UnitaryObjective<'a> {
    hams: &'a HamiltonianSet,
    space: SpaceSpec,
    rho0: &'a CMatrix,
    cfg: &'a CostConfig,
    tau: f64,
    penalty: CMatrix,
}

struct UnitarySlot {
    energies: Vec<f64>,
    vectors: CMatrix,
    u: CMatrix,
}

impl<'a> UnitaryObjective<'a> {
    pub fn new(hams: &'a HamiltonianSet, rho0: &'a CMatrix, cfg: &'a CostConfig, tau: f64) -> Result<Self> {
        let space = hams.drift.space;
        cfg.validate(space)?;
        if rho0.nrows() != space.dim() || rho0.ncols() != space.dim() {
            return Err(Error::InvalidDimension(format!(
                "initial state is {}x{}, space {space} needs {n}x{n}",
                rho0.nrows(),
                rho0.ncols(),
                n = space.dim()
            )));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("slot width {tau} must be positive")));
        }
        Ok(UnitaryObjective {
            hams,
            space,
            rho0,
            cfg,
            tau,
            penalty: cfg.penalty_operator(space)?,
        })
    }

    fn slot(&self, u: &[f64; N_CONTROLS]) -> UnitarySlot {
        let (energies, vectors) = linalg::eigh(&self.hams.total(u).matrix);
        let phases = CMatrix::from_diagonal(&CVector::from_iterator(
            energies.len(),
            energies.iter().map(|&e| C64::new(0.0, -e * self.tau).exp()),
        ));
        let u = linalg::matmul(&vectors, &linalg::matmul(&phases, &vectors.adjoint()));
        UnitarySlot { energies, vectors, u }
    }

    fn forward(&self, slots: &[UnitarySlot]) -> Vec<CMatrix> {
        let mut states = Vec::with_capacity(slots.len() + 1);
        states.push(self.rho0.clone());
        for s in slots {
            let prev = states.last().unwrap();
            states.push(linalg::matmul(&s.u, &linalg::matmul(prev, &s.u.adjoint())));
        }
        states
    }

    fn breakdown(&self, states: &[CMatrix]) -> CostBreakdown {
        let w = trapezoid(states.len() - 1, self.tau);
        let mut integral = 0.0;
        let mut max_penalized: f64 = 0.0;
        for (s, wk) in states.iter().zip(&w) {
            let p = linalg::inner(&self.penalty, s).re;
            integral += wk * p;
            max_penalized = max_penalized.max(p);
        }
        let distance = self.cfg.distance(states.last().unwrap(), self.space);
        let penalty = self.cfg.penalty_weight * integral;
        CostBreakdown {
            total: distance + penalty,
            distance,
            penalty,
            max_penalized,
        }
    }

    pub fn cost(&self, u: &[[f64; N_CONTROLS]]) -> CostBreakdown {
        let slots: Vec<UnitarySlot> = u.iter().map(|uk| self.slot(uk)).collect();
        self.breakdown(&self.forward(&slots))
    }

    pub fn cost_and_gradient(&self, u: &[[f64; N_CONTROLS]]) -> (CostBreakdown, Vec<[f64; N_CONTROLS]>) {
        let n_slots = u.len();
        let slots: Vec<UnitarySlot> = u.iter().map(|uk| self.slot(uk)).collect();
        let states = self.forward(&slots);
        let cost = self.breakdown(&states);
        if n_slots == 0 {
            return (cost, Vec::new());
        }
        let w = trapezoid(n_slots, self.tau);
        let lambda = self.cfg.penalty_weight;
        let mut mu = self.cfg.distance_gradient(&states[n_slots], self.space) + self.penalty.scale(lambda * w[n_slots]);
        let mut grad = vec![[0.0; N_CONTROLS]; n_slots];
        for k in (0..n_slots).rev() {
            let s = &slots[k];
            let v = &s.vectors;
            // tr(μ dU ρ U†) = tr(dU M) with M = ρ U† μ, taken in the eigenbasis
            let m = linalg::matmul(&states[k], &linalg::matmul(&s.u.adjoint(), &mu));
            let m_eig = linalg::matmul(&v.adjoint(), &linalg::matmul(&m, v));
            let dim = s.energies.len();
            let gdd = CMatrix::from_fn(dim, dim, |a, b| {
                let za = C64::new(0.0, -s.energies[a]);
                let zb = C64::new(0.0, -s.energies[b]);
                exp_divided_difference(za, zb, self.tau) * C64::new(0.0, -1.0)
            });
            for (j, gj) in grad[k].iter_mut().enumerate() {
                let hj = linalg::matmul(&v.adjoint(), &linalg::matmul(&self.hams.controls[j].matrix, v));
                let mut t = ZERO;
                for a in 0..dim {
                    for b in 0..dim {
                        t += gdd[(a, b)] * hj[(a, b)] * m_eig[(b, a)];
                    }
                }
                *gj = 2.0 * t.re;
            }
            mu = linalg::matmul(&s.u.adjoint(), &linalg::matmul(&mu, &s.u)) + self.penalty.scale(lambda * w[k]);
        }
        (cost, grad)
    }
}

/// Everything a restart needs: the model, its initial state and the cost.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub ctx: ModelContext,
    pub rho0: CMatrix,
    pub target: Target,
    pub cost: CostConfig,
    pub n_slots: usize,
    pub tau: f64,
    pub bounds: Bounds,
    pub method: Method,
}

impl ControlProblem {
    /// Starts from the preparation-stage steady state.
    pub fn new(ctx: ModelContext, target: Target, cost: CostConfig, n_slots: usize, tau: f64) -> Result<Self> {
        let rho0 = crate::dynamics::steady_state(&ctx)?.rho;
        let bounds = ctx.bounds();
        let p = ControlProblem {
            ctx,
            rho0,
            target,
            cost,
            n_slots,
            tau,
            bounds,
            method: Method::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_slots == 0 {
            return Err(Error::Config("n_slots must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("slot width {} must be positive", self.tau)));
        }
        self.bounds.validate()?;
        self.cost.validate(self.ctx.space)
    }

    pub fn objective(&self) -> Result<Objective<'_>> {
        Objective::new(&self.ctx.generator, &self.rho0, &self.cost, self.tau, self.method)
    }

    pub fn unitary_objective(&self) -> Result<UnitaryObjective<'_>> {
        UnitaryObjective::new(self.ctx.generator.hamiltonians(), &self.rho0, &self.cost, self.tau)
    }

    /// Channel scales used to normalize the optimization variables.
    fn scales(&self) -> [f64; N_CONTROLS] {
        let mut s = [1.0; N_CONTROLS];
        for (j, sj) in s.iter_mut().enumerate() {
            let m = self.bounds.lower[j].abs().max(self.bounds.upper[j].abs());
            if m.is_finite() && m > 0.0 {
                *sj = m;
            }
        }
        s
    }

    /// Uniform amplitudes in `scale · [lower, upper]` per channel.
    pub fn random_initial(&self, seed: u64, scale: f64) -> ControlSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.scales();
        let u = (0..self.n_slots)
            .map(|_| {
                let mut row = [0.0; N_CONTROLS];
                for (j, r) in row.iter_mut().enumerate() {
                    let lo = (scale * self.bounds.lower[j]).max(-scale * s[j]);
                    let hi = (scale * self.bounds.upper[j]).min(scale * s[j]);
                    *r = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                }
                row
            })
            .collect();
        ControlSequence {
            tau: self.tau,
            u,
            bounds: self.bounds,
        }
    }

    /// `seq` plus uniform noise of `jitter` times each channel's scale,
    /// clipped to the bounds.
    pub fn jittered(&self, seq: &ControlSequence, seed: u64, jitter: f64) -> ControlSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.scales();
        let mut out = seq.clone();
        if jitter > 0.0 {
            for row in &mut out.u {
                for (j, r) in row.iter_mut().enumerate() {
                    *r += rng.random_range(-jitter..=jitter) * s[j];
                }
                self.bounds.clip(row);
            }
        }
        out
    }

    /// Evaluates a sequence with the dissipative dynamics.
    pub fn evaluate(&self, u: &[[f64; N_CONTROLS]]) -> Result<Evaluation> {
        let obj = self.objective()?;
        let states = obj.trajectory(u);
        let cost = obj.cost(u);
        let rho = states.last().expect("initial state is always present").clone();
        Ok(Evaluation {
            fidelity: self.target.fidelity(&rho, self.ctx.space)?,
            cost,
            rho,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Reduced-state fidelity at the final time.
    pub fidelity: f64,
    pub cost: CostBreakdown,
    pub rho: CMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Unitary dynamics without dissipation.
    Closed,
    /// Full Lindblad dynamics.
    Dissipative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    #[serde(skip)]
    pub wall_time: f64,
    pub cost_history: Vec<f64>,
    pub grad_norm_history: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub sequence: ControlSequence,
    /// Reduced-state fidelity under the dissipative dynamics.
    pub fidelity: f64,
    pub cost: CostBreakdown,
    pub restart: usize,
    pub seed: u64,
    pub stages: Vec<StageReport>,
    #[serde(skip)]
    pub wall_time: f64,
}

impl OptimizationResult {
    /// History of the last stage.
    pub fn cost_history(&self) -> &[f64] {
        self.stages.last().map(|s| s.cost_history.as_slice()).unwrap_or(&[])
    }

    pub fn termination(&self) -> Option<Termination> {
        self.stages.last().map(|s| s.termination)
    }
}

/// Runs one BFGS stage from `seq0`.
pub fn bfgs_minimize(
    problem: &ControlProblem,
    seq0: &ControlSequence,
    stage: Stage,
    opts: &BfgsOptions,
) -> Result<(ControlSequence, StageReport)> {
    if seq0.n_slots() != problem.n_slots || seq0.tau != problem.tau {
        return Err(Error::InvalidArgument(format!(
            "initial sequence has {} slots of {} µs, problem needs {} of {}",
            seq0.n_slots(),
            seq0.tau,
            problem.n_slots,
            problem.tau
        )));
    }
    if let Some(bad) = seq0.u.iter().position(|u| !problem.bounds.contains(u)) {
        return Err(Error::InvalidArgument(format!("initial slot {bad} violates the bounds")));
    }
    let start = Instant::now();
    let s = problem.scales();
    let to_u = |x: &[f64]| -> Vec<[f64; N_CONTROLS]> {
        x.chunks(N_CONTROLS)
            .map(|c| [c[0] * s[0], c[1] * s[1], c[2] * s[2]])
            .collect()
    };
    let scale_grad = |g: Vec<[f64; N_CONTROLS]>| -> Vec<f64> {
        g.iter()
            .flat_map(|gk| (0..N_CONTROLS).map(move |j| gk[j] * s[j]))
            .collect()
    };
    let x0: Vec<f64> = seq0
        .u
        .iter()
        .flat_map(|uk| (0..N_CONTROLS).map(move |j| uk[j] / s[j]))
        .collect();
    let lower: Vec<f64> = (0..problem.n_slots)
        .flat_map(|_| (0..N_CONTROLS).map(|j| problem.bounds.lower[j] / s[j]))
        .collect();
    let upper: Vec<f64> = (0..problem.n_slots)
        .flat_map(|_| (0..N_CONTROLS).map(|j| problem.bounds.upper[j] / s[j]))
        .collect();
    let result = match stage {
        Stage::Closed => {
            let obj = problem.unitary_objective()?;
            bfgs::minimize(
                |x| {
                    let (c, g) = obj.cost_and_gradient(&to_u(x));
                    (c.total, scale_grad(g))
                },
                &x0,
                &lower,
                &upper,
                opts,
            )
        }
        Stage::Dissipative => {
            let obj = problem.objective()?;
            bfgs::minimize(
                |x| {
                    let (c, g) = obj.cost_and_gradient(&to_u(x));
                    (c.total, scale_grad(g))
                },
                &x0,
                &lower,
                &upper,
                opts,
            )
        }
    };
    let mut u = to_u(&result.x);
    for uk in &mut u {
        problem.bounds.clip(uk);
    }
    let seq = ControlSequence {
        tau: problem.tau,
        u,
        bounds: problem.bounds,
    };
    let report = StageReport {
        stage,
        initial_cost: result.cost_history.first().copied().unwrap_or(result.f),
        final_cost: result.f,
        iterations: result.iterations,
        evaluations: result.evaluations,
        termination: result.termination,
        wall_time: start.elapsed().as_secs_f64(),
        cost_history: result.cost_history,
        grad_norm_history: result.grad_norm_history,
    };
    Ok((seq, report))
}

/// Starting sequence of each restart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniform amplitudes within `init_scale` of each bound.
    #[default]
    Random,
    /// The π-pulse warm start plus uniform jitter of `jitter` times each
    /// channel's bound.
    PiPulse { jitter: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub init: Init,
    /// Closed-system warm-up; `None` skips it.
    pub stage_a: Option<BfgsOptions>,
    pub stage_b: BfgsOptions,
    /// Initial amplitudes are drawn from this fraction of each bound.
    pub init_scale: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            init: Init::Random,
            stage_a: Some(BfgsOptions {
                max_iter: 200,
                time_budget: Some(300.0),
                ..BfgsOptions::default()
            }),
            stage_b: BfgsOptions {
                max_iter: 2000,
                ..BfgsOptions::default()
            },
            init_scale: 0.1,
        }
    }
}

/// One seeded restart: random start, optional closed stage, dissipative stage.
pub fn run_restart(problem: &ControlProblem, restart: usize, seed: u64, schedule: &Schedule) -> Result<OptimizationResult> {
    let start = Instant::now();
    let stream = seed.wrapping_add(restart as u64);
    let mut seq = match schedule.init {
        Init::Random => problem.random_initial(stream, schedule.init_scale),
        Init::PiPulse { jitter } => problem.jittered(&crate::baseline::pi_pulse_initial(problem)?, stream, jitter),
    };
    let mut stages = Vec::new();
    if let Some(opts) = &schedule.stage_a {
        let (s, report) = bfgs_minimize(problem, &seq, Stage::Closed, opts)?;
        seq = s;
        stages.push(report);
    }
    let (seq, report) = bfgs_minimize(problem, &seq, Stage::Dissipative, &schedule.stage_b)?;
    stages.push(report);
    let eval = problem.evaluate(&seq.u)?;
    Ok(OptimizationResult {
        sequence: seq,
        fidelity: eval.fidelity,
        cost: eval.cost,
        restart,
        seed: stream,
        stages,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Best first: higher fidelity, then lower penalty, then lower restart index.
pub fn rank(a: &OptimizationResult, b: &OptimizationResult) -> std::cmp::Ordering {
    b.fidelity
        .total_cmp(&a.fidelity)
        .then(a.cost.penalty.total_cmp(&b.cost.penalty))
        .then(a.restart.cmp(&b.restart))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiRestart {
    pub best: OptimizationResult,
    /// All restarts in restart order.
    pub runs: Vec<OptimizationResult>,
}

/// Independent restarts run concurrently; `on_done` sees each finished run.
pub fn multi_restart(
    problem: &ControlProblem,
    n_restarts: usize,
    seed: u64,
    schedule: &Schedule,
    on_done: Option<&(dyn Fn(&OptimizationResult) + Sync)>,
) -> Result<MultiRestart> {
    if n_restarts == 0 {
        return Err(Error::Config("at least one restart is required".into()));
    }
    problem.validate()?;
    let runs: Vec<Result<OptimizationResult>> = (0..n_restarts)
        .into_par_iter()
        .map(|r| {
            let res = run_restart(problem, r, seed, schedule);
            if let (Ok(res), Some(cb)) = (&res, on_done) {
                cb(res);
            }
            res
        })
        .collect();
    let runs: Vec<OptimizationResult> = runs.into_iter().collect::<Result<_>>()?;
    let best = runs.iter().min_by(|a, b| rank(a, b)).cloned().expect("at least one run");
    Ok(MultiRestart { best, runs })
}

/// Cost of `seq` under the dissipative dynamics.
pub fn cost(seq: &ControlSequence, cfg: &CostConfig, generator: &Generator, rho0: &CMatrix) -> Result<CostBreakdown> {
    Ok(Objective::new(generator, rho0, cfg, seq.tau, Method::default())?.cost(&seq.u))
}

/// Gradient of [`cost`], one row per slot.
pub fn gradient(
    seq: &ControlSequence,
    cfg: &CostConfig,
    generator: &Generator,
    rho0: &CMatrix,
) -> Result<Vec<[f64; N_CONTROLS]>> {
    Ok(Objective::new(generator, rho0, cfg, seq.tau, Method::default())?
        .cost_and_gradient(&seq.u)
        .1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PhysicalParams;

    fn setup() -> (ModelContext, CMatrix) {
        let ctx = ModelContext::new(PhysicalParams::set1(), SpaceSpec::uniform(2).unwrap()).unwrap();
        let rho0 = crate::dynamics::steady_state(&ctx).unwrap().rho;
        (ctx, rho0)
    }

    #[test]
    fn targets_embed_in_ground_states() {
        let space = SpaceSpec::uniform(3).unwrap();
        let t = Target::fock1(space).unwrap();
        assert_eq!(t.full[space.index(0, 0, 1).unwrap()], C64::new(1.0, 0.0));
        let n = Target::noon11(space).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((n.full[space.index(0, 1, 0).unwrap()].re - h).abs() < 1e-15);
        assert!((n.full[space.index(0, 0, 1).unwrap()].re - h).abs() < 1e-15);
        assert!(Target::by_name("cat", space).is_err());
    }

    #[test]
    fn distance_limits() {
        let space = SpaceSpec::uniform(2).unwrap();
        let t = Target::fock1(space).unwrap();
        let cfg = CostConfig::for_target(&t, space, false, 0.0).unwrap();
        assert!((cfg.distance(&projector(&t.full), space) + 0.5).abs() < 1e-15);
        let other = projector(&crate::hilbert::fock_state(space, 0, 1, 0).unwrap());
        assert!((cfg.distance(&other, space) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_sequence_has_empty_gradient() {
        let (ctx, rho0) = setup();
        let cfg = CostConfig::for_target(&Target::fock1(ctx.space).unwrap(), ctx.space, false, 10.0).unwrap();
        let obj = Objective::new(&ctx.generator, &rho0, &cfg, 0.005, Method::Chebyshev).unwrap();
        let (c, g) = obj.cost_and_gradient(&[]);
        assert!(g.is_empty());
        assert!((c.distance - cfg.distance(&rho0, ctx.space)).abs() < 1e-14);
    }

    #[test]
    fn chebyshev_and_dense_gradients_agree() {
        let (ctx, rho0) = setup();
        let cfg = CostConfig::for_target(&Target::fock1(ctx.space).unwrap(), ctx.space, true, 10.0).unwrap();
        let u = vec![[200.0, 3.0, -1.0], [-50.0, 0.5, 2.0], [0.0, -4.0, 1.0]];
        let a = Objective::new(&ctx.generator, &rho0, &cfg, 0.005, Method::Chebyshev).unwrap();
        let b = Objective::new(&ctx.generator, &rho0, &cfg, 0.005, Method::Dense).unwrap();
        let (ca, ga) = a.cost_and_gradient(&u);
        let (cb, gb) = b.cost_and_gradient(&u);
        assert!((ca.total - cb.total).abs() < 1e-12);
        for (ra, rb) in ga.iter().zip(&gb) {
            for j in 0..N_CONTROLS {
                assert!((ra[j] - rb[j]).abs() < 1e-10 * (1.0 + rb[j].abs()), "{ra:?} {rb:?}");
            }
        }
    }

    #[test]
    fn unitary_objective_matches_closed_liouvillian() {
        let (ctx, rho0) = setup();
        let closed = ctx.closed_generator().unwrap();
        let cfg = CostConfig::for_target(&Target::noon11(ctx.space).unwrap(), ctx.space, true, 10.0).unwrap();
        let u = vec![[100.0, 3.0, -1.0], [-500.0, 0.5, 2.0], [20.0, -4.0, 1.0]];
        let a = UnitaryObjective::new(ctx.generator.hamiltonians(), &rho0, &cfg, 0.005).unwrap();
        let b = Objective::new(&closed, &rho0, &cfg, 0.005, Method::Chebyshev).unwrap();
        let (ca, ga) = a.cost_and_gradient(&u);
        let (cb, gb) = b.cost_and_gradient(&u);
        assert!((ca.total - cb.total).abs() < 1e-12);
        for (ra, rb) in ga.iter().zip(&gb) {
            for j in 0..N_CONTROLS {
                assert!((ra[j] - rb[j]).abs() < 1e-6 * (1.0 + rb[j].abs()), "{ra:?} {rb:?}");
            }
        }
    }
}
