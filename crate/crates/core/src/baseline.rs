//! Three-segment π-pulse transfer: excite the atom, swap the excitation into
//! the cavity at atom-cavity resonance, then let the hopping interaction move
//! it into the oscillator.

use serde::{Deserialize, Serialize};

use crate::analysis::{self, GridSpec, Mana};
use crate::dynamics::{cavity_resonance, populations, Bounds, ControlSequence, Method, ModelContext, Stepper};
use crate::error::{Error, Result};
use crate::hilbert::Subsystem;
use crate::linalg::{self, CMatrix, C64};
use crate::liouville::{Generator, N_CONTROLS};
use crate::model::{FrameParams, PhysicalParams};
use crate::optimize::ControlProblem;

/// Durations in µs, amplitudes and detunings in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiPulsePlan {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    /// atomX amplitude of segment 1.
    pub amp: f64,
    /// `u_detuning` of each segment.
    pub detunings: [f64; 3],
}

impl PiPulsePlan {
    /// Analytic durations: π rotation at `amp = R_max`, a quarter vacuum-Rabi
    /// period and a quarter hopping period. The atom sits on the drive
    /// resonance outside segment 2.
    pub fn nominal(params: &PhysicalParams, frame: &FrameParams) -> Self {
        let amp = params.r_max;
        PiPulsePlan {
            t1: 1.0 / (2.0 * amp),
            t2: 1.0 / (4.0 * params.g_ac),
            t3: 1.0 / (4.0 * params.g_co * params.s),
            amp,
            detunings: [0.0, cavity_resonance(frame), 0.0],
        }
    }

    pub fn with_final_detuning(mut self, detuning: f64) -> Self {
        self.detunings[2] = detuning;
        self
    }

    pub fn durations(&self) -> [f64; 3] {
        [self.t1, self.t2, self.t3]
    }

    pub fn segment_controls(&self) -> [[f64; N_CONTROLS]; 3] {
        [
            [self.detunings[0], self.amp, 0.0],
            [self.detunings[1], 0.0, 0.0],
            [self.detunings[2], 0.0, 0.0],
        ]
    }

    pub fn validate(&self, bounds: &Bounds) -> Result<()> {
        for (i, t) in self.durations().iter().enumerate() {
            if !(*t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidArgument(format!("segment {} duration {t} must be positive", i + 1)));
            }
        }
        for (i, u) in self.segment_controls().iter().enumerate() {
            if !bounds.contains(u) {
                return Err(Error::InvalidArgument(format!(
                    "segment {} controls {u:?} violate the bounds",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltSequence {
    pub sequence: ControlSequence,
    pub slots: [usize; 3],
    /// Realized minus requested duration per segment, µs.
    pub rounding: [f64; 3],
}

/// Rounds each segment to whole slots of width `tau`.
pub fn build_pi_sequence(plan: &PiPulsePlan, tau: f64, bounds: Bounds) -> Result<BuiltSequence> {
    plan.validate(&bounds)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("slot width {tau} must be positive")));
    }
    let mut slots = [0; 3];
    let mut rounding = [0.0; 3];
    for (i, t) in plan.durations().iter().enumerate() {
        if *t < tau {
            return Err(Error::InvalidArgument(format!(
                "segment {} lasts {t} µs, shorter than one slot of {tau} µs",
                i + 1
            )));
        }
        slots[i] = (t / tau).round() as usize;
        rounding[i] = slots[i] as f64 * tau - t;
    }
    Ok(BuiltSequence {
        sequence: sequence_from_slots(plan, slots, tau, bounds)?,
        slots,
        rounding,
    })
}

fn sequence_from_slots(plan: &PiPulsePlan, slots: [usize; 3], tau: f64, bounds: Bounds) -> Result<ControlSequence> {
    let controls = plan.segment_controls();
    let u = (0..3)
        .flat_map(|i| std::iter::repeat_n(controls[i], slots[i]))
        .collect();
    ControlSequence::new(tau, u, bounds)
}

fn excited_population(v: &[C64], gen: &Generator, which: Subsystem, level: usize) -> f64 {
    let rho = linalg::unvec(v, gen.space.dim());
    let p = populations(&rho, gen.space);
    match which {
        Subsystem::Atom => p.atom[level],
        Subsystem::Cavity => p.cavity[level],
        Subsystem::Oscillator => p.oscillator[level],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentScan {
    pub segment: usize,
    pub sweep: usize,
    /// Slot counts scanned (inclusive range).
    pub range: (usize, usize),
    pub best_slots: usize,
    pub best_population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedPiPulse {
    pub nominal: PiPulsePlan,
    pub plan: PiPulsePlan,
    pub tau: f64,
    pub slots: [usize; 3],
    pub sequence: ControlSequence,
    pub scans: Vec<SegmentScan>,
    /// Oscillator |1⟩ population at the end.
    pub fidelity: f64,
    pub mana: Mana,
    /// Largest cavity |1⟩ population over the sequence.
    pub cavity_peak: f64,
    #[serde(skip)]
    pub final_state: CMatrix,
}

/// Tunes the three durations one after another, each to maximize the
/// population it is meant to transfer (atom excited, cavity |1⟩, oscillator
/// |1⟩). Every integer slot count within 0.5–1.5 of the nominal is tried; the
/// earlier segments stay fixed. Two sweeps.
pub fn tune_pi_sequence(
    plan0: &PiPulsePlan,
    ctx: &ModelContext,
    rho0: &CMatrix,
    tau: f64,
) -> Result<TunedPiPulse> {
    let bounds = ctx.bounds();
    let built = build_pi_sequence(plan0, tau, bounds)?;
    let gen = &ctx.generator;
    let mut stepper = Stepper::new(gen, tau, Method::Dense);
    let controls = plan0.segment_controls();
    let nominal_slots = built.slots;
    let mut slots = built.slots;
    let goals = [(Subsystem::Atom, 1), (Subsystem::Cavity, 1), (Subsystem::Oscillator, 1)];
    let mut scans = Vec::new();
    for sweep in 1..=2 {
        for seg in 0..3 {
            let mut v = rho0.as_slice().to_vec();
            for (i, &n) in slots.iter().enumerate().take(seg) {
                for _ in 0..n {
                    v = stepper.apply(&controls[i], &v);
                }
            }
            let lo = ((0.5 * nominal_slots[seg] as f64).ceil() as usize).max(1);
            let hi = ((1.5 * nominal_slots[seg] as f64).floor() as usize).max(lo);
            let (which, level) = goals[seg];
            let mut best = (0, f64::NEG_INFINITY);
            for n in 1..=hi {
                v = stepper.apply(&controls[seg], &v);
                if n >= lo {
                    let p = excited_population(&v, gen, which, level);
                    if p > best.1 {
                        best = (n, p);
                    }
                }
            }
            slots[seg] = best.0;
            scans.push(SegmentScan {
                segment: seg + 1,
                sweep,
                range: (lo, hi),
                best_slots: best.0,
                best_population: best.1,
            });
        }
    }
    let sequence = sequence_from_slots(plan0, slots, tau, bounds)?;
    let mut v = rho0.as_slice().to_vec();
    let mut cavity_peak = excited_population(&v, gen, Subsystem::Cavity, 1);
    for u in &sequence.u {
        v = stepper.apply(u, &v);
        cavity_peak = cavity_peak.max(excited_population(&v, gen, Subsystem::Cavity, 1));
    }
    let final_state = linalg::unvec(&v, gen.space.dim());
    let osc = analysis::partial_trace(&final_state, gen.space, &[Subsystem::Oscillator])?;
    let fidelity = osc[(1, 1)].re;
    let mana = analysis::cv_mana(&osc, GridSpec::default())?;
    let mut plan = *plan0;
    plan.t1 = slots[0] as f64 * tau;
    plan.t2 = slots[1] as f64 * tau;
    plan.t3 = slots[2] as f64 * tau;
    Ok(TunedPiPulse {
        nominal: *plan0,
        plan,
        tau,
        slots,
        sequence,
        scans,
        fidelity,
        mana,
        cavity_peak,
        final_state,
    })
}

/// Detunings tried for the hopping segment of the warm start.
const WARM_DETUNINGS: usize = 81;

/// π-pulse warm start on the slot grid of `problem`: idle slots, the tuned
/// excitation and swap segments, then a hopping segment whose detuning and
/// length minimize the cost distance. The detuning sets the relative phase
/// the exchange leaves between cavity and oscillator.
pub fn pi_pulse_initial(problem: &ControlProblem) -> Result<ControlSequence> {
    let ctx = &problem.ctx;
    let plan = PiPulsePlan::nominal(&ctx.params, &ctx.frame);
    let tuned = tune_pi_sequence(&plan, ctx, &problem.rho0, problem.tau)?;
    let [s1, s2, _] = tuned.slots;
    let n = problem.n_slots;
    if s1 + s2 > n {
        return Err(Error::InvalidArgument(format!(
            "π-pulse warm start needs at least {} slots, the problem has {n}",
            s1 + s2
        )));
    }
    let controls = plan.segment_controls();
    let space = ctx.space;
    let mut stepper = Stepper::new(&ctx.generator, problem.tau, problem.method);
    let mut start = problem.rho0.as_slice().to_vec();
    for (c, k) in [(controls[0], s1), (controls[1], s2)] {
        for _ in 0..k {
            start = stepper.apply(&c, &start);
        }
    }
    let distance = |v: &[C64]| problem.cost.distance(&linalg::unvec(v, space.dim()), space);
    let (lo, hi) = (problem.bounds.lower[0], problem.bounds.upper[0]);
    let grid = (0..WARM_DETUNINGS).map(|i| lo + (hi - lo) * i as f64 / (WARM_DETUNINGS - 1) as f64);
    let mut best = (controls[2], 0, distance(&start));
    for d in std::iter::once(controls[2][0]).chain(grid) {
        let hop = [d, controls[2][1], controls[2][2]];
        let mut v = start.clone();
        for l in 1..=n - s1 - s2 {
            v = stepper.apply(&hop, &v);
            let dist = distance(&v);
            if dist < best.2 {
                best = (hop, l, dist);
            }
        }
    }
    let (hop, len, _) = best;
    let idle = n - s1 - s2 - len;
    let u = std::iter::repeat_n(ctx.idle_controls(), idle)
        .chain(std::iter::repeat_n(controls[0], s1))
        .chain(std::iter::repeat_n(controls[1], s2))
        .chain(std::iter::repeat_n(hop, len))
        .collect();
    ControlSequence::new(problem.tau, u, problem.bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::SpaceSpec;
    use crate::model::derive_frame;

    #[test]
    fn nominal_durations() {
        let p = PhysicalParams::set1();
        let plan = PiPulsePlan::nominal(&p, &derive_frame(&p));
        assert!((plan.t2 - 0.020).abs() < 1e-12);
        assert!((plan.t3 - 0.2083).abs() < 1e-3);
        assert!((plan.t1 - 1.0 / 64.0).abs() < 1e-12);
        assert_eq!(plan.detunings, [0.0, 500.0, 0.0]);
    }

    #[test]
    fn rounding_and_rejection() {
        let p = PhysicalParams::set1();
        let plan = PiPulsePlan::nominal(&p, &derive_frame(&p));
        let b = Bounds::for_params(&p);
        let built = build_pi_sequence(&plan, 0.001, b).unwrap();
        assert_eq!(built.slots, [16, 20, 208]);
        assert!((built.rounding[0] - (0.016 - 1.0 / 64.0)).abs() < 1e-12);
        assert_eq!(built.sequence.u[0], [0.0, 32.0, 0.0]);
        assert_eq!(built.sequence.u[16], [500.0, 0.0, 0.0]);
        assert!(build_pi_sequence(&plan, 0.05, b).is_err());
        let too_strong = PiPulsePlan { amp: 40.0, ..plan };
        assert!(build_pi_sequence(&too_strong, 0.001, b).is_err());
    }

    #[test]
    fn closed_swaps_nearly_complete() {
        let p = PhysicalParams::set1();
        let space = SpaceSpec::uniform(2).unwrap();
        let mut ctx = ModelContext::new(p.clone(), space).unwrap();
        ctx.generator = ctx.closed_generator().unwrap();
        let mut rho0 = CMatrix::zeros(space.dim(), space.dim());
        rho0[(0, 0)] = C64::new(1.0, 0.0);
        let plan = PiPulsePlan::nominal(&p, &ctx.frame);
        let tuned = tune_pi_sequence(&plan, &ctx, &rho0, 0.001).unwrap();
        assert!(tuned.scans[0].best_population > 0.99, "{:?}", tuned.scans[0]);
        assert!(tuned.scans[1].best_population > 0.9, "{:?}", tuned.scans[1]);
    }

    #[test]
    fn warm_start_fills_the_slot_grid() {
        let spec = crate::problem::ProblemSpec {
            dims: 2,
            n_slots: Some(42),
            ..crate::problem::ProblemSpec::preset("set1", "fock1")
        };
        let problem = spec.build().unwrap();
        let seq = pi_pulse_initial(&problem).unwrap();
        assert_eq!(seq.u.len(), 42);
        let f = problem.evaluate(&seq.u).unwrap().fidelity;
        assert!(f > 0.45, "{f}");
        let short = crate::problem::ProblemSpec { n_slots: Some(3), ..spec }.build().unwrap();
        assert!(pi_pulse_initial(&short).is_err());
    }
}
