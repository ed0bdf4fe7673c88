use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use optomech::analysis::{self, GridSpec, StateSummary};
use optomech::baseline::{tune_pi_sequence, PiPulsePlan, TunedPiPulse};
use optomech::dynamics::{
    evolve_constant, propagate_with, steady_state, trace_distance, ControlSequence, Populations, StateBundle,
};
use optomech::hilbert::{fock_state, projector};
use optomech::liouville::N_CONTROLS;
use optomech::model::{
    derive_frame, diagnostics, regime_checks, rwa_significance, thermal, Diagnostics, FrameParams, RegimeCheck,
    RwaSignificance, ThermalParams,
};
use optomech::optimize::{multi_restart, ControlProblem, CostBreakdown, Init, OptimizationResult, Target};
use optomech::problem::{ProblemSpec, TargetSpec};
use optomech::reference::{self, Check};
use optomech::{CMatrix, PhysicalParams, SpaceSpec, Subsystem};

use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_hex, unix_now, Outputs, RunManifest};
use crate::Common;

struct Loaded {
    spec: ProblemSpec,
    started: f64,
}

impl Loaded {
    fn new(common: &Common, target: Option<&str>) -> CliResult<Self> {
        let started = unix_now();
        let mut spec = match &common.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
                let mut spec = ProblemSpec::from_json_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
                let base = path.parent().unwrap_or(Path::new("."));
                spec.target = spec.target.resolve(base)?;
                spec
            }
            None => ProblemSpec::preset(&common.preset, target.unwrap_or("fock1")),
        };
        if let Some(t) = target {
            spec.target = TargetSpec::Named(t.to_string()).resolve(Path::new("."))?;
        }
        if let Some(d) = common.dims {
            spec.dims = d;
        }
        spec.physical_params()?;
        Ok(Loaded { spec, started })
    }

    fn set_name(&self) -> String {
        match (&self.spec.params, &self.spec.parameter_set) {
            (Some(p), _) if !p.name.is_empty() => p.name.clone(),
            (Some(_), _) => "custom".into(),
            (None, Some(n)) => n.clone(),
            (None, None) => "custom".into(),
        }
    }

    fn manifest(&self, command: &str) -> CliResult<RunManifest> {
        let canonical = serde_json::to_vec(&self.spec)?;
        Ok(RunManifest {
            command: command.to_string(),
            config_hash: sha256_hex(&canonical),
            parameter_set: self.set_name(),
            dims: self.spec.dims,
            seed: self.spec.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: self.started,
            finished_unix: 0.0,
            outputs: Vec::new(),
        })
    }

    fn finish(&self, command: &str, mut out: Outputs) -> CliResult<()> {
        out.write_json("config.json", &self.spec)?;
        let path = out.finish(self.manifest(command)?)?;
        info!("wrote {}", path.display());
        Ok(())
    }
}

fn report_checks(checks: &[Check], enforce: bool) -> CliResult<()> {
    if checks.is_empty() {
        if enforce {
            println!("no reference values for this configuration");
        }
        return Ok(());
    }
    for c in checks {
        println!("{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if enforce && failed > 0 {
        return Err(CliError::CheckFailed(failed));
    }
    Ok(())
}

fn require_file(path: &Path, producer: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "file not found: {} (produce it with `optomech {producer}`)",
            path.display()
        )))
    }
}

#[derive(Serialize)]
struct DeriveReport<'a> {
    params: &'a PhysicalParams,
    frame: FrameParams,
    cavity_shift: f64,
    thermal: ThermalParams,
    diagnostics: Diagnostics,
    regime_checks: Vec<RegimeCheck>,
    rwa_significance: RwaSignificance,
    checks: Vec<Check>,
}

pub fn derive(common: &Common) -> CliResult<()> {
    let loaded = Loaded::new(common, None)?;
    let params = loaded.spec.physical_params()?;
    let frame = derive_frame(&params);
    let diag = diagnostics(&params);
    let rwa = rwa_significance(&params, &frame);
    let regimes = regime_checks(&diag);
    let checks = reference::derive_checks(&loaded.set_name(), &params, &frame, &diag, &rwa);

    println!("parameter set {}", loaded.set_name());
    println!("  Re(r) = {:.4}, Im(r) = {:.4e}", frame.re_r, frame.im_r);
    println!("  E/2π = {:.4} GHz, η = {:.6} rad", frame.e_drive / 1e3, frame.eta);
    println!("  Δ'/2π = {:.4} MHz, cavity shift/2π = {:.4} MHz", frame.delta_prime, frame.cavity_shift(&params));
    for r in &regimes {
        println!("  {}: {:.4}", r.name, r.value);
        if !r.satisfied {
            warn!("regime condition not met: {} ({:.4})", r.name, r.value);
        }
    }
    for (name, v) in [
        ("drive co-rotating", rwa.drive_corotating),
        ("drive counter-rotating", rwa.drive_counterrotating),
        ("atom control counter-rotating", rwa.atom_control_counterrotating),
        ("optomechanical nonlinear", rwa.optomechanical_nonlinear),
        ("two-mode squeezing", rwa.two_mode_squeezing),
        ("atom-cavity counter-rotating", rwa.atom_cavity_counterrotating),
        ("boosted atom-cavity counter-rotating", rwa.boosted_atom_cavity_counterrotating),
    ] {
        println!("  RWA {name}: {v:.4e}");
    }

    let mut out = Outputs::create(&common.out_dir)?;
    out.write_json(
        "derive.json",
        &DeriveReport {
            params: &params,
            frame,
            cavity_shift: frame.cavity_shift(&params),
            thermal: thermal(&params),
            diagnostics: diag,
            regime_checks: regimes,
            rwa_significance: rwa,
            checks: checks.clone(),
        },
    )?;
    loaded.finish("derive", out)?;
    report_checks(&checks, common.check)
}

#[derive(Serialize)]
struct SteadyReport {
    populations: Populations,
    purity: f64,
    smallest_eigenvalue_modulus: f64,
    next_eigenvalue_modulus: f64,
    relative_residual: f64,
    relaxation_time_us: f64,
    relaxation_trace_distance: f64,
    checks: Vec<Check>,
}

fn ground_state(space: SpaceSpec) -> CliResult<CMatrix> {
    Ok(projector(&fock_state(space, 0, 0, 0)?))
}

pub fn steady(common: &Common) -> CliResult<()> {
    let loaded = Loaded::new(common, None)?;
    let ctx = loaded.spec.context(loaded.spec.dims)?;
    let ss = steady_state(&ctx)?;
    let prep = ctx.preparation_generator()?;
    let t = reference::STEADY_RELAXATION_TIME;
    let relaxed = evolve_constant(&prep, &[0.0; N_CONTROLS], &ground_state(ctx.space)?, t)?;
    let distance = trace_distance(&relaxed, &ss.rho);
    let pops = optomech::dynamics::populations(&ss.rho, ctx.space);
    let checks = reference::steady_checks(&loaded.set_name(), loaded.spec.dims, &pops, distance);

    println!("steady state ({}, dims {})", loaded.set_name(), loaded.spec.dims);
    println!("  cavity     {:?}", pops.cavity);
    println!("  oscillator {:?}", pops.oscillator);
    println!("  atom       {:?}", pops.atom);
    println!("  relaxation from vacuum over {t} µs: trace distance {distance:.3e}");

    let mut out = Outputs::create(&common.out_dir)?;
    out.write_json(
        "steady.json",
        &SteadyReport {
            purity: optomech::dynamics::purity(&ss.rho),
            populations: pops,
            smallest_eigenvalue_modulus: ss.smallest,
            next_eigenvalue_modulus: ss.next,
            relative_residual: ss.residual,
            relaxation_time_us: t,
            relaxation_trace_distance: distance,
            checks: checks.clone(),
        },
    )?;
    out.write_json("steady_state.json", &StateBundle::new(ctx.space, vec![0.0], &[ss.rho]))?;
    loaded.finish("steady", out)?;
    report_checks(&checks, common.check)
}

#[derive(Serialize)]
struct FinalReport {
    target: String,
    fidelity: f64,
    summary: StateSummary,
}

fn final_report(rho: &CMatrix, target: &Target, space: SpaceSpec) -> CliResult<FinalReport> {
    Ok(FinalReport {
        target: target.name.clone(),
        fidelity: target.fidelity(rho, space)?,
        summary: analysis::summarize(rho, space, GridSpec::default())?,
    })
}

fn oscillator_wigner(out: &mut Outputs, rho: &CMatrix, space: SpaceSpec) -> CliResult<()> {
    let osc = analysis::partial_trace(rho, space, &[Subsystem::Oscillator])?;
    let w = analysis::wigner(&osc, GridSpec::default())?;
    out.write_with("wigner.csv", |buf| w.write_csv(buf))?;
    Ok(())
}

pub fn propagate(common: &Common, sequence: &Path) -> CliResult<()> {
    require_file(sequence, "optimize` or `optomech baseline")?;
    let loaded = Loaded::new(common, None)?;
    let problem = loaded.spec.build()?;
    let seq = ControlSequence::load_csv(sequence, problem.bounds)?;
    let traj = propagate_with(&problem.rho0, &seq, &problem.ctx.generator, problem.method)?;
    traj.check_physical()?;
    let report = final_report(traj.final_state(), &problem.target, problem.ctx.space)?;
    println!(
        "propagated {} slots ({:.4} µs): {} fidelity {:.6}",
        seq.n_slots(),
        seq.duration(),
        report.target,
        report.fidelity
    );

    let mut out = Outputs::create(&common.out_dir)?;
    out.write_with("trajectory.csv", |buf| traj.write_csv(buf))?;
    out.write_json("states.json", &traj.bundle())?;
    out.write_json("final.json", &report)?;
    loaded.finish("propagate", out)
}

pub struct OptimizeArgs {
    pub target: Option<String>,
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
    pub budget: Option<f64>,
    pub warm_start: Option<f64>,
    pub verify_dim: Option<usize>,
    pub workers: Option<usize>,
}

#[derive(Serialize)]
struct RunSummary {
    restart: usize,
    seed: u64,
    fidelity: f64,
    cost: CostBreakdown,
    iterations: Vec<usize>,
}

#[derive(Serialize)]
struct Verification {
    dims: usize,
    fidelity: f64,
    /// Fidelity at `dims` minus fidelity at the optimization truncation.
    delta: f64,
}

#[derive(Serialize)]
struct OptimizeReport {
    parameter_set: String,
    target: String,
    dims: usize,
    n_slots: usize,
    tau_us: f64,
    restarts: usize,
    best: OptimizationResult,
    final_state: FinalReport,
    runs: Vec<RunSummary>,
    verification: Option<Verification>,
    checks: Vec<Check>,
}

#[derive(Serialize)]
struct Timings {
    total_s: f64,
    restarts_s: Vec<f64>,
    stages_s: Vec<Vec<f64>>,
}

fn tuned_baseline(problem: &ControlProblem, tau: f64) -> CliResult<TunedPiPulse> {
    let plan = PiPulsePlan::nominal(&problem.ctx.params, &problem.ctx.frame);
    Ok(tune_pi_sequence(&plan, &problem.ctx, &problem.rho0, tau)?)
}

pub fn optimize(common: &Common, args: &OptimizeArgs) -> CliResult<()> {
    let mut loaded = Loaded::new(common, args.target.as_deref())?;
    if let Some(s) = args.seed {
        loaded.spec.seed = s;
    }
    if let Some(r) = args.restarts {
        loaded.spec.restarts = r;
    }
    if let Some(b) = args.budget {
        if !(b > 0.0 && b.is_finite()) {
            return Err(CliError::Config(format!("--budget must be positive, got {b}")));
        }
        loaded.spec.stage_b.time_budget = Some(b);
    }
    if let Some(j) = args.warm_start {
        if !(j >= 0.0 && j.is_finite()) {
            return Err(CliError::Config(format!("--warm-start must be a non-negative jitter, got {j}")));
        }
        loaded.spec.init = Init::PiPulse { jitter: j };
    }
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    let spec = &loaded.spec;
    let problem = spec.build()?;
    info!(
        "optimizing {} on {} (dims {}, {} slots of {} µs, {} restarts, seed {})",
        problem.target.name,
        loaded.set_name(),
        spec.dims,
        problem.n_slots,
        problem.tau,
        spec.restarts,
        spec.seed
    );
    let start = Instant::now();
    let done = AtomicUsize::new(0);
    let total = spec.restarts;
    let progress = |r: &OptimizationResult| {
        let k = done.fetch_add(1, Ordering::SeqCst) + 1;
        info!("restart {} finished ({k}/{total}): fidelity {:.5}", r.restart, r.fidelity);
    };
    let multi = multi_restart(&problem, spec.restarts, spec.seed, &spec.schedule(), Some(&progress))?;
    let best = multi.best.clone();
    let space = problem.ctx.space;
    let eval = problem.evaluate(&best.sequence.u)?;
    let final_state = final_report(&eval.rho, &problem.target, space)?;

    let verification = match args.verify_dim {
        Some(d) => {
            let high = spec.build_at(d)?;
            let f = high.evaluate(&best.sequence.u)?.fidelity;
            println!("dims {d}: fidelity {f:.6} (delta {:+.6})", f - best.fidelity);
            Some(Verification {
                dims: d,
                fidelity: f,
                delta: f - best.fidelity,
            })
        }
        None => None,
    };

    let set = loaded.set_name();
    let mut checks = Vec::new();
    if common.check {
        let base = tuned_baseline(&problem, spec.baseline_tau())?;
        checks = reference::optimize_checks(
            &set,
            &problem.target.name,
            spec.restarts,
            best.fidelity,
            &final_state.summary,
            Some(base.fidelity),
        );
        if let Some(v) = &verification {
            checks.push(reference::dim_check(&problem.target.name, v.delta));
        }
    }
    println!(
        "best restart {} of {}: {} fidelity {:.6}, oscillator mana {:.6}, log-negativity {:.6}",
        best.restart,
        spec.restarts,
        problem.target.name,
        best.fidelity,
        final_state.summary.oscillator_mana.clamped,
        final_state.summary.cavity_oscillator_log_negativity
    );

    let mut out = Outputs::create(&common.out_dir)?;
    out.write_with("sequence.csv", |buf| best.sequence.write_csv(buf))?;
    let traj = propagate_with(&problem.rho0, &best.sequence, &problem.ctx.generator, problem.method)?;
    out.write_with("trajectory.csv", |buf| traj.write_csv(buf))?;
    oscillator_wigner(&mut out, &eval.rho, space)?;
    let timings = Timings {
        total_s: start.elapsed().as_secs_f64(),
        restarts_s: multi.runs.iter().map(|r| r.wall_time).collect(),
        stages_s: multi
            .runs
            .iter()
            .map(|r| r.stages.iter().map(|s| s.wall_time).collect())
            .collect(),
    };
    out.write_json(
        "result.json",
        &OptimizeReport {
            parameter_set: set,
            target: problem.target.name.clone(),
            dims: spec.dims,
            n_slots: problem.n_slots,
            tau_us: problem.tau,
            restarts: spec.restarts,
            runs: multi
                .runs
                .iter()
                .map(|r| RunSummary {
                    restart: r.restart,
                    seed: r.seed,
                    fidelity: r.fidelity,
                    cost: r.cost,
                    iterations: r.stages.iter().map(|s| s.iterations).collect(),
                })
                .collect(),
            best,
            final_state,
            verification,
            checks: checks.clone(),
        },
    )?;
    out.write_json("timings.json", &timings)?;
    loaded.finish("optimize", out)?;
    report_checks(&checks, common.check)
}

#[derive(Serialize)]
struct BaselineReport {
    baseline: TunedPiPulse,
    final_state: FinalReport,
    checks: Vec<Check>,
}

pub fn baseline(common: &Common) -> CliResult<()> {
    let loaded = Loaded::new(common, None)?;
    let problem = loaded.spec.build()?;
    let tuned = tuned_baseline(&problem, loaded.spec.baseline_tau())?;
    let space = problem.ctx.space;
    let checks = reference::baseline_checks(
        &loaded.set_name(),
        tuned.fidelity,
        tuned.mana.clamped,
        tuned.cavity_peak,
    );
    println!(
        "π-pulse baseline: slots {:?} of {} µs, oscillator |1⟩ {:.6}, mana {:.6}, cavity peak {:.4}",
        tuned.slots, tuned.tau, tuned.fidelity, tuned.mana.clamped, tuned.cavity_peak
    );

    let mut out = Outputs::create(&common.out_dir)?;
    out.write_with("sequence.csv", |buf| tuned.sequence.write_csv(buf))?;
    let traj = propagate_with(&problem.rho0, &tuned.sequence, &problem.ctx.generator, problem.method)?;
    out.write_with("trajectory.csv", |buf| traj.write_csv(buf))?;
    oscillator_wigner(&mut out, &tuned.final_state, space)?;
    let final_state = final_report(&tuned.final_state, &problem.target, space)?;
    out.write_json(
        "baseline.json",
        &BaselineReport {
            baseline: tuned,
            final_state,
            checks: checks.clone(),
        },
    )?;
    loaded.finish("baseline", out)?;
    report_checks(&checks, common.check)
}

pub fn analyze(
    common: &Common,
    states: Option<&Path>,
    sequence: Option<&Path>,
    target: Option<String>,
) -> CliResult<()> {
    let loaded = Loaded::new(common, target.as_deref())?;
    let (rho, space) = match (states, sequence) {
        (Some(path), _) => {
            require_file(path, "propagate")?;
            let text = std::fs::read_to_string(path)?;
            let bundle: StateBundle = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let rho = bundle
                .states()?
                .pop()
                .ok_or_else(|| CliError::Config(format!("{} holds no states", path.display())))?;
            (rho, bundle.space)
        }
        (None, Some(path)) => {
            require_file(path, "optimize` or `optomech baseline")?;
            let problem = loaded.spec.build()?;
            let seq = ControlSequence::load_csv(path, problem.bounds)?;
            let traj = propagate_with(&problem.rho0, &seq, &problem.ctx.generator, problem.method)?;
            (traj.final_state().clone(), problem.ctx.space)
        }
        (None, None) => {
            return Err(CliError::Config("analyze needs --states or --sequence".into()));
        }
    };
    let t = loaded.spec.target.build(space)?;
    let report = final_report(&rho, &t, space)?;
    println!(
        "{} fidelity {:.6}, oscillator mana {:.6}, cavity-oscillator log-negativity {:.6}, purity {:.6}",
        report.target,
        report.fidelity,
        report.summary.oscillator_mana.clamped,
        report.summary.cavity_oscillator_log_negativity,
        report.summary.purity
    );
    let mut out = Outputs::create(&common.out_dir)?;
    oscillator_wigner(&mut out, &rho, space)?;
    out.write_json("analysis.json", &report)?;
    loaded.finish("analyze", out)
}
