//! JSON problem definitions for optimization runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bfgs::BfgsOptions;
use crate::dynamics::{Bounds, Method, ModelContext};
use crate::error::{Error, Result};
use crate::hilbert::{SpaceSpec, Subsystem};
use crate::linalg::{CVector, C64};
use crate::model::PhysicalParams;
use crate::optimize::{ControlProblem, CostConfig, Init, Schedule, Target, DEFAULT_PENALTY_WEIGHT};
use crate::units;

/// Slot width used unless a problem sets its own, µs.
pub const DEFAULT_TAU: f64 = 0.005;

/// Slot width of the π-pulse baseline, µs.
pub const DEFAULT_BASELINE_TAU: f64 = 0.001;

/// Default number of slots for a named parameter set: enough 5 ns slots to
/// hold the tuned π-pulse sequence (207 ns for set1, 612 ns for set2).
pub fn default_slots(set: &str, _target: &str) -> usize {
    match set {
        "set1" => 42,
        _ => 124,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Named(String),
    Custom {
        name: String,
        keep: Vec<Subsystem>,
        /// `[re, im]` amplitudes on the kept factors.
        amplitudes: Vec<[f64; 2]>,
    },
}

impl TargetSpec {
    /// Replaces a file reference by the state it holds; relative paths start
    /// at `base`.
    pub fn resolve(&self, base: &Path) -> Result<TargetSpec> {
        match self {
            TargetSpec::Named(n) if n.ends_with(".json") => {
                let path = base.join(n);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("target file {}: {e}", path.display())))?;
                let spec: TargetSpec = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("target file {}: {e}", path.display())))?;
                match spec {
                    TargetSpec::Custom { .. } => Ok(spec),
                    TargetSpec::Named(_) => Err(Error::Config(format!(
                        "target file {} must hold name, keep and amplitudes",
                        path.display()
                    ))),
                }
            }
            other => Ok(other.clone()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            TargetSpec::Named(n) => n,
            TargetSpec::Custom { name, .. } => name,
        }
    }

    pub fn build(&self, space: SpaceSpec) -> Result<Target> {
        match self {
            TargetSpec::Named(n) => Target::by_name(n, space),
            TargetSpec::Custom { name, keep, amplitudes } => {
                let psi = CVector::from_iterator(amplitudes.len(), amplitudes.iter().map(|a| C64::new(a[0], a[1])));
                Target::from_reduced(name, space, keep, psi)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub max_iter: usize,
    /// Seconds.
    #[serde(default)]
    pub time_budget: Option<f64>,
}

impl StageSpec {
    fn options(&self) -> BfgsOptions {
        BfgsOptions {
            max_iter: self.max_iter,
            time_budget: self.time_budget,
            ..BfgsOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelBounds {
    #[serde(with = "units::mhz")]
    pub lower: f64,
    #[serde(with = "units::mhz")]
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub detuning: ChannelBounds,
    #[serde(rename = "atomX")]
    pub atom_x: ChannelBounds,
    #[serde(rename = "atomY")]
    pub atom_y: ChannelBounds,
}

impl BoundsSpec {
    pub fn bounds(&self) -> Bounds {
        Bounds {
            lower: [self.detuning.lower, self.atom_x.lower, self.atom_y.lower],
            upper: [self.detuning.upper, self.atom_x.upper, self.atom_y.upper],
        }
    }
}

/// Optimization problem as read from JSON. Quantities with units are strings
/// such as `"1 us"` or `"-1 GHz"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// Preset name, used when `params` is absent.
    #[serde(default)]
    pub parameter_set: Option<String>,
    #[serde(default)]
    pub params: Option<PhysicalParams>,
    /// Fock levels of cavity and oscillator.
    #[serde(default = "default_dims")]
    pub dims: usize,
    /// Keyword, inline state, or path of a JSON file holding an inline state.
    #[serde(default = "default_target")]
    pub target: TargetSpec,
    /// Compare reduced states in the cost rather than full states.
    #[serde(default = "default_true")]
    pub reduced_cost: bool,
    #[serde(default)]
    pub n_slots: Option<usize>,
    #[serde(default, with = "opt_micros")]
    pub tau: Option<f64>,
    /// Slot width of the π-pulse baseline (default 1 ns).
    #[serde(default, with = "opt_micros")]
    pub baseline_tau: Option<f64>,
    #[serde(default = "default_penalty")]
    pub penalty_weight: f64,
    #[serde(default)]
    pub bounds: Option<BoundsSpec>,
    #[serde(default, with = "opt_mhz")]
    pub far_detuning: Option<f64>,
    /// `null` skips the closed-system stage.
    #[serde(default = "default_stage_a")]
    pub stage_a: Option<StageSpec>,
    #[serde(default = "default_stage_b")]
    pub stage_b: StageSpec,
    /// `"random"` or `{"pi_pulse": {"jitter": 0.02}}` (the default).
    #[serde(default = "default_init")]
    pub init: Init,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub method: Method,
}

fn default_dims() -> usize {
    3
}
fn default_target() -> TargetSpec {
    TargetSpec::Named("fock1".into())
}
fn default_true() -> bool {
    true
}
fn default_penalty() -> f64 {
    DEFAULT_PENALTY_WEIGHT
}
fn default_restarts() -> usize {
    20
}
fn default_init() -> Init {
    Init::PiPulse { jitter: 0.02 }
}

fn default_stage_a() -> Option<StageSpec> {
    let s = Schedule::default().stage_a.expect("default has a closed stage");
    Some(StageSpec {
        max_iter: s.max_iter,
        time_budget: s.time_budget,
    })
}
fn default_stage_b() -> StageSpec {
    StageSpec {
        max_iter: Schedule::default().stage_b.max_iter,
        time_budget: None,
    }
}

macro_rules! optional_unit {
    ($name:ident, $inner:ident, $parse:ident) => {
        mod $name {
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(value: &Option<f64>, ser: S) -> Result<S::Ok, S::Error> {
                match value {
                    Some(v) => crate::units::$inner::serialize(v, ser),
                    None => ser.serialize_none(),
                }
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<f64>, D::Error> {
                let text: Option<String> = Option::deserialize(de)?;
                text.map(|t| crate::units::$parse(&t).map_err(|e| serde::de::Error::custom(e.message())))
                    .transpose()
            }
        }
    };
}

optional_unit!(opt_micros, micros, parse_time);
optional_unit!(opt_mhz, mhz, parse_frequency);

impl ProblemSpec {
    pub fn preset(set: &str, target: &str) -> Self {
        ProblemSpec {
            parameter_set: Some(set.to_string()),
            params: None,
            dims: default_dims(),
            target: TargetSpec::Named(target.to_string()),
            reduced_cost: true,
            n_slots: None,
            tau: None,
            baseline_tau: None,
            penalty_weight: DEFAULT_PENALTY_WEIGHT,
            bounds: None,
            far_detuning: None,
            stage_a: default_stage_a(),
            stage_b: default_stage_b(),
            init: default_init(),
            restarts: default_restarts(),
            seed: 0,
            method: Method::default(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config(format!(
                "field '{path}' (line {}, column {}): {}",
                inner.line(),
                inner.column(),
                crate::error::strip_location(&inner)
            ))
        })
    }

    pub fn physical_params(&self) -> Result<PhysicalParams> {
        match (&self.params, &self.parameter_set) {
            (Some(p), _) => {
                p.validate()?;
                Ok(p.clone())
            }
            (None, Some(name)) => PhysicalParams::preset(name),
            (None, None) => Err(Error::Config("problem needs 'parameter_set' or 'params'".into())),
        }
    }

    fn set_name(&self) -> String {
        match (&self.params, &self.parameter_set) {
            (Some(p), _) => p.name.clone(),
            (None, Some(n)) => n.clone(),
            _ => String::new(),
        }
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
            .unwrap_or_else(|| default_slots(&self.set_name(), self.target.name()))
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(DEFAULT_TAU)
    }

    pub fn baseline_tau(&self) -> f64 {
        self.baseline_tau.unwrap_or(DEFAULT_BASELINE_TAU)
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            init: self.init,
            stage_a: self.stage_a.map(|s| s.options()),
            stage_b: self.stage_b.options(),
            ..Schedule::default()
        }
    }

    pub fn context(&self, dims: usize) -> Result<ModelContext> {
        let mut ctx = ModelContext::new(self.physical_params()?, SpaceSpec::uniform(dims)?)?;
        if let Some(d) = self.far_detuning {
            ctx.far_detuning = d;
        }
        Ok(ctx)
    }

    /// The problem at truncation `dims`.
    pub fn build_at(&self, dims: usize) -> Result<ControlProblem> {
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        let ctx = self.context(dims)?;
        let space = ctx.space;
        let target = self.target.build(space)?;
        let cost = CostConfig::for_target(&target, space, self.reduced_cost, self.penalty_weight)?;
        let mut problem = ControlProblem::new(ctx, target, cost, self.n_slots(), self.tau())?;
        if let Some(b) = &self.bounds {
            problem.bounds = b.bounds();
        }
        problem.method = self.method;
        problem.validate()?;
        Ok(problem)
    }

    pub fn build(&self) -> Result<ControlProblem> {
        self.build_at(self.dims)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_units_and_defaults() {
        let spec = ProblemSpec::from_json_str(
            r#"{"parameter_set": "set1", "target": "fock1", "tau": "5 ns", "n_slots": 4,
                "far_detuning": "-1 GHz", "stage_a": null}"#,
        )
        .unwrap();
        assert_eq!(spec.tau(), 0.005);
        assert_eq!(spec.far_detuning, Some(-1000.0));
        assert!(spec.stage_a.is_none());
        assert_eq!(spec.restarts, 20);
        assert!(spec.reduced_cost);
    }

    #[test]
    fn parses_warm_start() {
        let spec = ProblemSpec::from_json_str(r#"{"init": {"pi_pulse": {"jitter": 0.02}}}"#).unwrap();
        assert_eq!(spec.init, Init::PiPulse { jitter: 0.02 });
        assert_eq!(spec.schedule().init, spec.init);
        assert_eq!(ProblemSpec::from_json_str("{}").unwrap().init, default_init());
        assert_eq!(ProblemSpec::from_json_str(r#"{"init": "random"}"#).unwrap().init, Init::Random);
    }

    #[test]
    fn reports_bad_field() {
        let err = ProblemSpec::from_json_str(r#"{"target": "fock1", "tau": "5"}"#).unwrap_err();
        assert!(err.to_string().contains("tau"), "{err}");
        let err = ProblemSpec::from_json_str(r#"{"target": "fock1", "extra": 1}"#).unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");
    }

    #[test]
    fn custom_target() {
        let spec = ProblemSpec::from_json_str(
            r#"{"parameter_set": "set2", "dims": 2, "n_slots": 2,
                "target": {"name": "osc0", "keep": ["oscillator"], "amplitudes": [[1, 0], [0, 0]]}}"#,
        )
        .unwrap();
        let p = spec.build().unwrap();
        assert_eq!(p.target.name, "osc0");
        assert_eq!(p.n_slots, 2);
    }

    #[test]
    fn target_from_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("t.json"),
            r#"{"name": "cav1", "keep": ["cavity"], "amplitudes": [[0, 0], [1, 0], [0, 0]]}"#,
        )
        .unwrap();
        let spec = ProblemSpec::from_json_str(r#"{"parameter_set": "set1", "target": "t.json"}"#).unwrap();
        let t = spec.target.resolve(dir.path()).unwrap();
        assert_eq!(t.name(), "cav1");
        assert!(TargetSpec::Named("missing.json".into()).resolve(dir.path()).is_err());
        let d = ProblemSpec::from_json_str(r#"{"parameter_set": "set1"}"#).unwrap();
        assert_eq!(d.target.name(), "fock1");
    }
}
