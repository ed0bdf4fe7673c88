//! Device parameters, the shifted/rotated frame derived from them, and the
//! diagnostic ratios used to judge the operating regime.
//!
//! All frequencies are stored as ordinary frequencies in MHz (the value of
//! `omega / 2pi`); factors of 2π are applied only when Hamiltonians and jump
//! operators are assembled. Times are in microseconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

const PLANCK: f64 = 6.626_070_15e-34;
const BOLTZMANN: f64 = 1.380_649e-23;

/// Detuning of the atomic drive from the shifted cavity resonance, MHz.
pub const DRIVE_DETUNING_MHZ: f64 = -500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    #[serde(default)]
    pub name: String,
    /// Lower end of the atom tuning range.
    #[serde(with = "units::mhz")]
    pub wa_min: f64,
    #[serde(with = "units::mhz")]
    pub wa_max: f64,
    /// Cavity resonance.
    #[serde(with = "units::mhz")]
    pub wc: f64,
    /// Mechanical resonance Ω_m.
    #[serde(rename = "Om", with = "units::mhz")]
    pub om: f64,
    /// Atom-cavity coupling g.
    #[serde(with = "units::mhz")]
    pub g_ac: f64,
    /// Single-photon cavity-oscillator coupling g₀.
    #[serde(with = "units::mhz")]
    pub g_co: f64,
    #[serde(with = "units::mhz")]
    pub kappa_a: f64,
    #[serde(with = "units::mhz")]
    pub kappa: f64,
    #[serde(with = "units::mhz")]
    pub gamma: f64,
    /// Bath temperature in mK.
    #[serde(with = "units::millikelvin")]
    pub temperature: f64,
    /// Cavity shift (coupling enhancement factor), dimensionless.
    pub s: f64,
    /// Atom control amplitude bound R/(2π).
    #[serde(rename = "R_max", with = "units::mhz")]
    pub r_max: f64,
}

impl PhysicalParams {
    /// Boosted electromechanical device, 25 mK.
    pub fn set1() -> Self {
        PhysicalParams {
            name: "set1".into(),
            wa_min: 9_000.0,
            wa_max: 13_500.0,
            wc: 10_188.0,
            om: 15.9,
            g_ac: 12.5,
            g_co: 0.012,
            kappa_a: 1.0,
            kappa: 1.0,
            gamma: 150e-6,
            temperature: 25.0,
            s: 100.0,
            r_max: 32.0,
        }
    }

    /// Narrow-linewidth cavity variant, 10 mK.
    pub fn set2() -> Self {
        PhysicalParams {
            name: "set2".into(),
            g_co: 0.003,
            kappa: 0.2,
            temperature: 10.0,
            s: 120.0,
            r_max: 38.0,
            ..Self::set1()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "set1" => Ok(Self::set1()),
            "set2" => Ok(Self::set2()),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected set1 or set2)"
            ))),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let params: PhysicalParams = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config(format!(
                "field '{path}' (line {}, column {}): {}",
                inner.line(),
                inner.column(),
                crate::error::strip_location(&inner)
            ))
        })?;
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wa_min", self.wa_min),
            ("wa_max", self.wa_max),
            ("wc", self.wc),
            ("Om", self.om),
            ("g_ac", self.g_ac),
            ("g_co", self.g_co),
            ("kappa_a", self.kappa_a),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("temperature", self.temperature),
            ("s", self.s),
            ("R_max", self.r_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "field '{name}' must be strictly positive, got {v}"
                )));
            }
        }
        if self.wa_min > self.wa_max {
            return Err(Error::Config("wa_min exceeds wa_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Oscillator Boltzmann factor.
    pub x: f64,
    /// Mean thermal phonon number.
    pub n_bar: f64,
    /// Effective oscillator decay γ' = γ(n̄+1), MHz.
    pub gamma_eff: f64,
}

pub fn thermal(params: &PhysicalParams) -> ThermalParams {
    let ratio = PLANCK * params.om * 1e6 / (BOLTZMANN * params.temperature * 1e-3);
    let x = (-ratio).exp();
    // x/(1-x) without cancellation for hot baths
    let n_bar = 1.0 / ratio.exp_m1();
    ThermalParams {
        x,
        n_bar,
        gamma_eff: params.gamma * (n_bar + 1.0),
    }
}

/// Quantities of the shifted and rotated cavity/oscillator frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub re_r: f64,
    pub im_r: f64,
    /// Drive rotation angle η, rad.
    pub eta: f64,
    /// Laser drive amplitude E/(2π), MHz.
    pub e_drive: f64,
    /// Shifted laser detuning Δ' = ω_l - ω_c', MHz.
    pub delta_prime: f64,
    /// Shifted cavity resonance ω_c', MHz.
    pub wc_prime: f64,
    /// Atomic drive detuning δ_R' = ω_r - ω_c', MHz.
    pub delta_r_prime: f64,
    /// Bare laser detuning Δ = ω_l - ω_c, MHz.
    pub delta: f64,
    /// Laser frequency, MHz.
    pub omega_l: f64,
    /// Atomic drive frequency (also the constant part of the atom frequency), MHz.
    pub omega_r: f64,
}

impl FrameParams {
    /// Resonance shift of the cavity, -2 g₀ Re(r).
    pub fn cavity_shift(&self, params: &PhysicalParams) -> f64 {
        -2.0 * params.g_co * self.re_r
    }

    /// Relative residuals of the four linear-term elimination conditions.
    pub fn residuals(&self, params: &PhysicalParams) -> [f64; 4] {
        let th = thermal(params);
        let s = params.s;
        let half_e = self.e_drive / 2.0;
        let damp = (1.0 - th.x) * th.gamma_eff / 2.0;
        let shifted = self.delta + 2.0 * params.g_co * self.re_r;
        let rel = |lhs: f64, rhs: f64| (lhs - rhs).abs() / rhs.abs().max(lhs.abs()).max(1e-300);
        [
            rel(half_e * self.eta.cos(), shifted * s),
            rel(half_e * self.eta.sin(), -params.kappa / 2.0 * s),
            rel(params.g_co * s * s, params.om * self.re_r + damp * self.im_r),
            rel(params.om * self.im_r, damp * self.re_r),
        ]
    }
}

/// Solves the frame conditions for given `s`, red-detuned hopping choice
/// Δ' = -Ω_m, ζ = 0.
pub fn derive_frame(params: &PhysicalParams) -> FrameParams {
    let th = thermal(params);
    let om = params.om;
    let s = params.s;
    let damp = (1.0 - th.x) * th.gamma_eff / 2.0;
    let re_r = params.g_co * s * s / (om + damp * damp / om);
    let im_r = damp * re_r / om;
    let wc_prime = params.wc - 2.0 * params.g_co * re_r;
    let delta_prime = -om;
    let half_kappa = params.kappa / 2.0;
    let e_drive = 2.0 * s * delta_prime.hypot(half_kappa);
    let eta = (-half_kappa).atan2(delta_prime);
    let delta = delta_prime - 2.0 * params.g_co * re_r;
    FrameParams {
        re_r,
        im_r,
        eta,
        e_drive,
        delta_prime,
        wc_prime,
        delta_r_prime: DRIVE_DETUNING_MHZ,
        delta,
        omega_l: params.wc + delta,
        omega_r: wc_prime + DRIVE_DETUNING_MHZ,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sideband_resolution: f64,
    pub optomechanical_cooperativity: f64,
    pub cavity_oscillator_coupling_ratio: f64,
    pub atom_cavity_cooperativity: f64,
    pub atom_cavity_coupling_ratio: f64,
}

impl Diagnostics {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.sideband_resolution,
            self.optomechanical_cooperativity,
            self.cavity_oscillator_coupling_ratio,
            self.atom_cavity_cooperativity,
            self.atom_cavity_coupling_ratio,
        ]
    }
}

pub fn diagnostics(params: &PhysicalParams) -> Diagnostics {
    let th = thermal(params);
    let g0s = params.g_co * params.s;
    Diagnostics {
        sideband_resolution: params.om / params.kappa,
        optomechanical_cooperativity: g0s * g0s / (params.kappa * params.gamma * th.n_bar),
        cavity_oscillator_coupling_ratio: g0s / params.kappa.max(params.gamma),
        atom_cavity_cooperativity: params.g_ac * params.g_ac / (params.kappa * params.kappa_a),
        atom_cavity_coupling_ratio: params.g_ac / params.kappa.max(params.kappa_a),
    }
}

/// One regime requirement: value must exceed 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCheck {
    pub name: String,
    pub value: f64,
    pub satisfied: bool,
}

pub fn regime_checks(d: &Diagnostics) -> Vec<RegimeCheck> {
    [
        ("sideband-resolved (Om/kappa > 1)", d.sideband_resolution),
        (
            "optomechanical cooperativity > 1",
            d.optomechanical_cooperativity,
        ),
        (
            "cavity-oscillator strong coupling",
            d.cavity_oscillator_coupling_ratio,
        ),
        ("atom-cavity cooperativity > 1", d.atom_cavity_cooperativity),
        ("atom-cavity strong coupling", d.atom_cavity_coupling_ratio),
    ]
    .into_iter()
    .map(|(name, value)| RegimeCheck {
        name: name.to_string(),
        value,
        // strict: a ratio of exactly one is not "resolved"
        satisfied: value > 1.0 + 1e-12,
    })
    .collect()
}

/// Sizes of the terms dropped in rotating-wave approximations, relative to the
/// dynamics they perturb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RwaSignificance {
    pub drive_corotating: f64,
    pub drive_counterrotating: f64,
    pub atom_control_counterrotating: f64,
    pub optomechanical_nonlinear: f64,
    pub two_mode_squeezing: f64,
    pub atom_cavity_counterrotating: f64,
    pub boosted_atom_cavity_counterrotating: f64,
}

impl RwaSignificance {
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.drive_corotating,
            self.drive_counterrotating,
            self.atom_control_counterrotating,
            self.optomechanical_nonlinear,
            self.two_mode_squeezing,
            self.atom_cavity_counterrotating,
            self.boosted_atom_cavity_counterrotating,
        ]
    }
}

pub fn rwa_significance(params: &PhysicalParams, frame: &FrameParams) -> RwaSignificance {
    let wa = params.wa_min;
    let e = frame.e_drive;
    RwaSignificance {
        drive_corotating: e / (2.0 * (frame.omega_l - params.wc).abs()),
        drive_counterrotating: e / (2.0 * (frame.omega_l + params.wc).abs()),
        atom_control_counterrotating: params.r_max / (2.0 * (frame.omega_r + wa).abs()),
        optomechanical_nonlinear: params.g_co / params.om,
        two_mode_squeezing: (params.g_co * params.s).abs() / (2.0 * frame.delta_prime).abs(),
        atom_cavity_counterrotating: params.g_ac / (wa + frame.wc_prime).abs(),
        boosted_atom_cavity_counterrotating: (params.g_ac * params.s).abs()
            / (wa + frame.omega_l).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn thermal_set1_and_set2() {
        let t1 = thermal(&PhysicalParams::set1());
        assert!((t1.x - 0.97).abs() <= 0.005, "{t1:?}");
        assert!(close(t1.n_bar, 32.3, 0.01), "{t1:?}");
        assert!((t1.gamma_eff * 1e3 - 5.0).abs() <= 0.05, "{t1:?}");
        let t2 = thermal(&PhysicalParams::set2());
        assert!((t2.x - 0.93).abs() <= 0.005, "{t2:?}");
        assert!(close(t2.n_bar, 12.6, 0.01), "{t2:?}");
        // printed to one decimal
        assert!((t2.gamma_eff * 1e3 - 2.0).abs() <= 0.05, "{t2:?}");
    }

    #[test]
    fn thermal_identities_and_hot_limit() {
        let mut p = PhysicalParams::set1();
        let mut last = thermal(&p);
        assert!((last.n_bar - last.x / (1.0 - last.x)).abs() < 1e-9 * last.n_bar);
        for t in [50.0, 100.0, 1e3, 1e5, 1e8] {
            p.temperature = t;
            let th = thermal(&p);
            assert!(th.x < 1.0 && th.x > last.x);
            assert!(th.n_bar > last.n_bar);
            assert!(th.gamma_eff > last.gamma_eff);
            last = th;
        }
        assert!(last.x > 1.0 - 1e-6);
    }

    #[test]
    fn frame_set1() {
        let p = PhysicalParams::set1();
        let f = derive_frame(&p);
        assert!(close(f.re_r, 7.5, 0.01), "{f:?}");
        assert!(close(f.im_r, 3.6e-5, 0.02), "{f:?}");
        assert!(close(f.e_drive / 1e3, 3.18, 0.01), "{f:?}");
        assert!(close(f.cavity_shift(&p), -0.18, 0.01));
        assert_eq!(f.delta_prime, -p.om);
        for r in f.residuals(&p) {
            assert!(r <= 1e-10, "{r:e}");
        }
        let approx = p.g_co * p.s * p.s / p.om;
        assert!((f.re_r - approx).abs() / f.re_r <= 1e-4);
    }

    #[test]
    fn frame_set2() {
        let p = PhysicalParams::set2();
        let f = derive_frame(&p);
        assert!(close(f.re_r, 2.7, 0.01), "{f:?}");
        assert!(close(f.im_r, 1.3e-5, 0.03), "{f:?}");
        assert!(close(f.e_drive / 1e3, 3.82, 0.01), "{f:?}");
        for r in f.residuals(&p) {
            assert!(r <= 1e-10, "{r:e}");
        }
        let approx = p.g_co * p.s * p.s / p.om;
        assert!((f.re_r - approx).abs() / f.re_r <= 1e-4);
    }

    #[test]
    fn frame_without_cavity_loss() {
        let mut p = PhysicalParams::set1();
        p.kappa = 1e-12;
        let f = derive_frame(&p);
        assert!((f.eta.abs() - std::f64::consts::PI).abs() < 1e-9);
        assert!(close(f.e_drive, 2.0 * p.s * p.om, 1e-12));
    }

    #[test]
    fn diagnostics_tables() {
        let want1 = [15.9, 298.0, 1.2, 156.0, 12.5];
        let want2 = [79.5, 343.0, 1.8, 781.0, 12.5];
        for (p, want) in [(PhysicalParams::set1(), want1), (PhysicalParams::set2(), want2)] {
            let got = diagnostics(&p).as_array();
            for (g, w) in got.iter().zip(want) {
                assert!(close(*g, w, 0.02), "{got:?} vs {want:?}");
            }
        }
        let mut p = PhysicalParams::set1();
        p.kappa = p.om;
        assert_eq!(diagnostics(&p).sideband_resolution, 1.0);
        assert!(!regime_checks(&diagnostics(&p))[0].satisfied);
    }

    #[test]
    fn rwa_tables() {
        let want1 = [99.0, 0.078, 0.00082, 0.00075, 0.038, 0.00063, 0.063];
        let want2 = [120.0, 0.094, 0.00098, 0.00019, 0.011, 0.00063, 0.076];
        for (p, want) in [(PhysicalParams::set1(), want1), (PhysicalParams::set2(), want2)] {
            let f = derive_frame(&p);
            let got = rwa_significance(&p, &f).as_array();
            for (g, w) in got.iter().zip(want) {
                assert!(close(*g, w, 0.05), "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn zero_drive_zeroes_drive_ratios() {
        let p = PhysicalParams::set1();
        let mut f = derive_frame(&p);
        f.e_drive = 0.0;
        let r = rwa_significance(&p, &f);
        assert_eq!(r.drive_corotating, 0.0);
        assert_eq!(r.drive_counterrotating, 0.0);
    }

    #[test]
    fn json_round_trip_with_units() {
        let text = serde_json::to_string_pretty(&PhysicalParams::set2()).unwrap();
        assert!(text.contains("\"kappa\": \"0.2 MHz\""), "{text}");
        let back = PhysicalParams::from_json_str(&text).unwrap();
        assert_eq!(back, PhysicalParams::set2());
    }

    #[test]
    fn json_rejects_missing_units_with_field_name() {
        let text = serde_json::to_string_pretty(&PhysicalParams::set1())
            .unwrap()
            .replace("\"1 MHz\"", "1.0");
        let err = PhysicalParams::from_json_str(&text).unwrap_err().to_string();
        assert!(err.contains("kappa"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn mixed_units_parse_to_mhz() {
        let text = r#"{"name":"x","wa_min":"9 GHz","wa_max":"13.5 GHz","wc":"10188 MHz",
            "Om":"15900 kHz","g_ac":"12.5 MHz","g_co":"12000 Hz","kappa_a":"1 MHz",
            "kappa":"1 MHz","gamma":"150 Hz","temperature":"0.025 K","s":100,"R_max":"32 MHz"}"#;
        let p = PhysicalParams::from_json_str(text).unwrap();
        let want = PhysicalParams {
            name: "x".into(),
            ..PhysicalParams::set1()
        };
        for (a, b) in [
            (p.wa_min, want.wa_min),
            (p.om, want.om),
            (p.g_co, want.g_co),
            (p.gamma, want.gamma),
            (p.temperature, want.temperature),
        ] {
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }
}
