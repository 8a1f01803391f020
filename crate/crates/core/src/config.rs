//! JSON run configuration: parsing, defaults and conversion to internal units.
//!
//! ```json
//! {
//!   "system":      { "lambda_mhz": 130.0, "detuning_ghz": 5.96, "delta_prime_mhz": -0.67 },
//!   "protocol":    { "n": 4, "model": "hybrid", "pulse": "optimized" },
//!   "errors":      { "delta": 0.1, "crosstalk_ratio": 0.01 },
//!   "decoherence": { "gamma_d_khz": 5.0 },
//!   "integrator":  { "rtol": 1e-8 },
//!   "output":      { "dir": "out", "samples": 301 }
//! }
//! ```
//!
//! Only `protocol.n` is required. System constants default to the table row for `N`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{DecoherenceRates, IntegratorConfig, TrajectoryConfig};
use crate::error::{Error, Result};
use crate::hamiltonians::{ErrorModel, SystemParams, CAVITY_FREQS_GHZ, LEVEL_FREQS_GHZ};
use crate::protocol::{derive_params, Backend, ModelKind, ProtocolParams, RunSettings, DEFAULT_TAU1, DEFAULT_T_FINAL};
use crate::pulses::PulseShape;
use crate::sweeps::Baseline;
use crate::units::{self, DeviationUnits};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub system: SystemBlock,
    pub protocol: ProtocolBlock,
    #[serde(default)]
    pub errors: ErrorsBlock,
    #[serde(default)]
    pub decoherence: DecoherenceBlock,
    #[serde(default)]
    pub integrator: IntegratorBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Unset entries take the table values for the configured `N`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemBlock {
    pub level_freqs_ghz: Option<[f64; 5]>,
    pub cavity_freqs_ghz: Option<[f64; 2]>,
    /// λ/2π.
    pub lambda_mhz: Option<f64>,
    /// Δ/2π.
    pub detuning_ghz: Option<f64>,
    /// δ′/2π.
    pub delta_prime_mhz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolBlock {
    /// Photon number N.
    pub n: u32,
    #[serde(default = "default_tau1")]
    pub tau1_us: f64,
    #[serde(default = "default_t_final")]
    pub t_final_us: f64,
    #[serde(default = "default_pulse")]
    pub pulse: PulseShape,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    /// Fock truncation override.
    #[serde(default)]
    pub cavity_dim: Option<usize>,
    #[serde(default = "default_last_step")]
    pub last_step: u8,
    /// Offset added to δ̃/2π (and so to the step-3 modulation).
    #[serde(default)]
    pub delta_tilde_offset_mhz: f64,
}

fn default_tau1() -> f64 {
    DEFAULT_TAU1
}
fn default_t_final() -> f64 {
    DEFAULT_T_FINAL
}
fn default_pulse() -> PulseShape {
    PulseShape::Optimized
}
fn default_model() -> ModelKind {
    ModelKind::Original
}
fn default_last_step() -> u8 {
    3
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorsBlock {
    /// Relative error on the resonant drives.
    pub delta: f64,
    pub delta_omega_mhz: f64,
    pub delta_lambda_khz: f64,
    /// λ₁₂/λ.
    pub crosstalk_ratio: f64,
    /// How `delta_omega_mhz` and `delta_lambda_khz` convert to rad/µs.
    pub units: DeviationUnits,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoherenceBlock {
    pub gamma_d_khz: f64,
    pub gamma_r_khz: f64,
    pub gamma_kappa_khz: f64,
    /// κ_φ/2π, used only in the dressed-rate report.
    pub kappa_phi_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorBlock {
    pub rtol: f64,
    pub atol: f64,
    pub max_step_us: Option<f64>,
    pub fixed_step_us: Option<f64>,
    pub max_steps: u64,
    pub backend: Backend,
    /// Jump trajectories per run when the trajectory backend is used.
    pub trajectories: usize,
    pub seed: u64,
}

impl Default for IntegratorBlock {
    fn default() -> Self {
        let i = IntegratorConfig::default();
        let t = TrajectoryConfig::default();
        Self {
            rtol: i.rtol,
            atol: i.atol,
            max_step_us: i.max_step,
            fixed_step_us: i.fixed_step,
            max_steps: i.max_steps,
            backend: Backend::Auto,
            trajectories: t.count,
            seed: t.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: String,
    /// Rows in the time-series output.
    pub samples: usize,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: "out".into(), samples: 301 }
    }
}

impl Config {
    /// Parses and checks a configuration. Every failure is an [`Error::Config`]
    /// naming the offending key or position.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg.resolved())
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<()> {
        let p = &self.protocol;
        let fail = |m: String| Err(Error::Config(m));
        if p.n < 1 {
            return fail("protocol.n must be at least 1".into());
        }
        if !(p.tau1_us > 0.0) {
            return fail(format!("protocol.tau1_us must be positive, got {}", p.tau1_us));
        }
        if !(p.t_final_us > p.tau1_us) {
            return fail(format!("protocol.t_final_us must exceed tau1_us, got {}", p.t_final_us));
        }
        if !(1..=3).contains(&p.last_step) {
            return fail(format!("protocol.last_step must be 1, 2 or 3, got {}", p.last_step));
        }
        if let Some(d) = p.cavity_dim {
            if d < 2 {
                return fail(format!("protocol.cavity_dim must be at least 2, got {d}"));
            }
        }
        if self.output.samples < 2 {
            return fail(format!("output.samples must be at least 2, got {}", self.output.samples));
        }
        let i = &self.integrator;
        if !(i.rtol > 0.0) || !(i.atol > 0.0) {
            return fail("integrator.rtol and integrator.atol must be positive".into());
        }
        let d = &self.decoherence;
        for (k, v) in [
            ("gamma_d_khz", d.gamma_d_khz),
            ("gamma_r_khz", d.gamma_r_khz),
            ("gamma_kappa_khz", d.gamma_kappa_khz),
            ("kappa_phi_hz", d.kappa_phi_hz),
        ] {
            if !(v >= 0.0) {
                return fail(format!("decoherence.{k} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    /// Fills every defaulted system constant so the echoed config is explicit.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let (dp, det, lam) = SystemParams::table_row(c.protocol.n);
        let s = &mut c.system;
        s.level_freqs_ghz.get_or_insert(LEVEL_FREQS_GHZ);
        s.cavity_freqs_ghz.get_or_insert(CAVITY_FREQS_GHZ);
        s.lambda_mhz.get_or_insert(lam);
        s.detuning_ghz.get_or_insert(det);
        s.delta_prime_mhz.get_or_insert(dp);
        c
    }

    pub fn system_params(&self) -> SystemParams {
        let r = self.resolved();
        let s = &r.system;
        SystemParams::from_config_units(
            s.level_freqs_ghz.expect("resolved"),
            s.cavity_freqs_ghz.expect("resolved"),
            s.lambda_mhz.expect("resolved"),
            s.detuning_ghz.expect("resolved"),
            s.delta_prime_mhz.expect("resolved"),
        )
    }

    pub fn protocol_params(&self) -> Result<ProtocolParams> {
        let p = &self.protocol;
        let mut params = derive_params(p.n, &self.system_params(), p.tau1_us, p.t_final_us)?;
        let offset = units::mhz(p.delta_tilde_offset_mhz);
        params.delta_tilde += offset;
        params.step3_modulation += offset;
        Ok(params)
    }

    pub fn run_settings(&self) -> Result<RunSettings> {
        let e = &self.errors;
        let u = e.units;
        let lambda = self.system_params().lambda;
        let i = &self.integrator;
        let d = &self.decoherence;
        Ok(RunSettings {
            model: self.protocol.model,
            pulse: self.protocol.pulse,
            errors: ErrorModel {
                delta: e.delta,
                delta_omega: u.mhz(e.delta_omega_mhz),
                delta_lambda: u.khz(e.delta_lambda_khz),
                crosstalk: e.crosstalk_ratio * lambda,
            },
            decoherence: DecoherenceRates {
                gamma_d: d.gamma_d_khz,
                gamma_r: d.gamma_r_khz,
                gamma_kappa: d.gamma_kappa_khz,
                kappa_phi: d.kappa_phi_hz,
            },
            integrator: IntegratorConfig {
                rtol: i.rtol,
                atol: i.atol,
                max_step: i.max_step_us,
                fixed_step: i.fixed_step_us,
                max_steps: i.max_steps,
            },
            trajectories: TrajectoryConfig { count: i.trajectories, seed: i.seed },
            backend: i.backend,
            cavity_dim: self.protocol.cavity_dim,
            samples: self.output.samples,
            last_step: self.protocol.last_step,
        })
    }

    pub fn baseline(&self) -> Result<Baseline> {
        Ok(Baseline { params: self.protocol_params()?, settings: self.run_settings()?, units: self.errors.units })
    }

    /// Canonical JSON of the resolved configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.resolved()).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_table_defaults() {
        let c = Config::from_json(r#"{"protocol": {"n": 2}}"#).unwrap();
        assert_eq!(c.system.lambda_mhz, Some(141.42));
        assert_eq!(c.system.detuning_ghz, Some(5.0));
        assert_eq!(c.protocol.model, ModelKind::Original);
        let p = c.protocol_params().unwrap();
        assert!((units::to_mhz(p.delta0) - 4.0).abs() < 1e-3);
    }

    #[test]
    fn missing_photon_number_is_named() {
        let err = Config::from_json(r#"{"protocol": {"tau1_us": 0.01}}"#).unwrap_err();
        assert!(err.to_string().contains("`n`"), "{err}");
        let err = Config::from_json(r#"{}"#).unwrap_err();
        assert!(err.to_string().contains("`protocol`"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"protocol": {"n": 2}, "extra": 1}"#,
            r#"{"protocol": {"n": 2, "photons": 3}}"#,
            r#"{"protocol": {"n": 2}, "errors": {"dleta": 0.1}}"#,
            r#"{"protocol": {"n": 2}, "integrator": {"rtol": 1e-8, "order": 5}}"#,
        ] {
            let err = Config::from_json(text).unwrap_err();
            assert!(err.to_string().contains("unknown field"), "{err}");
        }
    }

    #[test]
    fn range_checks() {
        for text in [
            r#"{"protocol": {"n": 0}}"#,
            r#"{"protocol": {"n": 2, "last_step": 4}}"#,
            r#"{"protocol": {"n": 2}, "output": {"samples": 1}}"#,
            r#"{"protocol": {"n": 2}, "decoherence": {"gamma_d_khz": -1}}"#,
            r#"{"protocol": {"n": 2, "tau1_us": 0}}"#,
        ] {
            assert!(matches!(Config::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = Config::from_json(
            r#"{"protocol": {"n": 4, "model": "hybrid"}, "errors": {"delta_omega_mhz": -10, "units": "cyclic"}}"#,
        )
        .unwrap();
        let again = Config::from_json(&c.to_json()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
    }

    #[test]
    fn settings_convert_units() {
        let c = Config::from_json(
            r#"{"protocol": {"n": 4, "delta_tilde_offset_mhz": 1.0},
                "errors": {"delta_omega_mhz": 5, "delta_lambda_khz": 500, "crosstalk_ratio": 0.01},
                "decoherence": {"gamma_kappa_khz": 2}}"#,
        )
        .unwrap();
        let s = c.run_settings().unwrap();
        assert_eq!(s.errors.delta_omega, 5.0);
        assert_eq!(s.errors.delta_lambda, 0.5);
        assert!((s.errors.crosstalk - 0.01 * units::mhz(130.0)).abs() < 1e-12);
        assert_eq!(s.decoherence.gamma_kappa, 2.0);
        let p = c.protocol_params().unwrap();
        let nominal = derive_params(4, &SystemParams::for_photons(4), DEFAULT_TAU1, DEFAULT_T_FINAL).unwrap();
        assert!((p.step3_modulation - nominal.step3_modulation - units::mhz(1.0)).abs() < 1e-9);

        let cyclic =
            Config::from_json(r#"{"protocol": {"n": 4}, "errors": {"delta_omega_mhz": 5, "units": "cyclic"}}"#)
                .unwrap();
        assert!((cyclic.run_settings().unwrap().errors.delta_omega - units::mhz(5.0)).abs() < 1e-12);
    }
}
