//! One-dimensional robustness sweeps and the combined-disturbance scenarios.
//!
//! Every grid point is an isolated `run_protocol` call. Points run on a
//! bounded rayon pool and rows come back in grid order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::IntegratorStats;
use crate::error::{Error, Result};
use crate::hamiltonians::SystemParams;
use crate::protocol::{
    derive_params, run_protocol, ModelKind, ProtocolParams, RunSettings, DEFAULT_TAU1, DEFAULT_T_FINAL,
};
use crate::pulses::PulseShape;
use crate::units::DeviationUnits;

/// Environment variable capping the number of concurrent runs.
pub const THREADS_ENV: &str = "NOONSIM_THREADS";

/// Largest |δ| accepted by a sweep.
pub const DELTA_LIMIT: f64 = 0.3;
/// Largest |λ₁₂/λ| accepted by a sweep.
pub const CROSSTALK_LIMIT: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Relative error on the resonant drives.
    Delta,
    /// Offset on the off-resonant drives (MHz).
    DeltaOmega,
    /// Coupling drift (kHz).
    DeltaLambda,
    /// Crosstalk strength as a fraction of λ.
    CrosstalkRatio,
    /// Qudit dephasing (kHz).
    GammaD,
    /// Qudit relaxation (kHz).
    GammaR,
    /// Cavity photon loss (kHz).
    GammaKappa,
}

impl SweepParam {
    pub const ALL: [SweepParam; 7] = [
        Self::Delta,
        Self::DeltaOmega,
        Self::DeltaLambda,
        Self::CrosstalkRatio,
        Self::GammaD,
        Self::GammaR,
        Self::GammaKappa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Delta => "delta",
            Self::DeltaOmega => "delta_omega",
            Self::DeltaLambda => "delta_lambda",
            Self::CrosstalkRatio => "crosstalk_ratio",
            Self::GammaD => "gamma_d",
            Self::GammaR => "gamma_r",
            Self::GammaKappa => "gamma_kappa",
        }
    }

    pub fn is_rate(self) -> bool {
        matches!(self, Self::GammaD | Self::GammaR | Self::GammaKappa)
    }

    fn check(self, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(Error::Domain(format!("{} = {v} is not finite", self.name())));
        }
        match self {
            Self::Delta if v.abs() > DELTA_LIMIT => {
                Err(Error::Domain(format!("δ = {v} outside [−{DELTA_LIMIT}, {DELTA_LIMIT}]")))
            }
            Self::CrosstalkRatio if v.abs() > CROSSTALK_LIMIT => {
                Err(Error::Domain(format!("λ₁₂/λ = {v} outside [−{CROSSTALK_LIMIT}, {CROSSTALK_LIMIT}]")))
            }
            p if p.is_rate() && v < 0.0 => Err(Error::Domain(format!("{} = {v} must be non-negative", p.name()))),
            _ => Ok(()),
        }
    }

    /// Writes `v` into the settings, converting to internal units.
    pub fn apply(self, v: f64, base: &Baseline, settings: &mut RunSettings) -> Result<()> {
        self.check(v)?;
        match self {
            Self::Delta => settings.errors.delta = v,
            Self::DeltaOmega => settings.errors.delta_omega = base.units.mhz(v),
            Self::DeltaLambda => settings.errors.delta_lambda = base.units.khz(v),
            Self::CrosstalkRatio => settings.errors.crosstalk = v * base.params.system.lambda,
            Self::GammaD => settings.decoherence.gamma_d = v,
            Self::GammaR => settings.decoherence.gamma_r = v,
            Self::GammaKappa => settings.decoherence.gamma_kappa = v,
        }
        Ok(())
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
            Error::Config(format!("unknown sweep parameter `{s}` (expected {})", names.join("|")))
        })
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Evenly spaced grid `lo, …, hi` with `points ≥ 2` entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRange {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl SweepRange {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Config(format!("a sweep needs at least 2 points, got {points}")));
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("sweep bounds must be finite, got {lo}:{hi}")));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn values(&self) -> Vec<f64> {
        let last = self.points - 1;
        (0..self.points)
            .map(|k| {
                let v = self.lo + (self.hi - self.lo) * k as f64 / last as f64;
                // Trim float noise to 12 significant digits.
                format!("{v:.11e}").parse::<f64>().unwrap_or(v)
            })
            .collect()
    }
}

impl FromStr for SweepRange {
    type Err = Error;
    /// Parses `LO:HI:POINTS`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid range `{s}` (expected LO:HI:POINTS)"));
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts.as_slice() else { return Err(bad()) };
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        Self::new(lo, hi, n)
    }
}

/// Nominal protocol and settings every sweep point starts from.
#[derive(Clone, Debug, PartialEq)]
pub struct Baseline {
    pub params: ProtocolParams,
    pub settings: RunSettings,
    pub units: DeviationUnits,
}

impl Baseline {
    /// N = 4, optimized pulse, no disturbances, hybrid model.
    pub fn standard() -> Result<Self> {
        let params = derive_params(4, &SystemParams::for_photons(4), DEFAULT_TAU1, DEFAULT_T_FINAL)?;
        let settings = RunSettings { model: ModelKind::Hybrid, pulse: PulseShape::Optimized, ..Default::default() };
        Ok(Self { params, settings, units: DeviationUnits::default() })
    }

    pub fn with_model(mut self, model: ModelKind) -> Self {
        self.settings.model = model;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    /// `F₃(T_f)`; `None` when the point failed.
    pub f3: Option<f64>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub stats: IntegratorStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub range: SweepRange,
    pub baseline: Baseline,
    /// Cap on concurrent runs; `None` uses all cores (subject to `NOONSIM_THREADS`).
    pub jobs: Option<usize>,
}

/// Concurrency actually used for `requested` jobs.
pub fn resolve_jobs(requested: Option<usize>) -> usize {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let env_cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
    let mut jobs = requested.filter(|&n| n > 0).unwrap_or(cores);
    if let Some(cap) = env_cap {
        jobs = jobs.min(cap);
    }
    jobs.max(1)
}

fn par_map<T: Sync, U: Send>(items: &[T], jobs: Option<usize>, f: impl Fn(&T) -> U + Sync + Send) -> Result<Vec<U>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_jobs(jobs))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

fn run_point(base: &Baseline, settings: &RunSettings, value: f64) -> SweepRow {
    match run_protocol(&base.params, settings) {
        Ok(r) => SweepRow { value, f3: Some(r.final_fidelity()), warnings: r.warnings, error: None, stats: r.stats },
        Err(e) => {
            SweepRow { value, f3: None, warnings: Vec::new(), error: Some(e.to_string()), stats: Default::default() }
        }
    }
}

/// Runs one simulation per grid value. Individual failures are recorded in their row.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let values = spec.range.values();
    let mut prepared = Vec::with_capacity(values.len());
    for &v in &values {
        let mut s = spec.baseline.settings.clone();
        spec.param.apply(v, &spec.baseline, &mut s)?;
        prepared.push((v, s));
    }
    par_map(&prepared, spec.jobs, |(v, s)| run_point(&spec.baseline, s, *v))
}

/// Sweeps one decoherence rate with the others at their baseline values.
/// `model` defaults to the dispersive model.
pub fn decoherence_sweep(
    param: SweepParam,
    range: SweepRange,
    baseline: &Baseline,
    model: Option<ModelKind>,
    jobs: Option<usize>,
) -> Result<Vec<SweepRow>> {
    if !param.is_rate() {
        return Err(Error::Parameter(format!("`{param}` is not a decoherence rate")));
    }
    let baseline = baseline.clone().with_model(model.unwrap_or(ModelKind::Dispersive));
    run_sweep(&SweepSpec { param, range, baseline, jobs })
}

/// One row of combined disturbances, in table column order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRow {
    pub delta: f64,
    pub delta_omega_mhz: f64,
    pub delta_lambda_khz: f64,
    /// λ₁₂ as a fraction of λ.
    pub crosstalk_ratio: f64,
    pub gamma_d_khz: f64,
    pub gamma_r_khz: f64,
    pub gamma_kappa_khz: f64,
}

impl ScenarioRow {
    fn settings(&self, base: &Baseline) -> Result<RunSettings> {
        let mut s = base.settings.clone();
        for (p, v) in [
            (SweepParam::Delta, self.delta),
            (SweepParam::DeltaOmega, self.delta_omega_mhz),
            (SweepParam::DeltaLambda, self.delta_lambda_khz),
            (SweepParam::CrosstalkRatio, self.crosstalk_ratio),
            (SweepParam::GammaD, self.gamma_d_khz),
            (SweepParam::GammaR, self.gamma_r_khz),
            (SweepParam::GammaKappa, self.gamma_kappa_khz),
        ] {
            p.apply(v, base, &mut s)?;
        }
        Ok(s)
    }
}

/// Three combined-disturbance reference rows and their expected `F₃`.
pub fn reference_scenarios() -> [(ScenarioRow, f64); 3] {
    let row = |delta, dom, dlam, xt, gd, gr, gk| ScenarioRow {
        delta,
        delta_omega_mhz: dom,
        delta_lambda_khz: dlam,
        crosstalk_ratio: xt,
        gamma_d_khz: gd,
        gamma_r_khz: gr,
        gamma_kappa_khz: gk,
    };
    [
        (row(0.01, 1.0, 100.0, 0.001, 5.0, 5.0, 1.0), 0.9499),
        (row(0.02, 5.0, 500.0, 0.005, 10.0, 10.0, 1.0), 0.9361),
        (row(0.02, 5.0, 500.0, 0.01, 15.0, 15.0, 1.0), 0.9038),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub row: ScenarioRow,
    pub f3: Option<f64>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

/// Runs every row with all its disturbances applied at once.
/// `model` defaults to the dispersive model.
pub fn run_scenarios(
    rows: &[ScenarioRow],
    baseline: &Baseline,
    model: Option<ModelKind>,
    jobs: Option<usize>,
) -> Result<Vec<ScenarioResult>> {
    let baseline = baseline.clone().with_model(model.unwrap_or(ModelKind::Dispersive));
    let prepared = rows.iter().map(|r| r.settings(&baseline)).collect::<Result<Vec<_>>>()?;
    let items: Vec<(ScenarioRow, RunSettings)> = rows.iter().copied().zip(prepared).collect();
    par_map(&items, jobs, |(row, s)| {
        let r = run_point(&baseline, s, 0.0);
        ScenarioResult { row: *row, f3: r.f3, warnings: r.warnings, error: r.error }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_baseline() -> Baseline {
        let params = derive_params(2, &SystemParams::for_photons(2), DEFAULT_TAU1, DEFAULT_T_FINAL).unwrap();
        let settings = RunSettings { model: ModelKind::Effective, samples: 11, ..Default::default() };
        Baseline { params, settings, units: DeviationUnits::Angular }
    }

    #[test]
    fn range_parsing() {
        let r: SweepRange = "-0.2:0.2:21".parse().unwrap();
        let v = r.values();
        assert_eq!(v.len(), 21);
        assert_eq!(v[0], -0.2);
        assert_eq!(v[20], 0.2);
        assert_eq!(v[10], 0.0);
        assert_eq!(SweepRange::new(-0.2, 0.2, 5).unwrap().values(), vec![-0.2, -0.1, 0.0, 0.1, 0.2]);
        for bad in ["0:1", "a:1:3", "0:1:1", "0:1:x", "0:1:3:4", "nan:1:3"] {
            assert!(bad.parse::<SweepRange>().is_err(), "{bad}");
        }
    }

    #[test]
    fn parameter_names_round_trip() {
        for p in SweepParam::ALL {
            assert_eq!(p.name().parse::<SweepParam>().unwrap(), p);
        }
        assert!("gamma".parse::<SweepParam>().is_err());
    }

    #[test]
    fn domains_are_enforced() {
        let base = fast_baseline();
        let mut s = base.settings.clone();
        assert!(SweepParam::Delta.apply(0.31, &base, &mut s).is_err());
        assert!(SweepParam::CrosstalkRatio.apply(-0.021, &base, &mut s).is_err());
        assert!(SweepParam::GammaKappa.apply(-1.0, &base, &mut s).is_err());
        SweepParam::CrosstalkRatio.apply(0.01, &base, &mut s).unwrap();
        assert!((s.errors.crosstalk - 0.01 * base.params.system.lambda).abs() < 1e-15);
        SweepParam::DeltaLambda.apply(500.0, &base, &mut s).unwrap();
        assert_eq!(s.errors.delta_lambda, 0.5);
        let spec = SweepSpec {
            param: SweepParam::Delta,
            range: SweepRange::new(-0.4, 0.0, 3).unwrap(),
            baseline: base,
            jobs: Some(1),
        };
        assert!(matches!(run_sweep(&spec), Err(Error::Domain(_))));
    }

    #[test]
    fn rows_come_back_in_grid_order() {
        let spec = SweepSpec {
            param: SweepParam::Delta,
            range: SweepRange::new(-0.2, 0.2, 5).unwrap(),
            baseline: fast_baseline(),
            jobs: Some(3),
        };
        let rows = run_sweep(&spec).unwrap();
        let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
        assert_eq!(values, spec.range.values());
        // The reduced models are exact at δ = 0 and lose fidelity away from it.
        assert!((rows[2].f3.unwrap() - 1.0).abs() < 1e-6);
        assert!(rows[0].f3.unwrap() < rows[1].f3.unwrap());
    }

    #[test]
    fn zero_scenario_matches_clean_run() {
        let base = fast_baseline();
        let zero = ScenarioRow {
            delta: 0.0,
            delta_omega_mhz: 0.0,
            delta_lambda_khz: 0.0,
            crosstalk_ratio: 0.0,
            gamma_d_khz: 0.0,
            gamma_r_khz: 0.0,
            gamma_kappa_khz: 0.0,
        };
        let res = run_scenarios(&[zero], &base, Some(ModelKind::Effective), Some(1)).unwrap();
        let clean = run_protocol(&base.params, &base.settings).unwrap().final_fidelity();
        assert!((res[0].f3.unwrap() - clean).abs() < 1e-9);
    }

    #[test]
    fn decoherence_sweep_rejects_error_parameters() {
        let base = fast_baseline();
        let r = SweepRange::new(0.0, 1.0, 2).unwrap();
        assert!(decoherence_sweep(SweepParam::Delta, r, &base, None, Some(1)).is_err());
    }

    #[test]
    fn failed_points_are_recorded() {
        let mut base = fast_baseline();
        base.settings.cavity_dim = Some(4);
        let spec = SweepSpec {
            param: SweepParam::Delta,
            range: SweepRange::new(0.0, 0.1, 2).unwrap(),
            baseline: base,
            jobs: Some(1),
        };
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.f3.is_none() && r.error.as_deref().unwrap().contains("truncation")));
    }
}
