//! The three-step preparation: derived parameters, step targets, and the
//! orchestrated evolution under a chosen model.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    self, build_collapse_set, DecoherenceRates, IntegratorConfig, IntegratorStats, Probe, Segment, TrajectoryConfig,
};
use crate::error::{Error, Result};
use crate::hamiltonians::{
    build_effective, build_full, build_step1_eff, build_step2_eff, build_step3_reduced, DriveSet, ErrorModel,
    SystemParams, TimeDependentOperator,
};
use crate::hilbert::{self, overlap_to_fidelity, DensityMatrix, HilbertSpec, StateVector, QUDIT_DIM};
use crate::linalg::{ONE, ZERO};
use crate::pulses::{Envelope, PulseShape};

pub use crate::dynamics::dressed_decoherence;

/// Default duration of step 1 (µs).
pub const DEFAULT_TAU1: f64 = 0.01;
/// Default total protocol time (µs).
pub const DEFAULT_T_FINAL: f64 = 15.0;
/// Top-two-Fock-level population above which a run is flagged.
pub const LEAKAGE_LIMIT: f64 = 1e-4;

/// Everything the three steps need, derived from `N` and the system constants.
/// Angular frequencies in rad/µs, times in µs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: u32,
    pub system: SystemParams,
    pub alpha0: f64,
    /// Stark coefficient `δ₀ = λ²/Δ`.
    pub delta0: f64,
    /// Step-2 oscillator frequency `ω_s2 = δ₀ + δ′`.
    pub omega_s2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    /// Step-2 drive amplitude `Ω_s2 = α₀Δ/(λT₂)`.
    pub omega_s2_amp: f64,
    /// Step-3 off-resonant drive `Ω′_s3 = −ω_s2 α₀ Δ/λ`.
    pub omega_s3_off: f64,
    /// `δ̃ = Nω_s2 − Ω′²/Δ − δ₀`.
    pub delta_tilde: f64,
    /// `ε_{N,0} = ⟨N|D(α₀)|0⟩`.
    pub epsilon_n0: f64,
    /// Step-2 global phase `(λ² + Ω_s2²)T₂/Δ`.
    pub theta_s2: f64,
    /// Coefficient `A` of the optimized pulse.
    pub invariant_a: f64,
    /// Modulation frequency of the step-3 resonant drives, nominally `Nδ′ + δ̃`.
    pub step3_modulation: f64,
}

impl ProtocolParams {
    /// `T₂ = τ₂ − τ₁ = 2π/ω_s2`.
    pub fn step2_duration(&self) -> f64 {
        self.tau2 - self.tau1
    }

    pub fn step3_duration(&self) -> f64 {
        self.tau3 - self.tau2
    }

    pub fn step_bounds(&self) -> [f64; 3] {
        [self.tau1, self.tau2, self.tau3]
    }
}

/// `(N/e)^{N/2}/√N!`.
pub fn coherent_overlap(n: u32) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let nf = n as f64;
    let ln_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
    (0.5 * nf * (nf.ln() - 1.0) - 0.5 * ln_fact).exp()
}

pub fn derive_params(n: u32, system: &SystemParams, tau1: f64, t_final: f64) -> Result<ProtocolParams> {
    if n < 1 {
        return Err(Error::Parameter("photon number N must be at least 1".into()));
    }
    if !(tau1 > 0.0) {
        return Err(Error::Parameter(format!("τ₁ must be positive, got {tau1}")));
    }
    let delta0 = system.stark()?;
    let omega_s2 = delta0 + system.delta_prime;
    if !(omega_s2 > 0.0) {
        return Err(Error::Parameter(format!(
            "ω_s2 = δ₀ + δ′ = {:.4} MHz must be positive",
            crate::units::to_mhz(omega_s2)
        )));
    }
    let t2 = 2.0 * PI / omega_s2;
    let tau2 = tau1 + t2;
    if tau2 >= t_final {
        return Err(Error::Scheduling(format!("τ₂ = {tau2:.4} µs does not precede T_f = {t_final} µs")));
    }
    let (lam, det) = (system.lambda, system.detuning);
    let alpha0 = (n as f64).sqrt();
    let omega_s2_amp = alpha0 * det / (lam * t2);
    let omega_s3_off = -omega_s2 * alpha0 * det / lam;
    let delta_tilde = n as f64 * omega_s2 - omega_s3_off * omega_s3_off / det - delta0;
    Ok(ProtocolParams {
        n,
        system: system.clone(),
        alpha0,
        delta0,
        omega_s2,
        tau1,
        tau2,
        tau3: t_final,
        omega_s2_amp,
        omega_s3_off,
        delta_tilde,
        epsilon_n0: coherent_overlap(n),
        theta_s2: (lam * lam + omega_s2_amp * omega_s2_amp) * t2 / det,
        invariant_a: 1.0,
        step3_modulation: n as f64 * system.delta_prime + delta_tilde,
    })
}

/// Separation ratios behind the rotating-wave and dispersive approximations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RwaReport {
    /// Peak step-1 π-pulse amplitude over the Stark coefficient.
    pub step1_over_stark: f64,
    /// `ω_s2` over the peak step-3 resonant amplitude (π shape).
    pub omega_s2_over_step3: f64,
    /// `|δ′|` over the peak step-3 resonant amplitude (π shape).
    pub delta_prime_over_step3: f64,
    pub detuning_over_lambda: f64,
    pub detuning_over_step2: f64,
    pub warnings: Vec<String>,
}

pub fn rwa_report(p: &ProtocolParams) -> RwaReport {
    let s1 = PI / (2.0 * p.tau1);
    let s3 = PI / (2.0 * p.step3_duration() * p.epsilon_n0);
    let det = p.system.detuning.abs();
    let mut r = RwaReport {
        step1_over_stark: s1 / p.delta0,
        omega_s2_over_step3: p.omega_s2 / s3,
        delta_prime_over_step3: p.system.delta_prime.abs() / s3,
        detuning_over_lambda: det / p.system.lambda,
        detuning_over_step2: det / p.omega_s2_amp,
        warnings: Vec::new(),
    };
    for (name, v) in [
        ("peak Ω_s1 / (λ²/Δ)", r.step1_over_stark),
        ("ω_s2 / peak Ω̃_s3", r.omega_s2_over_step3),
        ("|δ′| / peak Ω̃_s3", r.delta_prime_over_step3),
        ("Δ/λ", r.detuning_over_lambda),
        ("Δ/Ω_s2", r.detuning_over_step2),
    ] {
        if v < 10.0 {
            r.warnings.push(format!("{name} = {v:.2} is below 10"));
        }
    }
    r
}

/// Target of step `p` (1, 2 or 3).
pub fn target_state(p: u8, params: &ProtocolParams, spec: HilbertSpec) -> Result<StateVector> {
    let d = spec.cavity_dim();
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    let mut vac = vec![ZERO; d];
    vac[0] = ONE;
    match p {
        1 => Ok(StateVector::basis(spec, 3, 0, 0).combine(s, &StateVector::basis(spec, 4, 0, 0), s)),
        2 => {
            let disp = hilbert::displacement(params.alpha0, d)?.displaced_vacuum();
            let a = StateVector::product(spec, 3, &vac, &disp)?;
            let b = StateVector::product(spec, 4, &disp, &vac)?;
            Ok(a.combine(s, &b, s).scaled(C64::from_polar(1.0, params.theta_s2)))
        }
        3 => {
            let n = params.n as usize;
            if n >= d {
                return Err(Error::Truncation { population: 1.0, cavity_dim: d });
            }
            hilbert::displacement(params.alpha0, d)?;
            let phase = C64::from_polar(1.0, params.theta_s2 + 4.0 * params.system.delta_prime * params.tau3);
            Ok(StateVector::basis(spec, 0, n, 0).combine(s, &StateVector::basis(spec, 0, 0, n), s).scaled(phase))
        }
        other => Err(Error::Parameter(format!("no target for step {other}"))),
    }
}

/// Which Hamiltonian drives each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Rotating-frame model for all steps.
    Original,
    /// Per-step reduced models.
    Effective,
    /// Rotating-frame model for steps 1–2, dispersive model for step 3.
    Hybrid,
    /// Dispersive model for all steps.
    Dispersive,
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Self::Original),
            "effective" => Ok(Self::Effective),
            "hybrid" => Ok(Self::Hybrid),
            "dispersive" => Ok(Self::Dispersive),
            other => {
                Err(Error::Config(format!("unknown model `{other}` (expected original|effective|hybrid|dispersive)")))
            }
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Original => "original",
            Self::Effective => "effective",
            Self::Hybrid => "hybrid",
            Self::Dispersive => "dispersive",
        })
    }
}

/// Master-equation backend.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Direct integration up to the size limit, trajectories beyond.
    #[default]
    Auto,
    Direct,
    Trajectories,
}

/// Everything besides the derived parameters that shapes a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub model: ModelKind,
    pub pulse: PulseShape,
    pub errors: ErrorModel,
    pub decoherence: DecoherenceRates,
    pub integrator: IntegratorConfig,
    pub trajectories: TrajectoryConfig,
    pub backend: Backend,
    /// Fock truncation; `None` picks the default for `N`.
    pub cavity_dim: Option<usize>,
    /// Number of evenly spaced output samples over the run.
    pub samples: usize,
    /// Last step to integrate (1, 2 or 3).
    pub last_step: u8,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            model: ModelKind::Original,
            pulse: PulseShape::Optimized,
            errors: ErrorModel::default(),
            decoherence: DecoherenceRates::default(),
            integrator: IntegratorConfig::default(),
            trajectories: TrajectoryConfig::default(),
            backend: Backend::Auto,
            cavity_dim: None,
            samples: 301,
            last_step: 3,
        }
    }
}

/// Observables at one sample time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub fidelity: [f64; 3],
    pub populations: [f64; QUDIT_DIM],
    pub nbar: [f64; 2],
    /// Largest population of the top two Fock levels over both cavities.
    pub leakage: f64,
}

/// Final state of a run, when one is kept.
#[derive(Clone, Debug)]
pub enum FinalState {
    Pure(StateVector),
    Mixed(DensityMatrix),
    /// Trajectory runs only report averages.
    Averaged,
}

#[derive(Clone, Debug)]
pub struct SimResult {
    pub params: ProtocolParams,
    pub settings: RunSettings,
    pub cavity_dim: usize,
    /// Evenly spaced output grid.
    pub times: Vec<f64>,
    pub series: Vec<Observables>,
    /// Observables exactly at τ₁, τ₂, τ₃ (only the integrated steps).
    pub at_boundaries: Vec<Observables>,
    pub final_state: FinalState,
    pub stats: IntegratorStats,
    pub backend: &'static str,
    pub warnings: Vec<String>,
    pub leakage_flagged: bool,
    /// Norm or trace drift recorded by the integrator.
    pub drift: f64,
    pub params_hash: String,
}

impl SimResult {
    /// `F_p(τ_p)` for the integrated steps.
    pub fn step_fidelities(&self) -> Vec<f64> {
        self.at_boundaries.iter().enumerate().map(|(k, o)| o.fidelity[k]).collect()
    }

    pub fn final_fidelity(&self) -> f64 {
        self.at_boundaries.last().map(|o| o.fidelity[self.at_boundaries.len() - 1]).unwrap_or(f64::NAN)
    }
}

/// Sparse target amplitudes.
type SparseState = Vec<(usize, C64)>;

fn sparse(psi: &StateVector) -> SparseState {
    psi.amplitudes().iter().enumerate().filter(|(_, v)| v.norm_sqr() > 0.0).map(|(i, v)| (i, *v)).collect()
}

/// Row layout: three target overlaps, five qudit populations, two photon
/// numbers, two per-cavity leakage populations. All linear in ρ.
struct ProtocolProbe {
    spec: HilbertSpec,
    targets: [SparseState; 3],
}

const PROBE_WIDTH: usize = 3 + QUDIT_DIM + 2 + 2;

impl ProtocolProbe {
    fn diagonal_terms(&self, pop: impl Fn(usize) -> f64, out: &mut [f64]) {
        let d = self.spec.cavity_dim();
        out[3..].fill(0.0);
        for i in 0..self.spec.dim() {
            let p = pop(i);
            if p == 0.0 {
                continue;
            }
            let (q, n1, n2) = self.spec.labels(i);
            out[3 + q] += p;
            out[8] += n1 as f64 * p;
            out[9] += n2 as f64 * p;
            if n1 + 2 >= d {
                out[10] += p;
            }
            if n2 + 2 >= d {
                out[11] += p;
            }
        }
    }

    fn decode(&self, row: &[f64]) -> Result<Observables> {
        let mut o = Observables::default();
        for k in 0..3 {
            o.fidelity[k] = overlap_to_fidelity(row[k])?;
        }
        o.populations.copy_from_slice(&row[3..8]);
        o.nbar = [row[8], row[9]];
        o.leakage = row[10].max(row[11]);
        Ok(o)
    }
}

impl Probe for ProtocolProbe {
    fn width(&self) -> usize {
        PROBE_WIDTH
    }

    fn state(&self, psi: &[C64], out: &mut [f64]) {
        for (k, t) in self.targets.iter().enumerate() {
            let amp: C64 = t.iter().map(|&(i, v)| v.conj() * psi[i]).sum();
            out[k] = amp.norm_sqr();
        }
        self.diagonal_terms(|i| psi[i].norm_sqr(), out);
    }

    fn density(&self, rho: &[C64], out: &mut [f64]) {
        let n = self.spec.dim();
        for (k, t) in self.targets.iter().enumerate() {
            let mut acc = ZERO;
            for &(i, a) in t {
                for &(j, b) in t {
                    acc += a.conj() * rho[i * n + j] * b;
                }
            }
            out[k] = acc.re;
        }
        self.diagonal_terms(|i| rho[i * n + i].re, out);
    }
}

fn step_drives(p: &ProtocolParams, pulse: PulseShape, step: u8) -> Result<DriveSet> {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    Ok(match step {
        1 => {
            let e = Envelope::transfer(pulse, 0.0, p.tau1, p.invariant_a)?.scaled(s);
            DriveSet { tilde0: Some(e.clone()), bar0: Some(e), ..Default::default() }
        }
        2 => {
            let e = Envelope::step2(p.tau1, p.step2_duration(), p.omega_s2_amp, p.omega_s2);
            DriveSet { omega1: Some(e.clone()), omega2: Some(e), ..Default::default() }
        }
        _ => {
            let res = Envelope::step3_resonant(
                pulse,
                p.tau2,
                p.step3_duration(),
                p.invariant_a,
                p.step3_modulation,
                p.epsilon_n0,
            )?;
            let off = Envelope::step3_off_resonant(p.tau2, p.step3_duration(), p.omega_s3_off);
            DriveSet { tilde0: Some(res.clone()), bar0: Some(res), omega1: Some(off.clone()), omega2: Some(off) }
        }
    })
}

fn step_hamiltonian(
    p: &ProtocolParams,
    settings: &RunSettings,
    spec: HilbertSpec,
    step: u8,
) -> Result<TimeDependentOperator> {
    let errors = &settings.errors;
    let full = |drives: DriveSet| build_full(spec, &p.system, &drives, errors);
    let dispersive = |drives: DriveSet| build_effective(spec, &p.system, &drives, errors);
    let drives = step_drives(p, settings.pulse, step)?;
    match (settings.model, step) {
        (ModelKind::Original, _) | (ModelKind::Hybrid, 1 | 2) => full(drives),
        (ModelKind::Dispersive, _) | (ModelKind::Hybrid, _) => dispersive(drives),
        (ModelKind::Effective, 1) => {
            let e = Envelope::transfer(settings.pulse, 0.0, p.tau1, p.invariant_a)?
                .scaled(C64::new(1.0 + errors.delta, 0.0));
            Ok(build_step1_eff(spec, &e))
        }
        (ModelKind::Effective, 2) => build_step2_eff(spec, p),
        (ModelKind::Effective, _) => {
            let e = Envelope::step3_base(settings.pulse, p.tau2, p.step3_duration(), p.invariant_a)?
                .scaled(C64::new(1.0 + errors.delta, 0.0));
            build_step3_reduced(spec, p, &e)
        }
    }
}

/// Output grid plus the step boundaries, merged and sorted.
fn sample_times(grid: &[f64], bounds: &[f64]) -> (Vec<f64>, Vec<Option<usize>>, Vec<usize>) {
    let mut all: Vec<(f64, Option<usize>)> = grid.iter().enumerate().map(|(k, &t)| (t, Some(k))).collect();
    all.extend(bounds.iter().map(|&t| (t, None)));
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.is_some().cmp(&a.1.is_some())));
    let mut times: Vec<f64> = Vec::new();
    let mut grid_of: Vec<Option<usize>> = Vec::new();
    for (t, g) in all {
        match times.last() {
            Some(&last) if (t - last).abs() <= 1e-12 * t.abs().max(1.0) => {
                if grid_of.last().copied().flatten().is_none() {
                    *grid_of.last_mut().expect("non-empty") = g;
                }
            }
            _ => {
                times.push(t);
                grid_of.push(g);
            }
        }
    }
    let at_bounds = bounds
        .iter()
        .map(|&b| times.iter().position(|&t| (t - b).abs() <= 1e-12 * b.abs().max(1.0)).expect("boundary sampled"))
        .collect();
    (times, grid_of, at_bounds)
}

fn hash_inputs(p: &ProtocolParams, s: &RunSettings) -> String {
    let payload = serde_json::to_vec(&(p, s)).unwrap_or_default();
    hex::encode(Sha256::digest(&payload))
}

/// Runs steps 1 to `settings.last_step` from `|0,0,0⟩`, each starting from
/// the previous step's final state.
pub fn run_protocol(params: &ProtocolParams, settings: &RunSettings) -> Result<SimResult> {
    let last = settings.last_step;
    if !(1..=3).contains(&last) {
        return Err(Error::Parameter(format!("last step must be 1, 2 or 3, got {last}")));
    }
    if settings.samples < 2 {
        return Err(Error::Parameter("at least two samples are needed".into()));
    }
    let spec = match settings.cavity_dim {
        Some(d) => HilbertSpec::new(d)?,
        None => HilbertSpec::default_for_photons(params.n),
    };
    let mut warnings = params.system.validate()?;
    warnings.extend(rwa_report(params).warnings);
    let disp = hilbert::displacement(params.alpha0, spec.cavity_dim())?;
    warnings.extend(disp.warning());
    if settings.model == ModelKind::Effective
        && (settings.errors.delta_omega != 0.0
            || settings.errors.delta_lambda != 0.0
            || settings.errors.crosstalk != 0.0)
    {
        warnings.push("reduced step models only carry the resonant-drive error δ; other errors are ignored".into());
    }
    let targets = [1, 2, 3].map(|k| target_state(k, params, spec).map(|t| sparse(&t)));
    let [t1, t2, t3] = targets;
    let probe = ProtocolProbe { spec, targets: [t1?, t2?, t3?] };

    let bounds: Vec<f64> = params.step_bounds()[..last as usize].to_vec();
    let t_end = *bounds.last().expect("at least one step");
    let n_grid = settings.samples;
    let grid: Vec<f64> = (0..n_grid).map(|k| t_end * k as f64 / (n_grid - 1) as f64).collect();
    let (times, grid_of, at_bounds) = sample_times(&grid, &bounds);

    let starts = [0.0, params.tau1, params.tau2];
    let labels = ["step 1", "step 2", "step 3"];
    let mut schedule = Vec::new();
    for step in 1..=last {
        let k = (step - 1) as usize;
        let h = step_hamiltonian(params, settings, spec, step).map_err(|e| e.in_step(labels[k]))?;
        schedule.push(Segment { label: labels[k].into(), hamiltonian: h, t_start: starts[k], t_end: bounds[k] });
    }

    let psi0 = StateVector::basis(spec, 0, 0, 0);
    let rates = &settings.decoherence;
    let collapse = build_collapse_set(spec, rates.gamma_d, rates.gamma_r, rates.gamma_kappa)?;
    let cfg = &settings.integrator;
    let (table, final_state, stats, backend, drift) = if collapse.is_empty() {
        let run = dynamics::evolve_schedule(&schedule, &psi0, &times, cfg, &probe)?;
        (run.samples, FinalState::Pure(run.final_state), run.stats, "schrodinger", run.norm_drift)
    } else {
        let direct = match settings.backend {
            Backend::Direct => true,
            Backend::Trajectories => false,
            Backend::Auto => spec.dim() <= dynamics::lindblad::DIRECT_DIM_LIMIT,
        };
        if direct {
            let run = dynamics::evolve_density_schedule(&schedule, &psi0.to_density(), &times, &collapse, cfg, &probe)?;
            (run.samples, FinalState::Mixed(run.final_state), run.stats, "lindblad-direct", run.trace_drift)
        } else {
            let run = dynamics::evolve_trajectories(
                &schedule,
                &psi0,
                &times,
                &collapse,
                cfg,
                &settings.trajectories,
                &probe,
            )?;
            warnings.push(format!(
                "{} jump trajectories, no-jump weight {:.4}, {} jumps",
                run.trajectories, run.no_jump_probability, run.jumps
            ));
            (run.samples, FinalState::Averaged, run.stats, "lindblad-trajectories", 0.0)
        }
    };

    let mut series = vec![Observables::default(); n_grid];
    let mut at_boundaries = Vec::with_capacity(at_bounds.len());
    for (k, g) in grid_of.iter().enumerate() {
        if let Some(g) = g {
            series[*g] = probe.decode(table.row(k))?;
        }
    }
    for &k in &at_bounds {
        at_boundaries.push(probe.decode(table.row(k))?);
    }
    let max_leak = series.iter().chain(&at_boundaries).map(|o| o.leakage).fold(0.0, f64::max);
    let leakage_flagged = max_leak >= LEAKAGE_LIMIT;
    if leakage_flagged {
        warnings
            .push(format!("truncation leakage {max_leak:.2e} in the top two Fock levels (d = {})", spec.cavity_dim()));
    }
    Ok(SimResult {
        params: params.clone(),
        settings: settings.clone(),
        cavity_dim: spec.cavity_dim(),
        times: grid,
        series,
        at_boundaries,
        final_state,
        stats,
        backend,
        warnings,
        leakage_flagged,
        drift,
        params_hash: hash_inputs(params, settings),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units;
    use approx::assert_abs_diff_eq;

    #[test]
    fn derived_values_for_two_photons() {
        let p = derive_params(2, &SystemParams::for_photons(2), DEFAULT_TAU1, DEFAULT_T_FINAL).unwrap();
        assert_abs_diff_eq!(units::to_mhz(p.delta0), 141.42f64.powi(2) / 5000.0, epsilon = 1e-9);
        assert_abs_diff_eq!(units::to_mhz(p.delta0), 4.000, epsilon = 1e-3);
        assert_abs_diff_eq!(units::to_mhz(p.omega_s2), 3.330, epsilon = 1e-3);
        assert_abs_diff_eq!(p.step2_duration(), 0.3003, epsilon = 1e-4);
        let drive = p.system.lambda * p.omega_s2_amp / p.system.detuning;
        assert_abs_diff_eq!(drive, p.alpha0 / p.step2_duration(), epsilon = 1e-12);
        assert_abs_diff_eq!(drive, 4.709, epsilon = 1e-3);
    }

    #[test]
    fn derived_values_for_four_photons() {
        let p = derive_params(4, &SystemParams::for_photons(4), DEFAULT_TAU1, DEFAULT_T_FINAL).unwrap();
        assert_abs_diff_eq!(units::to_mhz(p.delta0), 2.8356, epsilon = 1e-4);
        assert_abs_diff_eq!(units::to_mhz(p.omega_s2), 2.1656, epsilon = 1e-4);
        assert_abs_diff_eq!(p.step2_duration(), 0.4618, epsilon = 1e-4);
        assert_abs_diff_eq!(p.epsilon_n0, 0.4420, epsilon = 1e-4);
    }

    #[test]
    fn coherent_overlap_matches_displacement() {
        for n in 1..=8u32 {
            let d = HilbertSpec::default_for_photons(n).cavity_dim();
            let disp = hilbert::displacement((n as f64).sqrt(), d).unwrap();
            assert_abs_diff_eq!(coherent_overlap(n), disp.coefficient(n as usize, 0).re, epsilon = 1e-10);
        }
    }

    #[test]
    fn parameter_errors() {
        let mut s = SystemParams::for_photons(2);
        assert!(matches!(derive_params(2, &s, 0.01, 0.2), Err(Error::Scheduling(_))));
        s.delta_prime = units::mhz(-5.0);
        assert!(matches!(derive_params(2, &s, 0.01, 15.0), Err(Error::Parameter(_))));
        assert!(derive_params(0, &SystemParams::for_photons(2), 0.01, 15.0).is_err());
    }

    #[test]
    fn rwa_margins() {
        let p = derive_params(4, &SystemParams::for_photons(4), DEFAULT_TAU1, DEFAULT_T_FINAL).unwrap();
        let r = rwa_report(&p);
        assert_abs_diff_eq!(r.detuning_over_lambda, 5960.0 / 130.0, epsilon = 1e-9);
        assert!(r.detuning_over_step2 > 100.0);
        assert_abs_diff_eq!(r.step1_over_stark, 8.8, epsilon = 0.05);
        assert!(r.warnings.iter().any(|w| w.contains("Ω_s1")));
    }

    #[test]
    fn targets() {
        let p = derive_params(4, &SystemParams::for_photons(4), DEFAULT_TAU1, DEFAULT_T_FINAL).unwrap();
        let spec = HilbertSpec::default_for_photons(4);
        let t1 = target_state(1, &p, spec).unwrap();
        assert_abs_diff_eq!(t1.amplitudes()[spec.index(3, 0, 0)].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        let t2 = target_state(2, &p, spec).unwrap();
        assert_abs_diff_eq!(t2.norm(), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(t1.inner(&t2).norm(), (-2.0f64).exp(), epsilon = 1e-9);
        let t3 = target_state(3, &p, spec).unwrap();
        assert_abs_diff_eq!(t3.amplitudes()[spec.index(0, 4, 0)].norm(), FRAC_1_SQRT_2, epsilon = 1e-15);
        assert!(target_state(3, &p, HilbertSpec::new(5).unwrap()).is_err());
        assert!(target_state(4, &p, spec).is_err());
    }

    #[test]
    fn sample_grid_merges_boundaries() {
        let (times, grid_of, at) = sample_times(&[0.0, 0.5, 1.0], &[0.25, 1.0]);
        assert_eq!(times, vec![0.0, 0.25, 0.5, 1.0]);
        assert_eq!(grid_of, vec![Some(0), None, Some(1), Some(2)]);
        assert_eq!(at, vec![1, 3]);
    }

    #[test]
    fn model_names_round_trip() {
        for m in [ModelKind::Original, ModelKind::Effective, ModelKind::Hybrid, ModelKind::Dispersive] {
            assert_eq!(m.to_string().parse::<ModelKind>().unwrap(), m);
        }
        assert!("exact".parse::<ModelKind>().is_err());
    }
}
