//! Command-line front end: `params`, `run`, `sweep`, `validate`.
//!
//! Exit codes: 0 success, 1 validation failure, 2 configuration error,
//! 3 runtime or integrator error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;
use serde::Serialize;
use serde_json::json;

use crate::config::Config;
use crate::dynamics::IntegratorStats;
use crate::error::{Error, Result};
use crate::hilbert::{self, HilbertSpec};
use crate::protocol::{run_protocol, rwa_report, ModelKind, ProtocolParams, RunSettings, SimResult};
use crate::pulses::{self, Envelope, InvariantParams, PulseShape};
use crate::sweeps::{self, ScenarioRow, SweepParam, SweepRange, SweepSpec};
use crate::units;

macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "noonsim", version, about = "Three-step NOON-state preparation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the derived protocol parameters and approximation margins.
    Params(Common),
    /// Integrate the protocol and write the time series, summary and manifest.
    Run(RunArgs),
    /// Sweep one disturbance, or run a table of combined scenarios.
    Sweep(SweepArgs),
    /// Run the fast self-checks against the configuration.
    Validate(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override protocol.model (original|effective|hybrid|dispersive).
    #[arg(long)]
    model: Option<ModelKind>,
    /// Override protocol.pulse (pi|optimized).
    #[arg(long)]
    pulse: Option<PulseShape>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameter to sweep.
    #[arg(long, conflicts_with = "scenarios")]
    param: Option<String>,
    /// Grid as LO:HI:POINTS.
    #[arg(long, allow_hyphen_values = true, requires = "param")]
    range: Option<String>,
    /// JSON array of scenario rows.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Maximum concurrent runs.
    #[arg(long)]
    jobs: Option<usize>,
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Params(c) => cmd_params(&c),
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Validate(c) => cmd_validate(&c),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_runtime() || matches!(e, Error::Io(_) | Error::Csv(_)) {
        EXIT_RUNTIME
    } else {
        EXIT_CONFIG
    }
}

fn load(c: &Common) -> Result<Config> {
    let mut cfg = Config::from_path(&c.config)?;
    if let Some(m) = c.model {
        cfg.protocol.model = m;
    }
    if let Some(p) = c.pulse {
        cfg.protocol.pulse = p;
    }
    Ok(cfg)
}

fn out_dir(cfg: &Config, flag: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
    Ok(path)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    software: &'static str,
    version: &'static str,
    command: &'static str,
    config_hash: String,
    config: &'a Config,
    wall_time_s: f64,
    complete: bool,
    error: Option<String>,
    backend: Option<&'static str>,
    integrator_stats: IntegratorStats,
    warnings: Vec<String>,
}

impl<'a> Manifest<'a> {
    fn new(command: &'static str, config: &'a Config, started: Instant) -> Self {
        Self {
            software: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: config.hash(),
            config,
            wall_time_s: started.elapsed().as_secs_f64(),
            complete: true,
            error: None,
            backend: None,
            integrator_stats: IntegratorStats::default(),
            warnings: Vec::new(),
        }
    }

    fn write(&self, dir: &Path) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(dir, "manifest.json", text.as_bytes())
    }
}

fn param_rows(p: &ProtocolParams, spec: HilbertSpec) -> Vec<(&'static str, String)> {
    let mhz = |v: f64| format!("{:.3} MHz", units::to_mhz(v));
    vec![
        ("N", p.n.to_string()),
        ("alpha0", format!("{:.6}", p.alpha0)),
        ("delta0/2pi", mhz(p.delta0)),
        ("omega_s2/2pi", mhz(p.omega_s2)),
        ("tau1", format!("{:.6} us", p.tau1)),
        ("tau2", format!("{:.6} us", p.tau2)),
        ("tau3", format!("{:.6} us", p.tau3)),
        ("Omega_s2/2pi", mhz(p.omega_s2_amp)),
        ("Omega'_s3/2pi", mhz(p.omega_s3_off)),
        ("delta_tilde/2pi", mhz(p.delta_tilde)),
        ("epsilon_N0", format!("{:.6}", p.epsilon_n0)),
        ("Theta_s2", format!("{:.6} rad", p.theta_s2)),
        ("cavity_dim", spec.cavity_dim().to_string()),
    ]
}

fn cmd_params(c: &Common) -> Result<i32> {
    let cfg = load(c)?;
    let p = cfg.protocol_params()?;
    let spec = match cfg.protocol.cavity_dim {
        Some(d) => HilbertSpec::new(d)?,
        None => HilbertSpec::default_for_photons(p.n),
    };
    for (k, v) in param_rows(&p, spec) {
        out!("{k:<18} {v}");
    }
    let r = rwa_report(&p);
    out!("{:<18} {:.3}", "Omega_s1/stark", r.step1_over_stark);
    out!("{:<18} {:.3}", "omega_s2/Omega_s3", r.omega_s2_over_step3);
    out!("{:<18} {:.3}", "|delta'|/Omega_s3", r.delta_prime_over_step3);
    out!("{:<18} {:.3}", "Delta/lambda", r.detuning_over_lambda);
    out!("{:<18} {:.3}", "Delta/Omega_s2", r.detuning_over_step2);
    for w in p.system.validate()?.iter().chain(&r.warnings) {
        out!("warning: {w}");
    }
    Ok(EXIT_OK)
}

const SERIES_HEADER: [&str; 12] =
    ["t_us", "F1", "F2", "F3", "pop_q0", "pop_q1", "pop_q2", "pop_q3", "pop_q4", "nbar_c1", "nbar_c2", "leakage"];

fn series_csv(r: Option<&SimResult>) -> Result<Vec<u8>> {
    let rows = r.into_iter().flat_map(|r| {
        r.times.iter().zip(&r.series).map(|(t, o)| {
            let mut row = vec![t.to_string()];
            row.extend(o.fidelity.iter().map(f64::to_string));
            row.extend(o.populations.iter().map(f64::to_string));
            row.extend(o.nbar.iter().map(f64::to_string));
            row.push(o.leakage.to_string());
            row
        })
    });
    csv_bytes(&SERIES_HEADER, rows)
}

fn summary_json(r: &SimResult) -> serde_json::Value {
    let f = r.step_fidelities();
    let bounds = r.params.step_bounds();
    json!({
        "n": r.params.n,
        "model": r.settings.model,
        "pulse": r.settings.pulse,
        "cavity_dim": r.cavity_dim,
        "backend": r.backend,
        "step_boundaries_us": { "tau1": bounds[0], "tau2": bounds[1], "tau3": bounds[2] },
        "F1_tau1": f.first(),
        "F2_tau2": f.get(1),
        "F3_tau3": f.get(2),
        "F3_final": r.series.last().map(|o| o.fidelity[2]),
        "at_boundaries": r.at_boundaries,
        "leakage_flagged": r.leakage_flagged,
        "drift": r.drift,
        "params_hash": r.params_hash,
    })
}

fn cmd_run(a: &RunArgs) -> Result<i32> {
    let started = Instant::now();
    let cfg = load(&a.common)?;
    let params = cfg.protocol_params()?;
    let settings = cfg.run_settings()?;
    let dir = out_dir(&cfg, &a.out)?;
    match run_protocol(&params, &settings) {
        Ok(r) => {
            write_atomic(&dir, "timeseries.csv", &series_csv(Some(&r))?)?;
            let mut summary = serde_json::to_string_pretty(&summary_json(&r))?;
            summary.push('\n');
            write_atomic(&dir, "summary.json", summary.as_bytes())?;
            let mut m = Manifest::new("run", &cfg, started);
            m.backend = Some(r.backend);
            m.integrator_stats = r.stats;
            m.warnings = r.warnings.clone();
            m.write(&dir)?;
            for (k, f) in r.step_fidelities().iter().enumerate() {
                out!("F{}(tau{}) = {f:.8}", k + 1, k + 1);
            }
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            Ok(EXIT_OK)
        }
        Err(e) => {
            // Keep a header-only series and flag the manifest.
            write_atomic(&dir, "timeseries.csv", &series_csv(None)?)?;
            let mut m = Manifest::new("run", &cfg, started);
            m.complete = false;
            m.error = Some(e.to_string());
            m.write(&dir)?;
            Err(e)
        }
    }
}

fn row_notes(warnings: &[String], error: &Option<String>) -> String {
    let mut notes: Vec<String> = warnings.to_vec();
    if let Some(e) = error {
        notes.push(format!("error: {e}"));
    }
    notes.join("; ")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_sweep(a: &SweepArgs) -> Result<i32> {
    let started = Instant::now();
    let cfg = load(&a.common)?;
    let mut baseline = cfg.baseline()?;
    let dir = out_dir(&cfg, &a.out)?;
    let mut manifest = Manifest::new("sweep", &cfg, started);
    let model_flag = a.common.model;
    let (name, bytes, failed) = if let Some(path) = &a.scenarios {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let rows: Vec<ScenarioRow> =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let results = sweeps::run_scenarios(&rows, &baseline, model_flag, a.jobs)?;
        let header = [
            "delta",
            "delta_omega_mhz",
            "delta_lambda_khz",
            "crosstalk_ratio",
            "gamma_d_khz",
            "gamma_r_khz",
            "gamma_kappa_khz",
            "F3",
            "warnings",
        ];
        let failed = results.iter().filter(|r| r.error.is_some()).count();
        let body = results.iter().map(|r| {
            let w = &r.row;
            vec![
                w.delta.to_string(),
                w.delta_omega_mhz.to_string(),
                w.delta_lambda_khz.to_string(),
                w.crosstalk_ratio.to_string(),
                w.gamma_d_khz.to_string(),
                w.gamma_r_khz.to_string(),
                w.gamma_kappa_khz.to_string(),
                fmt_opt(r.f3),
                row_notes(&r.warnings, &r.error),
            ]
        });
        for r in &results {
            out!("{:?} F3 = {}", r.row, fmt_opt(r.f3));
        }
        ("scenarios.csv", csv_bytes(&header, body)?, failed)
    } else {
        let param: SweepParam = a
            .param
            .as_deref()
            .ok_or_else(|| Error::Config("sweep needs --param and --range, or --scenarios".into()))?
            .parse()?;
        let range: SweepRange =
            a.range.as_deref().ok_or_else(|| Error::Config("sweep needs --range LO:HI:POINTS".into()))?.parse()?;
        let rows = if param.is_rate() {
            sweeps::decoherence_sweep(param, range, &baseline, model_flag, a.jobs)?
        } else {
            if let Some(m) = model_flag {
                baseline.settings.model = m;
            }
            sweeps::run_sweep(&SweepSpec { param, range, baseline, jobs: a.jobs })?
        };
        let failed = rows.iter().filter(|r| r.error.is_some()).count();
        for r in &rows {
            manifest.integrator_stats.merge(&r.stats);
            out!("{param} = {} F3 = {}", r.value, fmt_opt(r.f3));
        }
        let body = rows.iter().map(|r| vec![r.value.to_string(), fmt_opt(r.f3), row_notes(&r.warnings, &r.error)]);
        ("sweep.csv", csv_bytes(&["param_value", "F3_final", "warnings"], body)?, failed)
    };
    write_atomic(&dir, name, &bytes)?;
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    if failed > 0 {
        manifest.warnings.push(format!("{failed} point(s) failed; see the warnings column"));
    }
    manifest.write(&dir)?;
    Ok(EXIT_OK)
}

/// Outcome of one named self-check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: e.to_string() },
    }
}

/// The fast self-check suite behind `validate`.
pub fn validation_checks(cfg: &Config) -> Vec<Check> {
    let params = cfg.protocol_params();
    let d = cfg.protocol.cavity_dim.unwrap_or_else(|| HilbertSpec::default_for_photons(cfg.protocol.n).cavity_dim());
    let mut out = Vec::new();
    out.push(check("truncation", || {
        let p = params.as_ref().map_err(|e| Error::Config(e.to_string()))?;
        let disp = hilbert::displacement(p.alpha0, d)?;
        Ok((true, format!("top Fock level holds {:.2e} of D(α₀)|0⟩ at d = {d}", disp.top_level_population)))
    }));
    out.push(check("operator-algebra", || {
        let a = hilbert::annihilation(d)?;
        let comm = a.mul(&a.adjoint())?.add(&a.adjoint().mul(&a)?.scale(C64::new(-1.0, 0.0)))?.to_dense();
        let mut worst = 0.0f64;
        for i in 0..d - 1 {
            for j in 0..d - 1 {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((comm[(i, j)] - want).norm());
            }
        }
        let big = hilbert::displacement((cfg.protocol.n as f64).sqrt(), 60)?;
        let gram = big.matrix.adjoint() * &big.matrix - nalgebra::DMatrix::<C64>::identity(60, 60);
        let unitarity = gram.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let v = big.displaced_vacuum();
        let nbar: f64 = v.iter().enumerate().map(|(k, c)| k as f64 * c.norm_sqr()).sum();
        let nerr = (nbar - cfg.protocol.n as f64).abs();
        let ok = worst < 1e-12 && unitarity < 1e-8 && nerr < 1e-6;
        Ok((ok, format!("[a,a†] error {worst:.1e}, D†D − 1 {unitarity:.1e}, |⟨n⟩ − N| {nerr:.1e}")))
    }));
    out.push(check("pulse-invariant", || {
        let ip = InvariantParams::new(1.0, 1.0)?;
        let grid: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
        let r = pulses::invariant_residual(&grid, ip, 1.0)?;
        Ok((r < 1e-8, format!("residual {r:.2e}")))
    }));
    out.push(check("pulse-sensitivity", || {
        let (q1, q2) = (pulses::sensitivity_q(1.0)?, pulses::sensitivity_q(2.0)?);
        let pi = Envelope::pi(0.0, 1.0)?;
        let f = pulses::two_level_transfer(&pi, 0.2)?;
        let want = (0.1 * std::f64::consts::PI).cos();
        let opt = Envelope::optimized(0.0, 1.0, 1.0)?;
        let f1 = pulses::two_level_transfer(&opt, 0.1)?;
        let f2 = pulses::two_level_transfer(&opt, 0.2)?;
        let ratio = (1.0 - f2) / (1.0 - f1);
        let ok = q1 < 1e-30 && q2 < 1e-30 && (f - want).abs() < 1e-4 && f1 >= 0.999 && (8.0..=32.0).contains(&ratio);
        Ok((
            ok,
            format!(
                "Q(1) {q1:.1e}, Q(2) {q2:.1e}, π at δ=0.2 {f:.6}, optimized at δ=0.1 {f1:.6}, quartic ratio {ratio:.2}"
            ),
        ))
    }));
    let run = |model: ModelKind| -> Result<SimResult> {
        let p = params.as_ref().map_err(|e| Error::Config(e.to_string()))?;
        let base = cfg.run_settings()?;
        let settings = RunSettings {
            model,
            pulse: base.pulse,
            cavity_dim: base.cavity_dim,
            integrator: base.integrator,
            samples: 11,
            ..Default::default()
        };
        run_protocol(p, &settings)
    };
    out.push(check("effective-exactness", || {
        let f = run(ModelKind::Effective)?.step_fidelities();
        let ok = f.iter().all(|&x| x >= 1.0 - 1e-6);
        Ok((ok, format!("F = {f:?}")))
    }));
    out.push(check("step3-resonance", || {
        let r = run(ModelKind::Dispersive)?;
        let f3 = r.final_fidelity();
        Ok((f3 >= 0.98, format!("dispersive-model F3 = {f3:.6}")))
    }));
    out
}

fn cmd_validate(c: &Common) -> Result<i32> {
    let cfg = load(c)?;
    let checks = validation_checks(&cfg);
    for k in &checks {
        out!("{} {}: {}", if k.passed { "PASS" } else { "FAIL" }, k.name, k.detail);
    }
    Ok(if checks.iter().all(|k| k.passed) { EXIT_OK } else { EXIT_VALIDATION })
}
