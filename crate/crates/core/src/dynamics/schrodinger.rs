//! Pure-state evolution `i ψ̇ = H(t) ψ` over a piecewise schedule.

use num_complex::Complex64 as C64;

use super::ode::{Dopri5, IntegratorConfig, IntegratorStats};
use super::{Probe, SampleTable, Segment};
use crate::error::{Error, Result};
use crate::hilbert::StateVector;
use crate::linalg::{self, I};

/// Result of a pure-state run.
#[derive(Clone, Debug)]
pub struct StateRun {
    pub samples: SampleTable,
    pub final_state: StateVector,
    pub stats: IntegratorStats,
    /// Largest `|‖ψ‖ − 1|` seen at a sample before renormalization.
    pub norm_drift: f64,
}

/// Integrates the schedule, evaluating `probe` on the normalized state at each sample time.
pub fn evolve_schedule(
    schedule: &[Segment],
    psi0: &StateVector,
    times: &[f64],
    cfg: &IntegratorConfig,
    probe: &dyn Probe,
) -> Result<StateRun> {
    super::check_schedule(schedule, times)?;
    let mut y = psi0.amplitudes().to_vec();
    let dim = y.len();
    let mut table = SampleTable::new(probe.width());
    let mut stats = IntegratorStats::default();
    let mut norm_drift = 0.0f64;
    let mut next_sample = 0;
    let mut row = vec![0.0; probe.width()];
    for seg in schedule {
        let mut h = seg.hamiltonian.compile();
        let mut ode = Dopri5::new(cfg, dim, cfg.step_bound(seg.hamiltonian.omega_max()));
        let mut rhs = |t: f64, x: &[C64], dx: &mut [C64]| {
            h.assemble(t);
            h.matvec_into(-I, x, dx);
        };
        let mut t = seg.t_start;
        loop {
            while next_sample < times.len() && times[next_sample] <= t + 1e-12 {
                // Boundary samples belong to the segment that ends there.
                let n = linalg::norm(&y);
                norm_drift = norm_drift.max((n - 1.0).abs());
                linalg::normalize(&mut y);
                ode.invalidate();
                probe.state(&y, &mut row);
                table.push(times[next_sample], &row);
                next_sample += 1;
            }
            if t >= seg.t_end {
                break;
            }
            let target = if next_sample < times.len() { times[next_sample].min(seg.t_end) } else { seg.t_end };
            if target <= t {
                break;
            }
            ode.advance(&mut rhs, t, &mut y, target).map_err(|e| match e {
                Error::StepUnderflow { t, h, context } => {
                    Error::StepUnderflow { t, h, context: format!("{context} in segment `{}`", seg.label) }
                }
                other => other,
            })?;
            t = target;
        }
        stats.merge(&ode.stats);
    }
    let n = linalg::norm(&y);
    norm_drift = norm_drift.max((n - 1.0).abs());
    linalg::normalize(&mut y);
    Ok(StateRun { samples: table, final_state: StateVector::new(psi0.dims(), y)?, stats, norm_drift })
}

/// Single-Hamiltonian convenience wrapper returning the states at `times`.
pub fn evolve_state(
    h: &crate::hamiltonians::TimeDependentOperator,
    psi0: &StateVector,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Vec<StateVector>, IntegratorStats, f64)> {
    let (t0, t1) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Parameter("no sample times".into())),
    };
    let probe = super::AmplitudeProbe { dim: psi0.dims().dim() };
    let seg = Segment { label: "single".into(), hamiltonian: h.clone(), t_start: t0, t_end: t1 };
    let run = evolve_schedule(std::slice::from_ref(&seg), psi0, times, cfg, &probe)?;
    let states = run
        .samples
        .rows()
        .map(|r| {
            let amps = r.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
            StateVector::new(psi0.dims(), amps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((states, run.stats, run.norm_drift))
}
