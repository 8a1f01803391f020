//! Direct density-matrix integration of
//! `ρ̇ = −i[H, ρ] + Σ γ (LρL† − ½{L†L, ρ})`.
//!
//! Written as `ρ̇ = A + A† + Σ γ LρL†` with `A = −i H_eff ρ` and
//! `H_eff = H − (i/2) Σ γ L†L`, so only one sparse-dense product per term is needed.

use num_complex::Complex64 as C64;

use super::collapse::CollapseSet;
use super::ode::{Dopri5, IntegratorConfig, IntegratorStats};
use super::{Probe, SampleTable, Segment};
use crate::error::{Error, Result};
use crate::hilbert::DensityMatrix;
use crate::linalg::{dense, CsrMatrix, I, ZERO};

/// Largest total dimension for which the direct backend is the default.
pub const DIRECT_DIM_LIMIT: usize = 1500;

/// Trace drift beyond which a run is rejected.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct DensityRun {
    pub samples: SampleTable,
    pub final_state: DensityMatrix,
    pub stats: IntegratorStats,
    /// Largest `|tr ρ − 1|` seen at a sample.
    pub trace_drift: f64,
    /// Largest `‖ρ − ρ†‖_max` seen at a sample before symmetrization.
    pub hermiticity_drift: f64,
}

pub fn evolve_density_schedule(
    schedule: &[Segment],
    rho0: &DensityMatrix,
    times: &[f64],
    collapse: &CollapseSet,
    cfg: &IntegratorConfig,
    probe: &dyn Probe,
) -> Result<DensityRun> {
    super::check_schedule(schedule, times)?;
    let n = rho0.dims().dim();
    let mut y = rho0.data().to_vec();
    let decay = collapse.decay_sum(n).scale(C64::new(0.0, -0.5));
    let jumps: Vec<(CsrMatrix, f64)> = collapse.ops.iter().map(|c| (c.op.clone(), c.rate)).collect();
    let mut table = SampleTable::new(probe.width());
    let mut stats = IntegratorStats::default();
    let mut trace_drift = 0.0f64;
    let mut herm_drift = 0.0f64;
    let mut next_sample = 0;
    let mut row = vec![0.0; probe.width()];
    let mut scratch_a = vec![ZERO; n * n];
    let mut scratch_b = vec![ZERO; n * n];
    for seg in schedule {
        let mut heff = seg.hamiltonian.compile().add_constant(&decay);
        let mut ode = Dopri5::new(cfg, n * n, cfg.step_bound(seg.hamiltonian.omega_max()));
        let mut rhs = |t: f64, rho: &[C64], drho: &mut [C64]| {
            heff.assemble(t);
            drho.fill(ZERO);
            heff.mul_dense_acc(-I, rho, n, drho);
            // drho ← A + A†
            for i in 0..n {
                drho[i * n + i] = C64::new(2.0 * drho[i * n + i].re, 0.0);
                for j in (i + 1)..n {
                    let a = drho[i * n + j];
                    let b = drho[j * n + i];
                    drho[i * n + j] = a + b.conj();
                    drho[j * n + i] = b + a.conj();
                }
            }
            for (l, rate) in &jumps {
                // X = Lρ, then LρL† = (L X†)†.
                scratch_a.fill(ZERO);
                l.mul_dense_acc(C64::new(1.0, 0.0), rho, n, &mut scratch_a);
                dense::adjoint_in_place(&mut scratch_a, n);
                scratch_b.fill(ZERO);
                l.mul_dense_acc(C64::new(*rate, 0.0), &scratch_a, n, &mut scratch_b);
                for i in 0..n {
                    for j in 0..n {
                        drho[i * n + j] += scratch_b[j * n + i].conj();
                    }
                }
            }
        };
        let mut t = seg.t_start;
        loop {
            while next_sample < times.len() && times[next_sample] <= t + 1e-12 {
                let tr = dense::trace(&y, n);
                trace_drift = trace_drift.max((tr.re - 1.0).abs());
                if trace_drift > TRACE_DRIFT_LIMIT {
                    return Err(Error::Integrity(format!("trace drift {trace_drift:.3e} at t = {t:.6} µs")));
                }
                herm_drift = herm_drift.max(dense::hermiticity_error(&y, n));
                dense::symmetrize(&mut y, n);
                ode.invalidate();
                probe.density(&y, &mut row);
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
            ode.advance(&mut rhs, t, &mut y, target)?;
            t = target;
        }
        stats.merge(&ode.stats);
    }
    let tr = dense::trace(&y, n);
    trace_drift = trace_drift.max((tr.re - 1.0).abs());
    if trace_drift > TRACE_DRIFT_LIMIT {
        return Err(Error::Integrity(format!("trace drift {trace_drift:.3e} at the final time")));
    }
    dense::symmetrize(&mut y, n);
    Ok(DensityRun {
        samples: table,
        final_state: DensityMatrix::new(rho0.dims(), y)?,
        stats,
        trace_drift,
        hermiticity_drift: herm_drift,
    })
}

/// Single-Hamiltonian convenience wrapper returning `ρ` at each of `times`.
pub fn evolve_density(
    h: &crate::hamiltonians::TimeDependentOperator,
    rho0: &DensityMatrix,
    times: &[f64],
    collapse: &CollapseSet,
    cfg: &IntegratorConfig,
) -> Result<(Vec<DensityMatrix>, DensityRun)> {
    let (t0, t1) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Parameter("no sample times".into())),
    };
    let probe = RawDensityProbe { dim: rho0.dims().dim() };
    let seg = Segment { label: "single".into(), hamiltonian: h.clone(), t_start: t0, t_end: t1 };
    let run = evolve_density_schedule(std::slice::from_ref(&seg), rho0, times, collapse, cfg, &probe)?;
    let states = run
        .samples
        .rows()
        .map(|r| DensityMatrix::new(rho0.dims(), r.chunks(2).map(|c| C64::new(c[0], c[1])).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok((states, run))
}

struct RawDensityProbe {
    dim: usize,
}

impl Probe for RawDensityProbe {
    fn width(&self) -> usize {
        2 * self.dim * self.dim
    }

    fn state(&self, _psi: &[C64], out: &mut [f64]) {
        out.fill(f64::NAN);
    }

    fn density(&self, rho: &[C64], out: &mut [f64]) {
        for (k, v) in rho.iter().enumerate() {
            out[2 * k] = v.re;
            out[2 * k + 1] = v.im;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_collapse_set;
    use crate::dynamics::testing::*;
    use crate::hamiltonians::TimeDependentOperator;
    use crate::hilbert::{HilbertSpec, StateVector};

    #[test]
    fn single_photon_decays_exponentially() {
        let spec = HilbertSpec::new(3).unwrap();
        let rho0 = StateVector::basis(spec, 0, 1, 0).to_density();
        // 100 kHz → 0.1 µs⁻¹
        let collapse = build_collapse_set(spec, 0.0, 0.0, 100.0).unwrap();
        let times = grid(10.0, 11);
        let (states, run) =
            evolve_density(&TimeDependentOperator::new(spec), &rho0, &times, &collapse, &Default::default()).unwrap();
        let one = spec.index(0, 1, 0);
        for (rho, t) in states.iter().zip(&times) {
            let exact = (-0.1 * t).exp();
            assert!((rho.population(one) - exact).abs() / exact < 1e-6);
        }
        assert!(run.trace_drift < 1e-6);
    }

    #[test]
    fn trace_is_preserved_with_all_channels() {
        let spec = HilbertSpec::new(3).unwrap();
        let rho0 = StateVector::basis(spec, 0, 1, 0).to_density();
        let collapse = build_collapse_set(spec, 50.0, 80.0, 30.0).unwrap();
        let times = grid(8.0, 9);
        let (states, run) =
            evolve_density(&toy_hamiltonian(spec), &rho0, &times, &collapse, &Default::default()).unwrap();
        assert!(run.trace_drift < 1e-6, "drift {}", run.trace_drift);
        assert!(run.hermiticity_drift < 1e-8);
        let n = spec.dim();
        for rho in &states {
            for k in 0..n {
                assert!(rho.population(k) > -1e-9);
            }
        }
    }

    #[test]
    fn no_collapse_matches_pure_state() {
        let spec = HilbertSpec::new(3).unwrap();
        let psi0 = StateVector::basis(spec, 0, 1, 0);
        let h = toy_hamiltonian(spec);
        let times = grid(5.0, 6);
        let cfg = IntegratorConfig { rtol: 1e-11, atol: 1e-13, ..Default::default() };
        let (pure, _, _) = crate::dynamics::evolve_state(&h, &psi0, &times, &cfg).unwrap();
        let (mixed, _) = evolve_density(&h, &psi0.to_density(), &times, &CollapseSet::default(), &cfg).unwrap();
        for k in 0..spec.dim() {
            let (a, b) = (pure[5].amplitudes()[k].norm_sqr(), mixed[5].population(k));
            assert!((a - b).abs() < 1e-7, "{k}: {a} vs {b}");
        }
    }
}
