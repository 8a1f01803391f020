//! Time integration of the Schrödinger, von Neumann and Lindblad equations.

pub mod collapse;
pub mod lindblad;
pub mod ode;
pub mod schrodinger;
pub mod trajectories;

use num_complex::Complex64 as C64;

pub use collapse::{build_collapse_set, dressed_decoherence, CollapseOperator, CollapseSet, DecoherenceRates};
pub use lindblad::{evolve_density, evolve_density_schedule, DensityRun};
pub use ode::{Dopri5, IntegratorConfig, IntegratorStats};
pub use schrodinger::{evolve_schedule, evolve_state, StateRun};
pub use trajectories::{evolve_trajectories, TrajectoryConfig, TrajectoryRun};

use crate::error::{Error, Result};
use crate::hamiltonians::TimeDependentOperator;

/// One piece of a piecewise-defined Hamiltonian, active on `[t_start, t_end]`.
#[derive(Clone, Debug)]
pub struct Segment {
    pub label: String,
    pub hamiltonian: TimeDependentOperator,
    pub t_start: f64,
    pub t_end: f64,
}

/// Maps a normalized state or a density matrix to a row of real observables.
/// Rows must be linear in the density matrix so that trajectory averages are exact.
pub trait Probe: Sync {
    fn width(&self) -> usize;
    fn state(&self, psi: &[C64], out: &mut [f64]);
    fn density(&self, rho: &[C64], out: &mut [f64]);
}

/// Samples a state's raw amplitudes as (re, im) pairs.
pub struct AmplitudeProbe {
    pub dim: usize,
}

impl Probe for AmplitudeProbe {
    fn width(&self) -> usize {
        2 * self.dim
    }

    fn state(&self, psi: &[C64], out: &mut [f64]) {
        for (k, v) in psi.iter().enumerate() {
            out[2 * k] = v.re;
            out[2 * k + 1] = v.im;
        }
    }

    fn density(&self, _rho: &[C64], out: &mut [f64]) {
        out.fill(f64::NAN);
    }
}

/// Time-ordered table of probe rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleTable {
    pub width: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampleTable {
    pub fn new(width: usize) -> Self {
        Self { width, times: Vec::new(), values: Vec::new() }
    }

    pub fn push(&mut self, t: f64, row: &[f64]) {
        debug_assert_eq!(row.len(), self.width);
        self.times.push(t);
        self.values.extend_from_slice(row);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.width..(k + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.width.max(1))
    }

    /// Row at the sample closest to `t`.
    pub fn at(&self, t: f64) -> Option<&[f64]> {
        let k = self.times.iter().enumerate().min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?.0;
        Some(self.row(k))
    }
}

pub(crate) fn check_schedule(schedule: &[Segment], times: &[f64]) -> Result<()> {
    let first = schedule.first().ok_or_else(|| Error::Parameter("empty schedule".into()))?;
    for w in schedule.windows(2) {
        if (w[0].t_end - w[1].t_start).abs() > 1e-12 {
            return Err(Error::Scheduling(format!(
                "segments `{}` and `{}` are not contiguous",
                w[0].label, w[1].label
            )));
        }
    }
    for s in schedule {
        if !(s.t_end >= s.t_start) {
            return Err(Error::Scheduling(format!("segment `{}` ends before it starts", s.label)));
        }
        if s.hamiltonian.dims() != first.hamiltonian.dims() {
            return Err(Error::DimensionMismatch {
                context: "schedule",
                expected: first.hamiltonian.dims().dim(),
                found: s.hamiltonian.dims().dim(),
            });
        }
    }
    let t_end = schedule.last().expect("non-empty").t_end;
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Scheduling("sample times must be sorted".into()));
    }
    if times.iter().any(|&t| t < first.t_start - 1e-12 || t > t_end + 1e-12) {
        return Err(Error::Scheduling("sample time outside the schedule".into()));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::hamiltonians::Coefficient;
    use crate::hilbert::{annihilation, embed, number, qudit_transition, HilbertSpec, Slot};

    /// Driven qudit |0⟩↔|1⟩ plus a |1⟩↔|2⟩ transition exchanging a photon with cavity 1.
    pub fn toy_hamiltonian(spec: HilbertSpec) -> TimeDependentOperator {
        let q = |j, k| embed(&qudit_transition(j, k).unwrap(), Slot::Qudit, spec).unwrap().into_csr();
        let a1 = embed(&annihilation(spec.cavity_dim()).unwrap(), Slot::Cavity1, spec).unwrap().into_csr();
        let n1 = embed(&number(spec.cavity_dim()).unwrap(), Slot::Cavity1, spec).unwrap().into_csr();
        let mut h = TimeDependentOperator::new(spec);
        h.push_hermitian("drive", q(1, 0), Coefficient::function(|t| C64::new(2.0 * (0.7 * t).cos(), 0.0)));
        h.push_hermitian("exchange", q(2, 1).mul(&a1).unwrap(), Coefficient::Constant(C64::new(1.3, 0.0)));
        h.push("detuning", n1.scale(C64::new(0.4, 0.0)), Coefficient::Constant(C64::new(1.0, 0.0)));
        h.raise_frequency(0.7);
        h
    }

    /// Populations of the listed basis states.
    pub struct PopulationProbe {
        pub dim: usize,
        pub indices: Vec<usize>,
    }

    impl Probe for PopulationProbe {
        fn width(&self) -> usize {
            self.indices.len()
        }

        fn state(&self, psi: &[C64], out: &mut [f64]) {
            for (o, &k) in out.iter_mut().zip(&self.indices) {
                *o = psi[k].norm_sqr();
            }
        }

        fn density(&self, rho: &[C64], out: &mut [f64]) {
            for (o, &k) in out.iter_mut().zip(&self.indices) {
                *o = rho[k * self.dim + k].re;
            }
        }
    }

    pub fn segment(h: TimeDependentOperator, t_end: f64) -> Segment {
        Segment { label: "toy".into(), hamiltonian: h, t_start: 0.0, t_end }
    }

    pub fn grid(t_end: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect()
    }
}
