//! Quantum-jump unraveling of the master equation.
//!
//! The no-jump branch is integrated once and carries weight `P = ‖ψ̃(T)‖²`.
//! The remaining weight `1 − P` is sampled by trajectories whose first-jump
//! thresholds are stratified over `(P, 1)`; each restarts from the stored
//! no-jump checkpoint preceding its first jump. After the first jump the
//! trajectory is standard MCWF with fresh uniform thresholds.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::collapse::CollapseSet;
use super::ode::{Dopri5, IntegratorConfig, IntegratorStats};
use super::{Probe, SampleTable, Segment};
use crate::error::Result;
use crate::hamiltonians::CompiledOperator;
use crate::hilbert::StateVector;
use crate::linalg::{self, CsrMatrix, I};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    /// Number of jump trajectories.
    pub count: usize,
    pub seed: u64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self { count: 64, seed: 0x5eed }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryRun {
    pub samples: SampleTable,
    pub stats: IntegratorStats,
    /// Probability that no jump happens over the whole schedule.
    pub no_jump_probability: f64,
    pub trajectories: usize,
    pub jumps: u64,
}

/// Relative tolerance on the norm when locating a jump time.
const JUMP_TOL: f64 = 1e-9;
const JUMP_ITER: usize = 40;

struct Context<'a> {
    segments: &'a [Segment],
    heff: Vec<CompiledOperator>,
    bounds: Vec<f64>,
    jumps: Vec<(CsrMatrix, f64)>,
    times: &'a [f64],
    cfg: &'a IntegratorConfig,
    probe: &'a dyn Probe,
}

impl Context<'_> {
    fn segment_at(&self, t: f64) -> usize {
        self.segments.iter().position(|s| t < s.t_end - 1e-12).unwrap_or(self.segments.len() - 1)
    }

    fn integrator(&self, s: usize) -> Dopri5 {
        let n = self.heff[s].dim();
        Dopri5::new(self.cfg, n, self.bounds[s])
    }
}

fn rhs(h: &mut CompiledOperator) -> impl FnMut(f64, &[C64], &mut [C64]) + '_ {
    move |t, x, dx| {
        h.assemble(t);
        h.matvec_into(-I, x, dx);
    }
}

fn norm_sqr(y: &[C64]) -> f64 {
    y.iter().map(|v| v.norm_sqr()).sum()
}

struct NoJump {
    rows: Vec<f64>,
    norms: Vec<f64>,
    checkpoints: Vec<Vec<C64>>,
    final_norm: f64,
    stats: IntegratorStats,
}

fn no_jump_branch(ctx: &Context, psi0: &[C64]) -> Result<NoJump> {
    let width = ctx.probe.width();
    let mut y = psi0.to_vec();
    let mut out = NoJump {
        rows: Vec::with_capacity(width * ctx.times.len()),
        norms: Vec::with_capacity(ctx.times.len()),
        checkpoints: Vec::with_capacity(ctx.times.len()),
        final_norm: 1.0,
        stats: IntegratorStats::default(),
    };
    let mut row = vec![0.0; width];
    let mut next = 0;
    for (s, seg) in ctx.segments.iter().enumerate() {
        let mut h = ctx.heff[s].clone();
        let mut ode = ctx.integrator(s);
        let mut f = rhs(&mut h);
        let mut t = seg.t_start;
        loop {
            while next < ctx.times.len() && ctx.times[next] <= t + 1e-12 {
                let p = norm_sqr(&y);
                let mut z = y.clone();
                linalg::normalize(&mut z);
                ctx.probe.state(&z, &mut row);
                out.rows.extend_from_slice(&row);
                out.norms.push(p);
                out.checkpoints.push(y.clone());
                next += 1;
            }
            if t >= seg.t_end {
                break;
            }
            let target = if next < ctx.times.len() { ctx.times[next].min(seg.t_end) } else { seg.t_end };
            if target <= t {
                break;
            }
            ode.advance(&mut f, t, &mut y, target)?;
            t = target;
        }
        out.stats.merge(&ode.stats);
    }
    out.final_norm = norm_sqr(&y);
    Ok(out)
}

fn apply_jump(ctx: &Context, y: &mut Vec<C64>, rng: &mut ChaCha8Rng) {
    let candidates: Vec<Vec<C64>> = ctx.jumps.iter().map(|(l, _)| l.matvec(y)).collect();
    let weights: Vec<f64> = candidates.iter().zip(&ctx.jumps).map(|(v, (_, g))| g * norm_sqr(v)).collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        linalg::normalize(y);
        return;
    }
    let mut pick = rng.gen::<f64>() * total;
    let mut chosen = weights.len() - 1;
    for (k, w) in weights.iter().enumerate() {
        if pick < *w {
            chosen = k;
            break;
        }
        pick -= w;
    }
    *y = candidates.into_iter().nth(chosen).expect("index in range");
    linalg::normalize(y);
}

/// Integrates `y` from `t0` to the time where `‖y‖² = threshold`, which is
/// known to lie in `(t0, t1]`. `y` holds the state at `t1` on entry.
fn locate_jump(
    f: &mut impl FnMut(f64, &[C64], &mut [C64]),
    ode: &mut Dopri5,
    start: (f64, &[C64]),
    end: f64,
    y: &mut [C64],
    threshold: f64,
) -> Result<f64> {
    let (t0, y0) = start;
    let (mut ta, mut na) = (t0, norm_sqr(y0) - threshold);
    let (mut tb, mut nb) = (end, norm_sqr(y) - threshold);
    let mut side = 0i8;
    let mut tc = tb;
    for _ in 0..JUMP_ITER {
        if nb.abs() <= JUMP_TOL * threshold || tb - ta <= 1e-15 * tb.abs().max(1.0) {
            break;
        }
        // Illinois-modified regula falsi on the monotone norm.
        tc = (ta * nb - tb * na) / (nb - na);
        if !(tc > ta && tc < tb) {
            tc = 0.5 * (ta + tb);
        }
        y.copy_from_slice(y0);
        ode.invalidate();
        ode.advance(f, t0, y, tc)?;
        let nc = norm_sqr(y) - threshold;
        if nc > 0.0 {
            ta = tc;
            na = nc;
            if side == -1 {
                nb *= 0.5;
            }
            side = -1;
        } else {
            tb = tc;
            nb = nc;
            if side == 1 {
                na *= 0.5;
            }
            side = 1;
        }
    }
    if (tc - tb).abs() > 0.0 {
        y.copy_from_slice(y0);
        ode.invalidate();
        ode.advance(f, t0, y, tb)?;
    }
    Ok(tb)
}

fn jump_trajectory(
    ctx: &Context,
    nj: &NoJump,
    first_threshold: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, IntegratorStats, u64)> {
    let width = ctx.probe.width();
    // Last checkpoint still above the threshold.
    let k0 = nj.norms.iter().rposition(|&p| p >= first_threshold).unwrap_or(0);
    let mut rows = nj.rows[..(k0 + 1) * width].to_vec();
    let mut y = nj.checkpoints[k0].clone();
    let mut t = ctx.times[k0];
    let mut next = k0 + 1;
    let mut threshold = first_threshold;
    let mut stats = IntegratorStats::default();
    let mut jumps = 0u64;
    let mut row = vec![0.0; width];
    let mut y_prev = y.clone();
    for s in ctx.segment_at(t)..ctx.segments.len() {
        let seg_end = ctx.segments[s].t_end;
        let mut h = ctx.heff[s].clone();
        let mut ode = ctx.integrator(s);
        let mut f = rhs(&mut h);
        while t < seg_end {
            let target = if next < ctx.times.len() { ctx.times[next].min(seg_end) } else { seg_end };
            y_prev.copy_from_slice(&y);
            let dt = ode.step(&mut f, t, &mut y, target)?;
            let t_new = if t + dt >= target * (1.0 - 1e-15) { target } else { t + dt };
            if norm_sqr(&y) < threshold {
                let tj = locate_jump(&mut f, &mut ode, (t, &y_prev), t_new, &mut y, threshold)?;
                apply_jump(ctx, &mut y, rng);
                jumps += 1;
                threshold = rng.gen::<f64>();
                ode.invalidate();
                t = tj;
            } else {
                t = t_new;
            }
            while next < ctx.times.len() && ctx.times[next] <= t + 1e-12 {
                let mut z = y.clone();
                linalg::normalize(&mut z);
                ctx.probe.state(&z, &mut row);
                rows.extend_from_slice(&row);
                next += 1;
            }
        }
        stats.merge(&ode.stats);
    }
    Ok((rows, stats, jumps))
}

/// Averages `probe` over the jump unraveling of the master equation.
///
/// The result is deterministic given `traj.seed` and independent of the number of threads.
pub fn evolve_trajectories(
    schedule: &[Segment],
    psi0: &StateVector,
    times: &[f64],
    collapse: &CollapseSet,
    cfg: &IntegratorConfig,
    traj: &TrajectoryConfig,
    probe: &dyn Probe,
) -> Result<TrajectoryRun> {
    super::check_schedule(schedule, times)?;
    let n = psi0.dims().dim();
    let decay = collapse.decay_sum(n).scale(C64::new(0.0, -0.5));
    let ctx = Context {
        segments: schedule,
        heff: schedule.iter().map(|s| s.hamiltonian.compile().add_constant(&decay)).collect(),
        bounds: schedule.iter().map(|s| cfg.step_bound(s.hamiltonian.omega_max())).collect(),
        jumps: collapse.ops.iter().map(|c| (c.op.clone(), c.rate)).collect(),
        times,
        cfg,
        probe,
    };
    let mut psi = psi0.amplitudes().to_vec();
    linalg::normalize(&mut psi);
    let nj = no_jump_branch(&ctx, &psi)?;
    let width = probe.width();
    let p = nj.final_norm.min(1.0);
    let mut stats = nj.stats;
    let mut values = nj.rows.clone();
    let mut jumps = 0;
    let count = if 1.0 - p > 1e-14 && !collapse.is_empty() { traj.count } else { 0 };
    if count > 0 {
        let results: Vec<Result<(Vec<f64>, IntegratorStats, u64)>> = (0..count)
            .into_par_iter()
            .map(|m| {
                let mut rng = ChaCha8Rng::seed_from_u64(traj.seed);
                rng.set_stream(m as u64 + 1);
                let u = (m as f64 + rng.gen::<f64>()) / count as f64;
                let r = p + (1.0 - p) * u;
                jump_trajectory(&ctx, &nj, r, &mut rng)
            })
            .collect();
        let mut acc = vec![0.0; values.len()];
        for res in results {
            let (rows, s, j) = res?;
            for (a, v) in acc.iter_mut().zip(&rows) {
                *a += v;
            }
            stats.merge(&s);
            jumps += j;
        }
        let w = (1.0 - p) / count as f64;
        for (v, a) in values.iter_mut().zip(&acc) {
            *v = p * *v + w * a;
        }
    }
    let mut samples = SampleTable::new(width);
    for (k, &t) in times.iter().enumerate() {
        samples.push(t, &values[k * width..(k + 1) * width]);
    }
    Ok(TrajectoryRun { samples, stats, no_jump_probability: p, trajectories: count, jumps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::testing::*;
    use crate::dynamics::{build_collapse_set, evolve_density_schedule, evolve_schedule};
    use crate::hilbert::HilbertSpec;

    fn setup() -> (HilbertSpec, Vec<Segment>, StateVector, Vec<f64>, PopulationProbe) {
        let spec = HilbertSpec::new(3).unwrap();
        let schedule = vec![segment(toy_hamiltonian(spec), 6.0)];
        let psi0 = StateVector::basis(spec, 0, 1, 0);
        let probe = PopulationProbe {
            dim: spec.dim(),
            indices: vec![spec.index(0, 1, 0), spec.index(1, 1, 0), spec.index(2, 0, 0), spec.index(0, 0, 0)],
        };
        (spec, schedule, psi0, grid(6.0, 7), probe)
    }

    #[test]
    fn agrees_with_master_equation() {
        let (spec, schedule, psi0, times, probe) = setup();
        let collapse = build_collapse_set(spec, 40.0, 60.0, 40.0).unwrap();
        let cfg = IntegratorConfig::default();
        let direct = evolve_density_schedule(&schedule, &psi0.to_density(), &times, &collapse, &cfg, &probe).unwrap();
        let traj = TrajectoryConfig { count: 1024, seed: 7 };
        let run = evolve_trajectories(&schedule, &psi0, &times, &collapse, &cfg, &traj, &probe).unwrap();
        assert!(run.no_jump_probability < 1.0);
        for k in 0..times.len() {
            for (a, b) in direct.samples.row(k).iter().zip(run.samples.row(k)) {
                assert!((a - b).abs() < 0.01, "t = {}: {a} vs {b}", times[k]);
            }
        }
    }

    #[test]
    fn without_collapse_reduces_to_schrodinger() {
        let (_, schedule, psi0, times, probe) = setup();
        let cfg = IntegratorConfig::default();
        let pure = evolve_schedule(&schedule, &psi0, &times, &cfg, &probe).unwrap();
        let run =
            evolve_trajectories(&schedule, &psi0, &times, &CollapseSet::default(), &cfg, &Default::default(), &probe)
                .unwrap();
        assert_eq!(run.trajectories, 0);
        for k in 0..times.len() {
            for (a, b) in pure.samples.row(k).iter().zip(run.samples.row(k)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn independent_of_thread_count() {
        let (spec, schedule, psi0, times, probe) = setup();
        let collapse = build_collapse_set(spec, 0.0, 60.0, 40.0).unwrap();
        let cfg = IntegratorConfig::default();
        let traj = TrajectoryConfig { count: 24, seed: 11 };
        let run_on = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| evolve_trajectories(&schedule, &psi0, &times, &collapse, &cfg, &traj, &probe).unwrap())
        };
        let (a, b) = (run_on(1), run_on(3));
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.jumps, b.jumps);
    }
}
