//! Dormand-Prince 5(4) integrator for complex-valued ODE systems `y' = f(t, y)`.
//!
//! Adaptive steps with an embedded 4th-order error estimate, FSAL reuse of the
//! last stage, and optional fixed-step mode (used for order checks).

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ZERO;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step (µs). `None` lets the caller's frequency bound decide.
    pub max_step: Option<f64>,
    /// Take steps of exactly this size without error control.
    pub fixed_step: Option<f64>,
    pub max_steps: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_step: None, fixed_step: None, max_steps: 200_000_000 }
    }
}

impl IntegratorConfig {
    /// Step bound `2π/(20 ω_max)` combined with any explicit `max_step`.
    pub fn step_bound(&self, omega_max: f64) -> f64 {
        let freq_bound = if omega_max > 0.0 { 2.0 * std::f64::consts::PI / (20.0 * omega_max) } else { f64::INFINITY };
        self.max_step.map_or(freq_bound, |m| m.min(freq_bound))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
}

impl IntegratorStats {
    pub fn merge(&mut self, other: &IntegratorStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.rhs_evals += other.rhs_evals;
    }
}

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// Integrator state. Keeps the current step size and FSAL stage between calls.
pub struct Dopri5 {
    cfg: IntegratorConfig,
    h_max: f64,
    h: Option<f64>,
    k: [Vec<C64>; 7],
    y_stage: Vec<C64>,
    y_new: Vec<C64>,
    fsal_valid: bool,
    pub stats: IntegratorStats,
}

impl Dopri5 {
    pub fn new(cfg: &IntegratorConfig, dim: usize, h_max: f64) -> Self {
        Self {
            cfg: cfg.clone(),
            h_max,
            h: None,
            k: std::array::from_fn(|_| vec![ZERO; dim]),
            y_stage: vec![ZERO; dim],
            y_new: vec![ZERO; dim],
            fsal_valid: false,
            stats: IntegratorStats::default(),
        }
    }

    /// Must be called whenever the state is modified outside the integrator.
    pub fn invalidate(&mut self) {
        self.fsal_valid = false;
    }

    /// Advances `y` from `t` to exactly `t_end`.
    pub fn advance<F>(&mut self, f: &mut F, t: f64, y: &mut [C64], t_end: f64) -> Result<()>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let mut t = t;
        while t < t_end {
            t += self.step(f, t, y, t_end)?;
        }
        Ok(())
    }

    /// One accepted step from `t`, never passing `t_limit`. Returns the step taken.
    pub fn step<F>(&mut self, f: &mut F, t: f64, y: &mut [C64], t_limit: f64) -> Result<f64>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let remaining = t_limit - t;
        if remaining <= 0.0 {
            return Ok(0.0);
        }
        if !self.fsal_valid {
            f(t, y, &mut self.k[0]);
            self.stats.rhs_evals += 1;
            self.fsal_valid = true;
        }
        if let Some(h_fixed) = self.cfg.fixed_step {
            let h = h_fixed.min(remaining);
            self.stages(f, t, y, h);
            y.copy_from_slice(&self.y_new);
            self.k.swap(0, 6);
            self.stats.accepted += 1;
            return Ok(h);
        }
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(f, t, y),
        }
        .min(self.h_max);
        loop {
            // Avoid leaving a sliver shorter than a tenth of a step before t_limit.
            let clipped = if h >= remaining * 0.999_999 || remaining - h < 1e-3 * h { remaining } else { h };
            let min_h = 1e-14 * t.abs().max(1.0);
            if clipped < min_h {
                return Err(Error::StepUnderflow { t, h: clipped, context: "adaptive step collapsed".into() });
            }
            if self.stats.accepted + self.stats.rejected >= self.cfg.max_steps {
                return Err(Error::StepUnderflow { t, h: clipped, context: "maximum step count exceeded".into() });
            }
            self.stages(f, t, y, clipped);
            let err = self.error_norm(y, clipped);
            if err <= 1.0 {
                let fac = if err == 0.0 { FAC_MAX } else { (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX) };
                // Keep the natural step size when the last step was only clipped by t_limit.
                let next = if clipped < h { h } else { clipped * fac };
                self.h = Some(next.min(self.h_max));
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6);
                self.stats.accepted += 1;
                return Ok(clipped);
            }
            self.stats.rejected += 1;
            h = clipped * (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
        }
    }

    fn stages<F>(&mut self, f: &mut F, t: f64, y: &[C64], h: f64)
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let n = y.len();
        let combos: [(f64, &[f64]); 5] = [
            (C2, &[A21]),
            (C3, &[A31, A32]),
            (C4, &[A41, A42, A43]),
            (C5, &[A51, A52, A53, A54]),
            (1.0, &[A61, A62, A63, A64, A65]),
        ];
        for (s, (c, a)) in combos.iter().enumerate() {
            for i in 0..n {
                let mut acc = ZERO;
                for (j, &aj) in a.iter().enumerate() {
                    acc += self.k[j][i] * aj;
                }
                self.y_stage[i] = y[i] + acc * h;
            }
            f(t + c * h, &self.y_stage, &mut self.k[s + 1]);
        }
        for i in 0..n {
            let k = &self.k;
            self.y_new[i] = y[i] + (k[0][i] * B1 + k[2][i] * B3 + k[3][i] * B4 + k[4][i] * B5 + k[5][i] * B6) * h;
        }
        f(t + h, &self.y_new, &mut self.k[6]);
        self.stats.rhs_evals += 6;
    }

    fn error_norm(&self, y: &[C64], h: f64) -> f64 {
        let k = &self.k;
        let mut worst = 0.0f64;
        for i in 0..y.len() {
            let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * h;
            let scale = self.cfg.atol + self.cfg.rtol * y[i].norm().max(self.y_new[i].norm());
            worst = worst.max(e.norm() / scale);
        }
        worst
    }

    fn initial_step<F>(&mut self, f: &mut F, t: f64, y: &[C64]) -> f64
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let scale = |v: C64| self.cfg.atol + self.cfg.rtol * v.norm();
        let n = y.len().max(1) as f64;
        let d0 = (y.iter().map(|&v| (v.norm() / scale(v)).powi(2)).sum::<f64>() / n).sqrt();
        let d1 = (y.iter().zip(&self.k[0]).map(|(&v, d)| (d.norm() / scale(v)).powi(2)).sum::<f64>() / n).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(self.h_max);
        for i in 0..y.len() {
            self.y_stage[i] = y[i] + self.k[0][i] * h0;
        }
        f(t + h0, &self.y_stage, &mut self.k[1]);
        self.stats.rhs_evals += 1;
        let d2 = (y
            .iter()
            .zip(self.k[1].iter().zip(&self.k[0]))
            .map(|(&v, (a, b))| ((a - b).norm() / scale(v)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1).min(self.h_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::I;

    fn rabi_rhs(omega: f64) -> impl FnMut(f64, &[C64], &mut [C64]) {
        move |_t, y, dy| {
            dy[0] = -I * omega * y[1];
            dy[1] = -I * omega * y[0];
        }
    }

    #[test]
    fn rabi_oscillation_matches_closed_form() {
        let omega = 3.0;
        let cfg = IntegratorConfig::default();
        let mut ode = Dopri5::new(&cfg, 2, 0.1);
        let mut y = vec![C64::new(1.0, 0.0), ZERO];
        let mut f = rabi_rhs(omega);
        let mut t = 0.0;
        for k in 1..=20 {
            let t_next = 0.1 * k as f64;
            ode.advance(&mut f, t, &mut y, t_next).unwrap();
            t = t_next;
            assert!((y[1].norm_sqr() - (omega * t).sin().powi(2)).abs() < 1e-7);
        }
    }

    #[test]
    fn fixed_step_is_fifth_order() {
        let omega = 2.0;
        let exact = (omega * 1.0f64).sin().powi(2);
        let err = |h: f64| {
            let cfg = IntegratorConfig { fixed_step: Some(h), ..Default::default() };
            let mut ode = Dopri5::new(&cfg, 2, f64::INFINITY);
            let mut y = vec![C64::new(1.0, 0.0), ZERO];
            ode.advance(&mut rabi_rhs(omega), 0.0, &mut y, 1.0).unwrap();
            (y[1].norm_sqr() - exact).abs()
        };
        let order = (err(0.05) / err(0.025)).log2();
        assert!(order > 4.5, "observed order {order}");
    }

    #[test]
    fn respects_step_bound_and_endpoint() {
        let cfg = IntegratorConfig::default();
        let mut ode = Dopri5::new(&cfg, 1, 0.01);
        let mut y = vec![C64::new(1.0, 0.0)];
        let mut f = |_t: f64, y: &[C64], dy: &mut [C64]| dy[0] = -y[0];
        ode.advance(&mut f, 0.0, &mut y, 0.37).unwrap();
        assert!(ode.stats.accepted >= 37);
        assert!((y[0].re - (-0.37f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn step_bound_formula() {
        let cfg = IntegratorConfig::default();
        assert!((cfg.step_bound(std::f64::consts::PI) - 0.1).abs() < 1e-15);
        let capped = IntegratorConfig { max_step: Some(0.01), ..Default::default() };
        assert_eq!(capped.step_bound(1.0), 0.01);
    }
}
