//! Drive envelopes: resonant π-pulse, the invariant-engineered pulse with
//! vanishing error sensitivity, and the modulated step-2/step-3 drives.
//!
//! All amplitudes are angular (rad/µs), times in µs.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dynamics::ode::{Dopri5, IntegratorConfig};
use crate::error::{Error, Result};
use crate::linalg::{I, ONE, ZERO};

/// Base shape of a population-transfer pulse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    Pi,
    Optimized,
}

impl FromStr for PulseShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pi" => Ok(Self::Pi),
            "optimized" => Ok(Self::Optimized),
            other => Err(Error::Config(format!("unknown pulse shape `{other}` (expected pi|optimized)"))),
        }
    }
}

impl fmt::Display for PulseShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pi => "pi",
            Self::Optimized => "optimized",
        })
    }
}

/// Parameters of the invariant-based pulse family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantParams {
    pub a: f64,
    pub tau: f64,
}

impl InvariantParams {
    pub fn new(a: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Parameter(format!("pulse duration must be positive, got {tau}")));
        }
        if a == 0.0 || !a.is_finite() {
            return Err(Error::Parameter(format!("invariant coefficient A must be finite and nonzero, got {a}")));
        }
        Ok(Self { a, tau })
    }

    pub fn theta(&self, t: f64) -> f64 {
        PI * (PI * t / (2.0 * self.tau)).sin().powi(2)
    }

    pub fn theta_dot(&self, t: f64) -> f64 {
        PI * PI / (2.0 * self.tau) * (PI * t / self.tau).sin()
    }

    pub fn beta(&self, theta: f64) -> f64 {
        4.0 * self.a / 3.0 * theta.sin().powi(3)
    }

    pub fn beta_dot(&self, t: f64) -> f64 {
        let th = self.theta(t);
        4.0 * self.a * self.theta_dot(t) * th.cos() * th.sin().powi(2)
    }

    /// `Ω(t)` with `Re = θ̇/2 (4A sin³θ sinβ − cosβ)`, `Im = θ̇/2 (4A sin³θ cosβ + sinβ)`.
    pub fn envelope(&self, t: f64) -> C64 {
        let th = self.theta(t);
        let td = self.theta_dot(t);
        let b = self.beta(th);
        let s3 = 4.0 * self.a * th.sin().powi(3);
        C64::new(td / 2.0 * (s3 * b.sin() - b.cos()), td / 2.0 * (s3 * b.cos() + b.sin()))
    }

    pub fn lr_phase(&self, t: f64) -> f64 {
        let th = self.theta(t);
        self.a * (2.0 * th - (2.0 * th).sin())
    }
}

fn check_window(t: f64, tau: f64) -> Result<()> {
    if !(0.0..=tau).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, {tau}]")));
    }
    Ok(())
}

/// `θ(t) = π sin²(πt/2τ)`.
pub fn theta(t: f64, tau: f64) -> Result<f64> {
    check_window(t, tau)?;
    Ok(PI * (PI * t / (2.0 * tau)).sin().powi(2))
}

/// `β = (4/3) sin³θ`.
pub fn beta(theta: f64) -> f64 {
    4.0 / 3.0 * theta.sin().powi(3)
}

/// The error-insensitive pulse with `A = 1`.
pub fn optimized_envelope(t: f64, tau: f64) -> Result<C64> {
    check_window(t, tau)?;
    Ok(InvariantParams::new(1.0, tau)?.envelope(t))
}

/// Constant amplitude `−iπ/(2τ)` of a resonant π-pulse.
pub fn pi_envelope(tau: f64) -> Result<C64> {
    if !(tau > 0.0) {
        return Err(Error::Parameter(format!("pulse duration must be positive, got {tau}")));
    }
    Ok(-I * (PI / (2.0 * tau)))
}

/// `iΩ e^{−iωt}`.
pub fn step2_envelope(t: f64, amplitude: f64, omega: f64) -> C64 {
    I * amplitude * C64::from_polar(1.0, -omega * t)
}

/// `χ(t) = A(2θ − sin 2θ)`.
pub fn lr_phase(t: f64, tau: f64, a: f64) -> Result<f64> {
    check_window(t, tau)?;
    Ok(InvariantParams::new(a, tau)?.lr_phase(t))
}

/// Error sensitivity `Q = sin²(Aπ)/A²`.
pub fn sensitivity_q(a: f64) -> Result<f64> {
    if a == 0.0 {
        return Err(Error::Domain("sensitivity Q is undefined at A = 0".into()));
    }
    Ok((a * PI).sin().powi(2) / (a * a))
}

/// Time-dependent drive amplitude, zero outside `[t0, t0 + τ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub kind: EnvelopeKind,
    pub t0: f64,
    pub duration: f64,
    /// Overall complex factor (e.g. `1/√2` when one pulse feeds two transitions).
    pub scale: C64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvelopeKind {
    /// Constant value over the window.
    ConstantPi { value: C64 },
    /// Invariant-engineered pulse on local time `t − t0`.
    OptimizedSta { a: f64 },
    /// `iΩ e^{−iω(t − t0)}`.
    Step2Drive { amplitude: f64, omega: f64 },
    /// Base shape on local time, times `e^{−iνt}/ε` with absolute `t`.
    Step3Resonant { shape: PulseShape, a: f64, modulation: f64, epsilon: f64 },
    /// Constant real off-resonant drive.
    Step3OffResonant { amplitude: f64 },
}

impl Envelope {
    pub fn pi(t0: f64, duration: f64) -> Result<Self> {
        Ok(Self { kind: EnvelopeKind::ConstantPi { value: pi_envelope(duration)? }, t0, duration, scale: ONE })
    }

    pub fn optimized(t0: f64, duration: f64, a: f64) -> Result<Self> {
        InvariantParams::new(a, duration)?;
        Ok(Self { kind: EnvelopeKind::OptimizedSta { a }, t0, duration, scale: ONE })
    }

    pub fn transfer(shape: PulseShape, t0: f64, duration: f64, a: f64) -> Result<Self> {
        match shape {
            PulseShape::Pi => Self::pi(t0, duration),
            PulseShape::Optimized => Self::optimized(t0, duration, a),
        }
    }

    /// Base shape of the step-3 transfer: `+iπ/(2τ)` or the optimized pulse.
    pub fn step3_base(shape: PulseShape, t0: f64, duration: f64, a: f64) -> Result<Self> {
        match shape {
            PulseShape::Pi => {
                if !(duration > 0.0) {
                    return Err(Error::Parameter(format!("pulse duration must be positive, got {duration}")));
                }
                Ok(Self {
                    kind: EnvelopeKind::ConstantPi { value: I * (PI / (2.0 * duration)) },
                    t0,
                    duration,
                    scale: ONE,
                })
            }
            PulseShape::Optimized => Self::optimized(t0, duration, a),
        }
    }

    pub fn step2(t0: f64, duration: f64, amplitude: f64, omega: f64) -> Self {
        Self { kind: EnvelopeKind::Step2Drive { amplitude, omega }, t0, duration, scale: ONE }
    }

    pub fn step3_resonant(
        shape: PulseShape,
        t0: f64,
        duration: f64,
        a: f64,
        modulation: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Parameter(format!("coherent overlap ε must be positive, got {epsilon}")));
        }
        if !(duration > 0.0) {
            return Err(Error::Parameter(format!("pulse duration must be positive, got {duration}")));
        }
        Ok(Self { kind: EnvelopeKind::Step3Resonant { shape, a, modulation, epsilon }, t0, duration, scale: ONE })
    }

    pub fn step3_off_resonant(t0: f64, duration: f64, amplitude: f64) -> Self {
        Self { kind: EnvelopeKind::Step3OffResonant { amplitude }, t0, duration, scale: ONE }
    }

    pub fn scaled(mut self, s: C64) -> Self {
        self.scale *= s;
        self
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.duration
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t_end()
    }

    pub fn eval(&self, t: f64) -> C64 {
        if !self.contains(t) {
            return ZERO;
        }
        let local = t - self.t0;
        let base = match self.kind {
            EnvelopeKind::ConstantPi { value } => value,
            EnvelopeKind::OptimizedSta { a } => InvariantParams { a, tau: self.duration }.envelope(local),
            EnvelopeKind::Step2Drive { amplitude, omega } => step2_envelope(local, amplitude, omega),
            EnvelopeKind::Step3Resonant { shape, a, modulation, epsilon } => {
                let shape_value = match shape {
                    PulseShape::Pi => I * (PI / (2.0 * self.duration)),
                    PulseShape::Optimized => InvariantParams { a, tau: self.duration }.envelope(local),
                };
                shape_value * C64::from_polar(1.0 / epsilon, -modulation * t)
            }
            EnvelopeKind::Step3OffResonant { amplitude } => C64::new(amplitude, 0.0),
        };
        self.scale * base
    }

    /// Largest angular frequency in the envelope's time dependence (rad/µs).
    pub fn bandwidth(&self) -> f64 {
        match self.kind {
            EnvelopeKind::ConstantPi { .. } | EnvelopeKind::Step3OffResonant { .. } => 0.0,
            EnvelopeKind::OptimizedSta { .. } => 2.0 * PI / self.duration,
            EnvelopeKind::Step2Drive { omega, .. } => omega.abs(),
            EnvelopeKind::Step3Resonant { modulation, .. } => modulation.abs() + 2.0 * PI / self.duration,
        }
    }

    /// Peak `|Ω(t)|`, sampled on a fine grid for shaped pulses.
    pub fn peak(&self) -> f64 {
        match self.kind {
            EnvelopeKind::ConstantPi { value } => (self.scale * value).norm(),
            EnvelopeKind::Step3OffResonant { amplitude } => (self.scale * amplitude).norm(),
            EnvelopeKind::Step2Drive { amplitude, .. } => (self.scale * amplitude).norm(),
            _ => (0..=2000).map(|k| self.eval(self.t0 + self.duration * k as f64 / 2000.0).norm()).fold(0.0, f64::max),
        }
    }
}

/// Maximum over `grid` of `‖i ∂ₜI − [H, I]‖_max` for the two-level problem
/// `H = Re Ω σx + Im Ω σy` with `Ω = amplitude_scale · Ω_A(t)`.
pub fn invariant_residual(grid: &[f64], params: InvariantParams, amplitude_scale: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for &t in grid {
        check_window(t, params.tau)?;
        let th = params.theta(t);
        let b = params.beta(th);
        let td = params.theta_dot(t);
        let bd = params.beta_dot(t);
        let n = [th.sin() * b.sin(), th.sin() * b.cos(), th.cos()];
        let n_dot = [
            td * th.cos() * b.sin() + bd * th.sin() * b.cos(),
            td * th.cos() * b.cos() - bd * th.sin() * b.sin(),
            -td * th.sin(),
        ];
        let om = params.envelope(t) * amplitude_scale;
        let h = [om.re, om.im, 0.0];
        // [h·σ, n·σ] = 2i (h × n)·σ, so the residual vector is i(ṅ − 2 h × n)·σ.
        let cross = [h[1] * n[2] - h[2] * n[1], h[2] * n[0] - h[0] * n[2], h[0] * n[1] - h[1] * n[0]];
        let r: Vec<f64> = (0..3).map(|k| n_dot[k] - 2.0 * cross[k]).collect();
        // Largest entry of r·σ: diagonal ±r_z, off-diagonal r_x ∓ i r_y.
        let off = r[0].hypot(r[1]);
        worst = worst.max(off.max(r[2].abs()));
    }
    Ok(worst)
}

/// Transfer amplitude `|⟨ξ₂|ψ(τ)⟩|` for `i ψ̇ = (1+δ)[Ω(t)|ξ₁⟩⟨ξ₂| + h.c.]ψ`, `ψ(0) = ξ₁`.
pub fn two_level_transfer(pulse: &Envelope, delta: f64) -> Result<f64> {
    match pulse.kind {
        EnvelopeKind::ConstantPi { .. } | EnvelopeKind::OptimizedSta { .. } => {}
        _ => return Err(Error::Parameter("two-level bench takes a π or optimized pulse".into())),
    }
    if !(-0.5..=0.5).contains(&delta) {
        return Err(Error::Domain(format!("error rate δ = {delta} outside [−0.5, 0.5]")));
    }
    let cfg = IntegratorConfig { rtol: 1e-12, atol: 1e-14, ..Default::default() };
    let mut ode = Dopri5::new(&cfg, 2, pulse.duration / 50.0);
    let mut y = vec![ONE, ZERO];
    let factor = 1.0 + delta;
    let mut rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        let om = pulse.eval(t) * factor;
        dy[0] = -I * om * y[1];
        dy[1] = -I * om.conj() * y[0];
    };
    ode.advance(&mut rhs, pulse.t0, &mut y, pulse.t_end())?;
    Ok(y[1].norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn theta_and_beta_boundaries() {
        let tau = 0.7;
        assert_eq!(theta(0.0, tau).unwrap(), 0.0);
        assert_abs_diff_eq!(theta(tau, tau).unwrap(), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(theta(tau / 2.0, tau).unwrap(), PI / 2.0, epsilon = 1e-15);
        assert!(matches!(theta(-0.1, tau), Err(Error::Domain(_))));
        assert_eq!(beta(0.0), 0.0);
        assert_abs_diff_eq!(beta(PI), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(beta(PI / 2.0), 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn optimized_envelope_midpoint_oracle() {
        let tau = 0.01;
        assert_eq!(optimized_envelope(0.0, tau).unwrap(), ZERO);
        assert!(optimized_envelope(tau, tau).unwrap().norm() < 1e-10);
        let pref = PI * PI / (4.0 * tau);
        let b = 4.0f64 / 3.0;
        let mid = optimized_envelope(tau / 2.0, tau).unwrap();
        assert_abs_diff_eq!(mid.re, pref * (4.0 * b.sin() - b.cos()), epsilon = 1e-9);
        assert_abs_diff_eq!(mid.im, pref * (4.0 * b.cos() + b.sin()), epsilon = 1e-9);
    }

    #[test]
    fn pi_envelope_value() {
        let v = pi_envelope(0.01).unwrap();
        assert_abs_diff_eq!(v.im, -157.07963267948966, epsilon = 1e-9);
        assert_eq!(v.re, 0.0);
        assert!(pi_envelope(0.0).is_err());
    }

    #[test]
    fn step2_envelope_periodic() {
        let (amp, w) = (12.5, 20.9);
        assert_eq!(step2_envelope(0.0, amp, w), I * amp);
        let back = step2_envelope(2.0 * PI / w, amp, w);
        assert!((back - I * amp).norm() < 1e-12);
        assert_abs_diff_eq!(step2_envelope(0.123, amp, w).norm(), amp, epsilon = 1e-12);
    }

    #[test]
    fn lr_phase_values() {
        assert_eq!(lr_phase(0.0, 1.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(lr_phase(1.0, 1.0, 1.0).unwrap(), 2.0 * PI, epsilon = 1e-14);
        assert_abs_diff_eq!(lr_phase(0.5, 1.0, 1.0).unwrap(), PI, epsilon = 1e-14);
    }

    #[test]
    fn sensitivity_zeros() {
        assert!(sensitivity_q(1.0).unwrap() < 1e-30);
        assert!(sensitivity_q(2.0).unwrap() < 1e-30);
        assert_abs_diff_eq!(sensitivity_q(0.5).unwrap(), 4.0, epsilon = 1e-14);
        assert!(sensitivity_q(0.0).is_err());
    }

    #[test]
    fn envelopes_vanish_outside_window() {
        let envs = [
            Envelope::pi(1.0, 0.5).unwrap(),
            Envelope::optimized(1.0, 0.5, 1.0).unwrap(),
            Envelope::step2(1.0, 0.5, 3.0, 4.0),
            Envelope::step3_resonant(PulseShape::Pi, 1.0, 0.5, 1.0, 2.0, 0.4).unwrap(),
            Envelope::step3_off_resonant(1.0, 0.5, -7.0),
        ];
        for e in &envs {
            assert_eq!(e.eval(0.999), ZERO);
            assert_eq!(e.eval(1.501), ZERO);
        }
    }

    #[test]
    fn step3_envelope_values() {
        let eps = 0.4420;
        let dur = 14.5;
        let e = Envelope::step3_resonant(PulseShape::Pi, 0.5, dur, 1.0, 3.0, eps).unwrap();
        assert_abs_diff_eq!(e.eval(0.5 + dur / 2.0).norm(), PI / (2.0 * dur * eps), epsilon = 1e-12);
        let o = Envelope::step3_resonant(PulseShape::Optimized, 0.5, dur, 1.0, 3.0, eps).unwrap();
        assert_eq!(o.eval(0.5), ZERO);
        let t = 3.0;
        let ratio = e.eval(t + 2.0 * PI / 3.0) / e.eval(t);
        assert!((ratio - ONE).norm() < 1e-12);
        assert!(Envelope::step3_resonant(PulseShape::Pi, 0.0, 1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn invariant_residual_checks() {
        let p = InvariantParams::new(1.0, 0.01).unwrap();
        let grid: Vec<f64> = (0..=1000).map(|k| 0.01 * k as f64 / 1000.0).collect();
        assert!(invariant_residual(&grid, p, 1.0).unwrap() < 1e-8);
        assert!(invariant_residual(&grid, p, 1.1).unwrap() > 1e-3);
        assert!(invariant_residual(&[0.0], p, 1.0).unwrap() < 1e-12);
    }

    #[test]
    fn pi_pulse_transfer_closed_form() {
        let pulse = Envelope::pi(0.0, 0.01).unwrap();
        assert_abs_diff_eq!(two_level_transfer(&pulse, 0.0).unwrap(), 1.0, epsilon = 1e-9);
        for delta in [-0.3, -0.1, 0.2, 0.3] {
            let want = ((1.0 + delta) * PI / 2.0).sin().abs();
            assert_abs_diff_eq!(two_level_transfer(&pulse, delta).unwrap(), want, epsilon = 1e-6);
        }
    }

    #[test]
    fn optimized_pulse_is_robust() {
        let pulse = Envelope::optimized(0.0, 0.01, 1.0).unwrap();
        assert_abs_diff_eq!(two_level_transfer(&pulse, 0.0).unwrap(), 1.0, epsilon = 1e-9);
        // Reference amplitudes from an independent scipy integration of H = Re Ω σx + Im Ω σy.
        for (delta, want) in [
            (-0.2, 0.9965699123613049),
            (-0.1, 0.9997937820543114),
            (0.1, 0.9998357174302059),
            (0.2, 0.9978421122905742),
        ] {
            assert_abs_diff_eq!(two_level_transfer(&pulse, delta).unwrap(), want, epsilon = 1e-8);
        }
        let loss = |d: f64| 1.0 - two_level_transfer(&pulse, d).unwrap();
        let ratio = loss(0.2) / loss(0.1);
        assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
        assert!(two_level_transfer(&Envelope::step2(0.0, 1.0, 1.0, 1.0), 0.0).is_err());
    }
}
