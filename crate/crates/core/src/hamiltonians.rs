//! Time-dependent Hamiltonians: the rotating-frame model, its dispersive
//! reduction, the per-step reduced models, and inter-cavity crosstalk.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, annihilation, creation, number, qudit_transition, HilbertSpec, QUDIT_DIM};
use crate::linalg::{CsrMatrix, I, ONE, ZERO};
use crate::protocol::ProtocolParams;
use crate::pulses::Envelope;
use crate::units;

/// Physical constants of the qudit–cavity system, angular units internally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Qudit level frequencies ν_j (GHz), informational.
    pub level_freqs_ghz: [f64; 5],
    /// Cavity frequencies ν₁, ν₂ (GHz); their difference sets the crosstalk detuning.
    pub cavity_freqs_ghz: [f64; 2],
    /// Qudit–cavity coupling λ (rad/µs), equal for both cavities.
    pub lambda: f64,
    /// Large detuning Δ (rad/µs), equal for both cavities.
    pub detuning: f64,
    /// Cavity detuning δ′ (rad/µs), equal for both cavities.
    pub delta_prime: f64,
}

pub const LEVEL_FREQS_GHZ: [f64; 5] = [0.0, 3.0, 5.0, 15.0, 20.0];
pub const CAVITY_FREQS_GHZ: [f64; 2] = [11.0346, 4.0346];

impl SystemParams {
    /// Table values `(δ′/2π MHz, Δ/2π GHz, λ/2π MHz)` for N = 2, 3, 4.
    /// Other photon numbers reuse the N = 4 row.
    pub fn table_row(n: u32) -> (f64, f64, f64) {
        match n {
            2 => (-0.67, 5.00, 141.42),
            3 => (-0.67, 7.50, 173.48),
            _ => (-0.67, 5.96, 130.00),
        }
    }

    pub fn for_photons(n: u32) -> Self {
        let (dp, det, lam) = Self::table_row(n);
        Self::from_config_units(LEVEL_FREQS_GHZ, CAVITY_FREQS_GHZ, lam, det, dp)
    }

    pub fn from_config_units(
        level_freqs_ghz: [f64; 5],
        cavity_freqs_ghz: [f64; 2],
        lambda_mhz: f64,
        detuning_ghz: f64,
        delta_prime_mhz: f64,
    ) -> Self {
        Self {
            level_freqs_ghz,
            cavity_freqs_ghz,
            lambda: units::mhz(lambda_mhz),
            detuning: units::ghz(detuning_ghz),
            delta_prime: units::mhz(delta_prime_mhz),
        }
    }

    /// Crosstalk detuning `Δ′ = |ω₁ − ω₂|` (rad/µs).
    pub fn crosstalk_detuning(&self) -> f64 {
        units::ghz((self.cavity_freqs_ghz[0] - self.cavity_freqs_ghz[1]).abs())
    }

    /// Stark coefficient `λ²/Δ`.
    pub fn stark(&self) -> Result<f64> {
        if self.detuning == 0.0 {
            return Err(Error::Singularity("Δ = 0".into()));
        }
        Ok(self.lambda * self.lambda / self.detuning)
    }

    /// Checks the large-detuning condition. Returns warnings for a marginal ratio.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.detuning == 0.0 {
            return Err(Error::Singularity("Δ = 0".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Parameter(format!("coupling λ must be positive, got {}", self.lambda)));
        }
        let ratio = self.detuning.abs() / self.lambda;
        if ratio < 10.0 {
            return Err(Error::Parameter(format!("Δ/λ = {ratio:.2} violates the large-detuning condition (≥ 10)")));
        }
        let mut warnings = Vec::new();
        if ratio < 20.0 {
            warnings.push(format!("Δ/λ = {ratio:.2} is marginal for the dispersive reduction (< 20)"));
        }
        Ok(warnings)
    }
}

/// Systematic errors, angular units internally.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    /// Relative error on the resonant drives.
    pub delta: f64,
    /// Additive offset on the off-resonant drives (rad/µs), applied while they are on.
    pub delta_omega: f64,
    /// Additive coupling drift (rad/µs).
    pub delta_lambda: f64,
    /// Crosstalk strength λ₁₂ (rad/µs).
    pub crosstalk: f64,
}

impl ErrorModel {
    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

/// The four drives: Ω̃₀ on |0⟩↔|3⟩, Ω̄₀ on |0⟩↔|4⟩, Ω₁ on |1⟩↔|4⟩, Ω₂ on |2⟩↔|3⟩.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DriveSet {
    pub tilde0: Option<Envelope>,
    pub bar0: Option<Envelope>,
    pub omega1: Option<Envelope>,
    pub omega2: Option<Envelope>,
}

impl DriveSet {
    fn bandwidth(&self) -> f64 {
        [&self.tilde0, &self.bar0, &self.omega1, &self.omega2]
            .iter()
            .filter_map(|e| e.as_ref().map(Envelope::bandwidth))
            .fold(0.0, f64::max)
    }
}

pub type CoefficientFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

/// Scalar weight of one operator term.
#[derive(Clone)]
pub enum Coefficient {
    Constant(C64),
    Function(CoefficientFn),
}

impl Coefficient {
    pub fn function(f: impl Fn(f64) -> C64 + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> C64 {
        match self {
            Self::Constant(c) => *c,
            Self::Function(f) => f(t),
        }
    }

    pub fn conj(&self) -> Self {
        match self {
            Self::Constant(c) => Self::Constant(c.conj()),
            Self::Function(f) => {
                let f = Arc::clone(f);
                Self::Function(Arc::new(move |t| f(t).conj()))
            }
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Function(_) => f.write_str("Function(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Term {
    pub label: &'static str,
    pub matrix: CsrMatrix,
    pub coeff: Coefficient,
}

/// `H(t) = Σ_k c_k(t) A_k` over a fixed set of sparse operators.
#[derive(Clone, Debug)]
pub struct TimeDependentOperator {
    dims: HilbertSpec,
    terms: Vec<Term>,
    omega_max: f64,
}

impl TimeDependentOperator {
    pub fn new(dims: HilbertSpec) -> Self {
        Self { dims, terms: Vec::new(), omega_max: 0.0 }
    }

    pub fn dims(&self) -> HilbertSpec {
        self.dims
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Fastest angular frequency in the coefficients (rad/µs).
    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn raise_frequency(&mut self, omega: f64) {
        self.omega_max = self.omega_max.max(omega.abs());
    }

    pub fn push(&mut self, label: &'static str, matrix: CsrMatrix, coeff: Coefficient) {
        debug_assert_eq!(matrix.nrows(), self.dims.dim());
        if matrix.nnz() > 0 {
            self.terms.push(Term { label, matrix, coeff });
        }
    }

    /// Adds `c(t) A + c*(t) A†`.
    pub fn push_hermitian(&mut self, label: &'static str, matrix: CsrMatrix, coeff: Coefficient) {
        let adj = matrix.adjoint();
        let conj = coeff.conj();
        self.push(label, matrix, coeff);
        self.push(label, adj, conj);
    }

    pub fn push_constant(&mut self, label: &'static str, matrix: CsrMatrix) {
        self.push(label, matrix, Coefficient::Constant(ONE));
    }

    pub fn extend(&mut self, other: TimeDependentOperator) -> Result<()> {
        if other.dims != self.dims {
            return Err(Error::DimensionMismatch {
                context: "operator sum",
                expected: self.dims.dim(),
                found: other.dims.dim(),
            });
        }
        self.terms.extend(other.terms);
        self.raise_frequency(other.omega_max);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// The operator at time `t`.
    pub fn at(&self, t: f64) -> CsrMatrix {
        let n = self.dims.dim();
        let trip: Vec<_> = self
            .terms
            .iter()
            .flat_map(|term| {
                let c = term.coeff.eval(t);
                term.matrix.iter().map(move |(i, j, v)| (i, j, c * v))
            })
            .collect();
        CsrMatrix::from_triplets(n, n, trip)
    }

    /// Compiles into a merged sparsity skeleton for fast repeated assembly.
    pub fn compile(&self) -> CompiledOperator {
        CompiledOperator::new(self)
    }
}

/// Union sparsity pattern of all terms with per-term value scatter lists.
/// Constant terms are pre-summed.
#[derive(Clone)]
pub struct CompiledOperator {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    base: Vec<C64>,
    dynamic: Vec<(Coefficient, Vec<(u32, C64)>)>,
    data: Vec<C64>,
    assembled_at: Option<f64>,
}

impl CompiledOperator {
    fn new(op: &TimeDependentOperator) -> Self {
        let n = op.dims.dim();
        let pattern = CsrMatrix::from_triplets(
            n,
            n,
            op.terms.iter().flat_map(|t| t.matrix.iter().map(|(i, j, _)| (i, j, ONE))).collect::<Vec<_>>(),
        );
        let indptr = pattern.indptr().to_vec();
        let indices = pattern.indices().to_vec();
        let position = |i: usize, j: usize| -> u32 {
            let row = &indices[indptr[i]..indptr[i + 1]];
            (indptr[i] + row.binary_search(&j).expect("entry present in union pattern")) as u32
        };
        let mut base = vec![ZERO; indices.len()];
        let mut dynamic = Vec::new();
        for term in &op.terms {
            match term.coeff {
                Coefficient::Constant(c) => {
                    for (i, j, v) in term.matrix.iter() {
                        base[position(i, j) as usize] += c * v;
                    }
                }
                Coefficient::Function(_) => {
                    let scatter = term.matrix.iter().map(|(i, j, v)| (position(i, j), v)).collect();
                    dynamic.push((term.coeff.clone(), scatter));
                }
            }
        }
        let data = base.clone();
        Self { n, indptr, indices, base, dynamic, data, assembled_at: None }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_static(&self) -> bool {
        self.dynamic.is_empty()
    }

    /// Adds a constant matrix (used for the non-hermitian decay part).
    pub fn add_constant(&self, extra: &CsrMatrix) -> Self {
        let n = self.n;
        let rows: Vec<usize> =
            (0..n).flat_map(|i| std::iter::repeat(i).take(self.indptr[i + 1] - self.indptr[i])).collect();
        let old = rows.iter().zip(&self.indices).map(|(&i, &j)| (i, j, ONE));
        let pattern =
            CsrMatrix::from_triplets(n, n, old.chain(extra.iter().map(|(i, j, _)| (i, j, ONE))).collect::<Vec<_>>());
        let indptr = pattern.indptr().to_vec();
        let indices = pattern.indices().to_vec();
        let position = |i: usize, j: usize| -> u32 {
            let row = &indices[indptr[i]..indptr[i + 1]];
            (indptr[i] + row.binary_search(&j).expect("entry present in union pattern")) as u32
        };
        let remap: Vec<u32> = rows.iter().zip(&self.indices).map(|(&i, &j)| position(i, j)).collect();
        let mut base = vec![ZERO; indices.len()];
        for (k, &v) in self.base.iter().enumerate() {
            base[remap[k] as usize] += v;
        }
        for (i, j, v) in extra.iter() {
            base[position(i, j) as usize] += v;
        }
        let dynamic = self
            .dynamic
            .iter()
            .map(|(c, scatter)| (c.clone(), scatter.iter().map(|&(p, v)| (remap[p as usize], v)).collect()))
            .collect();
        let data = base.clone();
        Self { n, indptr, indices, base, dynamic, data, assembled_at: None }
    }

    /// Fills the value array for time `t`.
    pub fn assemble(&mut self, t: f64) {
        if self.assembled_at == Some(t) {
            return;
        }
        self.data.copy_from_slice(&self.base);
        for (coeff, scatter) in &self.dynamic {
            let c = coeff.eval(t);
            if c == ZERO {
                continue;
            }
            for &(p, v) in scatter {
                self.data[p as usize] += c * v;
            }
        }
        self.assembled_at = Some(t);
    }

    /// `y += alpha · H(t_assembled) x`.
    pub fn matvec_acc(&self, alpha: C64, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yi += alpha * acc;
        }
    }

    /// `y = alpha · H x` (overwrites).
    pub fn matvec_into(&self, alpha: C64, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yi = alpha * acc;
        }
    }

    /// `out += alpha · H M` for a row-major `n × width` matrix `M`.
    pub fn mul_dense_acc(&self, alpha: C64, m: &[C64], width: usize, out: &mut [C64]) {
        for i in 0..self.n {
            let orow = &mut out[i * width..(i + 1) * width];
            for k in self.indptr[i]..self.indptr[i + 1] {
                let a = alpha * self.data[k];
                if a == ZERO {
                    continue;
                }
                let j = self.indices[k];
                for (o, &v) in orow.iter_mut().zip(&m[j * width..(j + 1) * width]) {
                    *o += a * v;
                }
            }
        }
    }

    /// Current assembled matrix.
    pub fn current(&self) -> CsrMatrix {
        CsrMatrix::from_raw(self.n, self.n, self.indptr.clone(), self.indices.clone(), self.data.clone())
    }
}

fn q(j: usize, k: usize) -> CsrMatrix {
    qudit_transition(j, k).expect("levels in range")
}

struct Local {
    spec: HilbertSpec,
    a: CsrMatrix,
    ad: CsrMatrix,
    n: CsrMatrix,
    id_c: CsrMatrix,
}

impl Local {
    fn new(spec: HilbertSpec) -> Result<Self> {
        let d = spec.cavity_dim();
        Ok(Self { spec, a: annihilation(d)?, ad: creation(d)?, n: number(d)?, id_c: CsrMatrix::identity(d) })
    }

    fn full(&self, qm: &CsrMatrix, c1: &CsrMatrix, c2: &CsrMatrix) -> CsrMatrix {
        hilbert::product(self.spec, qm, c1, c2).expect("local shapes match").into_csr()
    }

    fn qudit(&self, qm: &CsrMatrix) -> CsrMatrix {
        self.full(qm, &self.id_c, &self.id_c)
    }

    fn n_total(&self) -> CsrMatrix {
        let id5 = CsrMatrix::identity(QUDIT_DIM);
        self.full(&id5, &self.n, &self.id_c).add(&self.full(&id5, &self.id_c, &self.n)).expect("same shape")
    }
}

/// `(1+δ)·e(t)`, or `None` when the drive is off.
fn resonant_coefficient(env: &Option<Envelope>, delta: f64) -> Option<Coefficient> {
    env.clone().map(|e| Coefficient::function(move |t| e.eval(t) * (1.0 + delta)))
}

/// `e(t) + δΩ′` inside the drive window.
fn off_resonant_value(e: &Envelope, offset: f64, t: f64) -> C64 {
    if e.contains(t) {
        e.eval(t) + offset
    } else {
        ZERO
    }
}

fn push_resonant(h: &mut TimeDependentOperator, l: &Local, drives: &DriveSet, delta: f64) {
    if let Some(c) = resonant_coefficient(&drives.tilde0, delta) {
        h.push_hermitian("resonant 0-3", l.qudit(&q(0, 3)), c);
    }
    if let Some(c) = resonant_coefficient(&drives.bar0, delta) {
        h.push_hermitian("resonant 0-4", l.qudit(&q(0, 4)), c);
    }
}

/// Rotating-frame Hamiltonian with both drive pairs, qudit–cavity exchange,
/// cavity detunings, systematic errors and (optionally) crosstalk.
pub fn build_full(
    spec: HilbertSpec,
    params: &SystemParams,
    drives: &DriveSet,
    errors: &ErrorModel,
) -> Result<TimeDependentOperator> {
    let l = Local::new(spec)?;
    let mut h = TimeDependentOperator::new(spec);
    let det = params.detuning;
    let lam = params.lambda + errors.delta_lambda;
    push_resonant(&mut h, &l, drives, errors.delta);

    // Off-resonant drives Ω_k e^{iΔt} on |4⟩⟨1| and |3⟩⟨2|.
    for (env, qm) in [(&drives.omega1, q(4, 1)), (&drives.omega2, q(3, 2))] {
        if let Some(e) = env.clone() {
            let offset = errors.delta_omega;
            let c = Coefficient::function(move |t| off_resonant_value(&e, offset, t) * C64::from_polar(1.0, det * t));
            h.push_hermitian("off-resonant drive", l.qudit(&qm), c);
        }
    }
    // Couplings λ a_k† e^{−iΔt} |1⟩⟨4| and |2⟩⟨3|.
    let couple = move |t: f64| C64::from_polar(lam, -det * t);
    h.push_hermitian("coupling 1", l.full(&q(1, 4), &l.ad, &l.id_c), Coefficient::function(couple));
    h.push_hermitian("coupling 2", l.full(&q(2, 3), &l.id_c, &l.ad), Coefficient::function(couple));
    h.push("cavity detuning", l.n_total(), Coefficient::Constant(C64::new(params.delta_prime, 0.0)));
    h.raise_frequency(det.abs() + drives.bandwidth());

    if errors.crosstalk != 0.0 {
        h.extend(build_crosstalk(spec, errors.crosstalk, params.crosstalk_detuning())?)?;
    }
    Ok(h)
}

/// Dispersive Hamiltonian: resonant drives plus, per cavity, Stark shift,
/// effective linear drive `(λ/Δ)(Ω a† + Ω* a)` and level shift `(λ² + |Ω|²)/Δ`,
/// all conditioned on |4⟩ (cavity 1) or |3⟩ (cavity 2).
///
/// Crosstalk enters through its own dispersive limit `(|λ₁₂|²/Δ′)(n₁ − n₂)`.
pub fn build_effective(
    spec: HilbertSpec,
    params: &SystemParams,
    drives: &DriveSet,
    errors: &ErrorModel,
) -> Result<TimeDependentOperator> {
    if params.detuning == 0.0 {
        return Err(Error::Singularity("Δ = 0 in the dispersive reduction".into()));
    }
    let l = Local::new(spec)?;
    let id5 = CsrMatrix::identity(QUDIT_DIM);
    let mut h = TimeDependentOperator::new(spec);
    let det = params.detuning;
    let lam = params.lambda + errors.delta_lambda;
    push_resonant(&mut h, &l, drives, errors.delta);

    let branches = [
        (&drives.omega1, q(4, 4), l.full(&q(4, 4), &l.ad, &l.id_c), l.full(&q(4, 4), &l.n, &l.id_c)),
        (&drives.omega2, q(3, 3), l.full(&q(3, 3), &l.id_c, &l.ad), l.full(&q(3, 3), &l.id_c, &l.n)),
    ];
    for (env, proj, ad_p, n_p) in branches {
        let proj_full = l.qudit(&proj);
        h.push("stark", n_p, Coefficient::Constant(C64::new(lam * lam / det, 0.0)));
        h.push("level shift", proj_full.clone(), Coefficient::Constant(C64::new(lam * lam / det, 0.0)));
        if let Some(e) = env.clone() {
            let offset = errors.delta_omega;
            let e2 = e.clone();
            h.push_hermitian(
                "effective drive",
                ad_p,
                Coefficient::function(move |t| off_resonant_value(&e, offset, t) * (lam / det)),
            );
            h.push(
                "drive shift",
                proj_full,
                Coefficient::function(move |t| C64::new(off_resonant_value(&e2, offset, t).norm_sqr() / det, 0.0)),
            );
        }
    }
    h.push("cavity detuning", l.n_total(), Coefficient::Constant(C64::new(params.delta_prime, 0.0)));
    if errors.crosstalk != 0.0 {
        let shift = errors.crosstalk * errors.crosstalk / params.crosstalk_detuning();
        let diff = l.full(&id5, &l.n, &l.id_c).sub(&l.full(&id5, &l.id_c, &l.n))?;
        h.push("crosstalk shift", diff, Coefficient::Constant(C64::new(shift, 0.0)));
    }
    h.raise_frequency(drives.bandwidth());
    Ok(h)
}

/// `Ω(t)|0,0,0⟩⟨Φ₊| + h.c.` with `Φ₊ = (|3,0,0⟩ + |4,0,0⟩)/√2`.
pub fn build_step1_eff(spec: HilbertSpec, envelope: &Envelope) -> TimeDependentOperator {
    let n = spec.dim();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let g = spec.index(0, 0, 0);
    let m = CsrMatrix::from_triplets(
        n,
        n,
        [(g, spec.index(3, 0, 0), C64::new(s, 0.0)), (g, spec.index(4, 0, 0), C64::new(s, 0.0))],
    );
    let mut h = TimeDependentOperator::new(spec);
    let e = envelope.clone();
    h.push_hermitian("step-1 transfer", m, Coefficient::function(move |t| e.eval(t)));
    h.raise_frequency(envelope.bandwidth());
    h
}

/// Conditional displacement drive of step 2:
/// `Σ_k [ω a_k†a_k + (iα₀/T)(e^{−iω(t−τ₁)} a_k† − h.c.) + (λ² + Ω²)/Δ] ⊗ |5−k⟩⟨5−k|`.
pub fn build_step2_eff(spec: HilbertSpec, p: &ProtocolParams) -> Result<TimeDependentOperator> {
    let omega = p.omega_s2;
    if !(omega > 0.0) {
        return Err(Error::Parameter(format!("ω_s2 = {omega} must be positive")));
    }
    let l = Local::new(spec)?;
    let mut h = TimeDependentOperator::new(spec);
    let drive = p.alpha0 / p.step2_duration();
    let t0 = p.tau1;
    let shift = (p.system.lambda.powi(2) + p.omega_s2_amp.powi(2)) / p.system.detuning;
    let branches = [
        (q(4, 4), l.full(&q(4, 4), &l.ad, &l.id_c), l.full(&q(4, 4), &l.n, &l.id_c)),
        (q(3, 3), l.full(&q(3, 3), &l.id_c, &l.ad), l.full(&q(3, 3), &l.id_c, &l.n)),
    ];
    for (proj, ad_p, n_p) in branches {
        h.push("oscillator", n_p, Coefficient::Constant(C64::new(omega, 0.0)));
        h.push_hermitian(
            "displacement drive",
            ad_p,
            Coefficient::function(move |t| I * drive * C64::from_polar(1.0, -omega * (t - t0))),
        );
        h.push("level shift", l.qudit(&proj), Coefficient::Constant(C64::new(shift, 0.0)));
    }
    h.raise_frequency(omega);
    Ok(h)
}

/// Resonant step-3 coupling `Σ_k Ω(t)|0⟩⟨5−k| ⊗ |N⟩_k⟨0̃| + h.c.` where
/// `|0̃⟩ = D(α₀)|0⟩` at the current truncation.
pub fn build_step3_reduced(spec: HilbertSpec, p: &ProtocolParams, base: &Envelope) -> Result<TimeDependentOperator> {
    let d = spec.cavity_dim();
    let nn = p.n as usize;
    if nn >= d {
        return Err(Error::Truncation { population: 1.0, cavity_dim: d });
    }
    let disp = hilbert::displacement(p.alpha0, d)?;
    let vac = disp.displaced_vacuum();
    let proj = CsrMatrix::from_triplets(d, d, vac.iter().enumerate().map(|(m, v)| (nn, m, v.conj())));
    let l = Local::new(spec)?;
    let m = l.full(&q(0, 4), &proj, &l.id_c).add(&l.full(&q(0, 3), &l.id_c, &proj))?;
    let mut h = TimeDependentOperator::new(spec);
    let e = base.clone();
    h.push_hermitian("step-3 transfer", m, Coefficient::function(move |t| e.eval(t)));
    h.raise_frequency(base.bandwidth());
    Ok(h)
}

/// `λ₁₂ a₁†a₂ e^{iΔ′t} + h.c.`
pub fn build_crosstalk(spec: HilbertSpec, lambda12: f64, detuning: f64) -> Result<TimeDependentOperator> {
    let l = Local::new(spec)?;
    let mut h = TimeDependentOperator::new(spec);
    if lambda12 != 0.0 {
        let m = l.full(&CsrMatrix::identity(QUDIT_DIM), &l.ad, &l.a);
        h.push_hermitian("crosstalk", m, Coefficient::function(move |t| C64::from_polar(lambda12, detuning * t)));
        h.raise_frequency(detuning);
    }
    Ok(h)
}
