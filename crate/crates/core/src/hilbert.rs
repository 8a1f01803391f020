//! Truncated tensor-product space `qudit(5) ⊗ cavity(d) ⊗ cavity(d)` and the
//! operators, states and overlaps that live on it.
//!
//! Basis ordering is `index = q·d² + n₁·d + n₂`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dense, CsrMatrix, ONE, ZERO};

pub const QUDIT_DIM: usize = 5;

/// Below this total dimension operators keep a dense copy for products.
pub const DENSE_FALLBACK_DIM: usize = 64;

/// Top-Fock-level population above which a displaced vacuum is rejected.
pub const TRUNCATION_HARD_LIMIT: f64 = 1e-4;
/// Top-Fock-level population above which a warning is attached.
pub const TRUNCATION_WARN_LIMIT: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertSpec {
    cavity_dim: usize,
}

impl HilbertSpec {
    pub fn new(cavity_dim: usize) -> Result<Self> {
        if cavity_dim < 2 {
            return Err(Error::InvalidDimension(cavity_dim));
        }
        Ok(Self { cavity_dim })
    }

    /// Default truncation for target photon number `n`:
    /// `max(15, ⌈N + 6√N⌉ + 2)`.
    pub fn default_for_photons(n: u32) -> Self {
        let nf = n as f64;
        let d = ((nf + 6.0 * nf.sqrt()).ceil() as usize + 2).max(15);
        Self { cavity_dim: d }
    }

    pub fn qudit_dim(&self) -> usize {
        QUDIT_DIM
    }

    pub fn cavity_dim(&self) -> usize {
        self.cavity_dim
    }

    pub fn dim(&self) -> usize {
        QUDIT_DIM * self.cavity_dim * self.cavity_dim
    }

    pub fn slot_dim(&self, slot: Slot) -> usize {
        match slot {
            Slot::Qudit => QUDIT_DIM,
            Slot::Cavity1 | Slot::Cavity2 => self.cavity_dim,
        }
    }

    pub fn index(&self, q: usize, n1: usize, n2: usize) -> usize {
        let d = self.cavity_dim;
        debug_assert!(q < QUDIT_DIM && n1 < d && n2 < d);
        q * d * d + n1 * d + n2
    }

    /// Inverse of [`index`](Self::index).
    pub fn labels(&self, index: usize) -> (usize, usize, usize) {
        let d = self.cavity_dim;
        (index / (d * d), (index / d) % d, index % d)
    }
}

/// Tensor factor, in basis order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Qudit,
    Cavity1,
    Cavity2,
}

/// Operator on the full space. Keeps a dense copy when the space is tiny.
#[derive(Clone, Debug)]
pub struct Operator {
    dims: HilbertSpec,
    csr: CsrMatrix,
    dense: Option<DMatrix<C64>>,
}

impl Operator {
    pub fn new(dims: HilbertSpec, csr: CsrMatrix) -> Result<Self> {
        if csr.nrows() != dims.dim() || csr.ncols() != dims.dim() {
            return Err(Error::DimensionMismatch {
                context: "operator shape",
                expected: dims.dim(),
                found: csr.nrows(),
            });
        }
        let dense = (dims.dim() < DENSE_FALLBACK_DIM).then(|| csr.to_dense());
        Ok(Self { dims, csr, dense })
    }

    pub fn identity(dims: HilbertSpec) -> Self {
        Self::new(dims, CsrMatrix::identity(dims.dim())).expect("identity has matching shape")
    }

    pub fn dims(&self) -> HilbertSpec {
        self.dims
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.csr
    }

    pub fn into_csr(self) -> CsrMatrix {
        self.csr
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.dims, self.csr.adjoint()).expect("adjoint keeps shape")
    }

    pub fn mul(&self, other: &Operator) -> Result<Self> {
        Self::new(self.dims, self.csr.mul(&other.csr)?)
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        Self::new(self.dims, self.csr.add(&other.csr)?)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.dims, self.csr.scale(s)).expect("scaling keeps shape")
    }

    pub fn commutator(&self, other: &Operator) -> Result<Self> {
        Self::new(self.dims, self.csr.commutator(&other.csr)?)
    }

    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        match &self.dense {
            Some(m) => {
                let v = nalgebra::DVector::from_column_slice(psi);
                (m * v).as_slice().to_vec()
            }
            None => self.csr.matvec(psi),
        }
    }

    pub fn hermiticity_error(&self) -> f64 {
        self.csr.hermiticity_error()
    }
}

/// Single-mode annihilation operator on `d` Fock levels: `⟨m|a|n⟩ = √n δ_{m,n−1}`.
pub fn annihilation(d: usize) -> Result<CsrMatrix> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    Ok(CsrMatrix::from_triplets(d, d, (1..d).map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0)))))
}

pub fn creation(d: usize) -> Result<CsrMatrix> {
    Ok(annihilation(d)?.adjoint())
}

pub fn number(d: usize) -> Result<CsrMatrix> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    Ok(CsrMatrix::from_triplets(d, d, (1..d).map(|n| (n, n, C64::new(n as f64, 0.0)))))
}

/// `|j⟩⟨k|` on the qudit.
pub fn qudit_transition(j: usize, k: usize) -> Result<CsrMatrix> {
    for level in [j, k] {
        if level >= QUDIT_DIM {
            return Err(Error::InvalidLevel(level));
        }
    }
    Ok(CsrMatrix::from_triplets(QUDIT_DIM, QUDIT_DIM, [(j, k, ONE)]))
}

/// Lifts a single-slot operator to the full space (identity elsewhere).
pub fn embed(local: &CsrMatrix, slot: Slot, spec: HilbertSpec) -> Result<Operator> {
    let want = spec.slot_dim(slot);
    if local.nrows() != want || local.ncols() != want {
        return Err(Error::DimensionMismatch { context: "embed", expected: want, found: local.nrows() });
    }
    let d = spec.cavity_dim();
    let id_q = CsrMatrix::identity(QUDIT_DIM);
    let id_c = CsrMatrix::identity(d);
    let full = match slot {
        Slot::Qudit => local.kron(&id_c).kron(&id_c),
        Slot::Cavity1 => id_q.kron(local).kron(&id_c),
        Slot::Cavity2 => id_q.kron(&id_c).kron(local),
    };
    Operator::new(spec, full)
}

/// Full-space product operator `q ⊗ c₁ ⊗ c₂`.
pub fn product(spec: HilbertSpec, q: &CsrMatrix, c1: &CsrMatrix, c2: &CsrMatrix) -> Result<Operator> {
    let d = spec.cavity_dim();
    if q.nrows() != QUDIT_DIM || c1.nrows() != d || c2.nrows() != d {
        return Err(Error::DimensionMismatch { context: "product", expected: d, found: c1.nrows() });
    }
    Operator::new(spec, q.kron(c1).kron(c2))
}

/// Truncated displacement operator `D(α) = exp[α(a† − a)]` for real `α`.
#[derive(Clone, Debug)]
pub struct Displacement {
    pub alpha: f64,
    pub matrix: DMatrix<C64>,
    /// Population of `D(α)|0⟩` in the top Fock level `d − 1`.
    pub top_level_population: f64,
}

impl Displacement {
    /// `ε_{m,n} = ⟨m|D(α)|n⟩`.
    pub fn coefficient(&self, m: usize, n: usize) -> C64 {
        self.matrix[(m, n)]
    }

    /// `D(α)|0⟩` as a single-mode vector.
    pub fn displaced_vacuum(&self) -> Vec<C64> {
        self.matrix.column(0).iter().copied().collect()
    }

    pub fn warning(&self) -> Option<String> {
        (self.top_level_population >= TRUNCATION_WARN_LIMIT).then(|| {
            format!(
                "displacement α = {:.4}: top Fock level holds {:.2e} of D(α)|0⟩ (d = {})",
                self.alpha,
                self.top_level_population,
                self.matrix.nrows()
            )
        })
    }
}

pub fn displacement(alpha: f64, d: usize) -> Result<Displacement> {
    let a = annihilation(d)?.to_dense();
    let generator = (a.adjoint() - &a) * C64::new(alpha, 0.0);
    let matrix = linalg::expm(&generator);
    let top_level_population = matrix[(d - 1, 0)].norm_sqr();
    if top_level_population > TRUNCATION_HARD_LIMIT {
        return Err(Error::Truncation { population: top_level_population, cavity_dim: d });
    }
    Ok(Displacement { alpha, matrix, top_level_population })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    dims: HilbertSpec,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(dims: HilbertSpec, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != dims.dim() {
            return Err(Error::DimensionMismatch { context: "state vector", expected: dims.dim(), found: amps.len() });
        }
        Ok(Self { dims, amps })
    }

    pub fn basis(dims: HilbertSpec, q: usize, n1: usize, n2: usize) -> Self {
        let mut amps = vec![ZERO; dims.dim()];
        amps[dims.index(q, n1, n2)] = ONE;
        Self { dims, amps }
    }

    /// `|q⟩ ⊗ |c₁⟩ ⊗ |c₂⟩` from single-mode cavity vectors.
    pub fn product(dims: HilbertSpec, q: usize, c1: &[C64], c2: &[C64]) -> Result<Self> {
        let d = dims.cavity_dim();
        if c1.len() != d || c2.len() != d {
            return Err(Error::DimensionMismatch { context: "product state", expected: d, found: c1.len() });
        }
        if q >= QUDIT_DIM {
            return Err(Error::InvalidLevel(q));
        }
        let mut amps = vec![ZERO; dims.dim()];
        for (n1, a) in c1.iter().enumerate() {
            for (n2, b) in c2.iter().enumerate() {
                amps[dims.index(q, n1, n2)] = a * b;
            }
        }
        Ok(Self { dims, amps })
    }

    pub fn dims(&self) -> HilbertSpec {
        self.dims
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.amps)
    }

    pub fn normalized(mut self) -> Self {
        linalg::normalize(&mut self.amps);
        self
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        linalg::inner(&self.amps, &other.amps)
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: C64, other: &StateVector, b: C64) -> Self {
        let amps = self.amps.iter().zip(&other.amps).map(|(x, y)| a * x + b * y).collect();
        Self { dims: self.dims, amps }
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { dims: self.dims, amps: self.amps.iter().map(|x| s * x).collect() }
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { dims: self.dims, data: dense::outer(&self.amps, &self.amps) }
    }
}

/// Row-major density matrix on the full space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dims: HilbertSpec,
    data: Vec<C64>,
}

impl DensityMatrix {
    pub fn new(dims: HilbertSpec, data: Vec<C64>) -> Result<Self> {
        let n = dims.dim();
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { context: "density matrix", expected: n * n, found: data.len() });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> HilbertSpec {
        self.dims
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn trace(&self) -> C64 {
        dense::trace(&self.data, self.dims.dim())
    }

    pub fn hermiticity_error(&self) -> f64 {
        dense::hermiticity_error(&self.data, self.dims.dim())
    }

    pub fn mix(&self, w: f64, other: &DensityMatrix, v: f64) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * w + b * v).collect();
        Self { dims: self.dims, data }
    }

    /// Reduced qudit state (5×5), tracing out both cavities.
    pub fn reduced_qudit(&self) -> DMatrix<C64> {
        let d2 = self.dims.cavity_dim().pow(2);
        let n = self.dims.dim();
        DMatrix::from_fn(QUDIT_DIM, QUDIT_DIM, |q, p| (0..d2).map(|k| self.data[(q * d2 + k) * n + p * d2 + k]).sum())
    }

    pub fn population(&self, index: usize) -> f64 {
        self.data[index * self.dims.dim() + index].re
    }
}

/// `⟨ψ|A|ψ⟩`.
pub fn expectation(op: &Operator, psi: &StateVector) -> Result<C64> {
    if op.dims() != psi.dims() {
        return Err(Error::DimensionMismatch {
            context: "expectation",
            expected: op.dims().dim(),
            found: psi.dims().dim(),
        });
    }
    Ok(linalg::inner(psi.amplitudes(), &op.apply(psi.amplitudes())))
}

/// `tr(Aρ)`.
pub fn expectation_density(op: &Operator, rho: &DensityMatrix) -> C64 {
    let n = rho.dims().dim();
    let mut acc = ZERO;
    for (i, j, v) in op.csr().iter() {
        acc += v * rho.data()[j * n + i];
    }
    acc
}

/// Slack below zero tolerated in `⟨Ψ|ρ|Ψ⟩` before it is treated as an error.
pub const OVERLAP_NOISE_FLOOR: f64 = 1e-10;

/// `F = sqrt(⟨Ψ|ρ|Ψ⟩)` for a normalized target `Ψ`.
pub fn fidelity_state(target: &StateVector, rho: &DensityMatrix) -> Result<f64> {
    if target.dims() != rho.dims() {
        return Err(Error::DimensionMismatch {
            context: "fidelity",
            expected: target.dims().dim(),
            found: rho.dims().dim(),
        });
    }
    overlap_to_fidelity(dense::sandwich(rho.data(), target.amplitudes()).re)
}

/// Pure-state fidelity `|⟨Ψ|ψ⟩| / ‖ψ‖`.
pub fn fidelity_pure(target: &StateVector, psi: &StateVector) -> f64 {
    let n = psi.norm();
    if n == 0.0 {
        return 0.0;
    }
    target.inner(psi).norm() / n
}

pub(crate) fn overlap_to_fidelity(overlap: f64) -> Result<f64> {
    if overlap < -OVERLAP_NOISE_FLOOR {
        return Err(Error::Integrity(format!("negative target overlap ⟨Ψ|ρ|Ψ⟩ = {overlap:.3e}")));
    }
    Ok(overlap.max(0.0).sqrt())
}
