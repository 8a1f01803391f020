//! Dissipators of the master equation and the dressed-rate formulas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{annihilation, embed, qudit_transition, HilbertSpec, Slot};
use crate::linalg::CsrMatrix;
use crate::units;

/// Decoherence rates in configuration units.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoherenceRates {
    /// Qudit dephasing Γ_d (kHz, linear rate).
    pub gamma_d: f64,
    /// Qudit relaxation Γ_γ (kHz, linear rate).
    pub gamma_r: f64,
    /// Cavity photon loss Γ_κ (kHz, linear rate).
    pub gamma_kappa: f64,
    /// Cavity intrinsic dephasing κ_φ/2π (Hz); only enters the dressed-rate report.
    pub kappa_phi: f64,
}

impl DecoherenceRates {
    pub fn is_zero(&self) -> bool {
        self.gamma_d == 0.0 && self.gamma_r == 0.0 && self.gamma_kappa == 0.0
    }
}

#[derive(Clone, Debug)]
pub struct CollapseOperator {
    pub label: String,
    pub op: CsrMatrix,
    /// Rate γ (µs⁻¹); the dissipator is `γ 𝓛[op]`.
    pub rate: f64,
}

#[derive(Clone, Debug, Default)]
pub struct CollapseSet {
    pub ops: Vec<CollapseOperator>,
}

impl CollapseSet {
    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn push(&mut self, label: impl Into<String>, op: CsrMatrix, rate: f64) -> Result<()> {
        if !(rate >= 0.0) {
            return Err(Error::Parameter(format!("collapse rate must be non-negative, got {rate}")));
        }
        if rate > 0.0 {
            self.ops.push(CollapseOperator { label: label.into(), op, rate });
        }
        Ok(())
    }

    /// `Σ γ L†L`.
    pub fn decay_sum(&self, dim: usize) -> CsrMatrix {
        let mut acc = CsrMatrix::zeros(dim, dim);
        for c in &self.ops {
            let ll = c.op.adjoint().mul(&c.op).expect("square operators");
            acc = acc.add(&ll.scale(num_complex::Complex64::new(c.rate, 0.0))).expect("same shape");
        }
        acc
    }
}

/// Qudit dephasing on |3⟩, |4⟩ at Γ_d; relaxation |i⟩⟨4| (i = 0..3) at Γ_γ/4,
/// |j⟩⟨3| (j = 0..2) at Γ_γ/3, |0⟩⟨2| and |0⟩⟨1| at Γ_γ; photon loss a₁, a₂ at Γ_κ.
/// Rates are in kHz and read as linear rates.
pub fn build_collapse_set(spec: HilbertSpec, gamma_d: f64, gamma_r: f64, gamma_kappa: f64) -> Result<CollapseSet> {
    for (name, v) in [("Γ_d", gamma_d), ("Γ_γ", gamma_r), ("Γ_κ", gamma_kappa)] {
        if !(v >= 0.0) {
            return Err(Error::Parameter(format!("{name} must be non-negative, got {v}")));
        }
    }
    let (gd, gr, gk) = (units::khz_rate(gamma_d), units::khz_rate(gamma_r), units::khz_rate(gamma_kappa));
    let mut set = CollapseSet::default();
    let qop = |j: usize, k: usize| -> Result<CsrMatrix> {
        Ok(embed(&qudit_transition(j, k)?, Slot::Qudit, spec)?.into_csr())
    };
    if gd > 0.0 {
        for f in [3, 4] {
            set.push(format!("dephasing |{f}><{f}|"), qop(f, f)?, gd)?;
        }
    }
    if gr > 0.0 {
        for i in 0..4 {
            set.push(format!("relaxation |{i}><4|"), qop(i, 4)?, gr / 4.0)?;
        }
        for j in 0..3 {
            set.push(format!("relaxation |{j}><3|"), qop(j, 3)?, gr / 3.0)?;
        }
        set.push("relaxation |0><2|", qop(0, 2)?, gr)?;
        set.push("relaxation |0><1|", qop(0, 1)?, gr)?;
    }
    if gk > 0.0 {
        let a = annihilation(spec.cavity_dim())?;
        set.push("photon loss a1", embed(&a, Slot::Cavity1, spec)?.into_csr(), gk)?;
        set.push("photon loss a2", embed(&a, Slot::Cavity2, spec)?.into_csr(), gk)?;
    }
    Ok(set)
}

/// Dressed relaxation and dephasing times `(T₁′, T₂′)`:
/// `Γ₁′ = (λ₁²/Δ₁² + λ₂²/Δ₂²)Γ_κ + Γ_γ`, `T₂′ = 1/(1/(2T₁′) + Γ_φ)`,
/// `Γ_φ = (λ₁²/Δ₁² + λ₂²/Δ₂²)κ_φ + Γ_d`.
///
/// Couplings and detunings only enter as ratios; the times come out in the
/// inverse unit of the rates.
#[allow(clippy::too_many_arguments)]
pub fn dressed_decoherence(
    lambda1: f64,
    lambda2: f64,
    detuning1: f64,
    detuning2: f64,
    gamma_kappa: f64,
    kappa_phi: f64,
    gamma_r: f64,
    gamma_d: f64,
) -> Result<(f64, f64)> {
    if detuning1 == 0.0 || detuning2 == 0.0 {
        return Err(Error::Singularity("Δ_k = 0 in the dressed rates".into()));
    }
    let mix = (lambda1 / detuning1).powi(2) + (lambda2 / detuning2).powi(2);
    let gamma1 = mix * gamma_kappa + gamma_r;
    let gamma_phi = mix * kappa_phi + gamma_d;
    let t1 = 1.0 / gamma1;
    let t2 = 1.0 / (1.0 / (2.0 * t1) + gamma_phi);
    Ok((t1, t2))
}
