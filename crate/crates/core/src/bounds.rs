//! Closed-form constants and right-hand sides of the four weak-error estimates.
//!
//! Case 1 (compact support inside `C_L`):
//!
//! * `C12 = max(Δ₁,Δ₂)⁴ (‖∂ₓρ‖∞+‖∂ᵧρ‖∞)(‖∂ₓφ‖∞+‖∂ᵧφ‖∞)`
//! * `K12 = max(Δ₁,Δ₂) (‖∂ₓω‖∞+‖∂ᵧω‖∞) ‖φ‖∞ ‖ρ‖₁`
//! * `D12 = max(Δ₁,Δ₂) (‖∂ₓφ‖∞+‖∂ᵧφ‖∞)(‖ρ‖₁ + ‖ρ‖∞ Δ₁Δ₂)`
//!
//! Case 2 (mass at most `ε` outside `[-L,L]²`):
//!
//! * `Cε = 16 L⁴ (‖∂ₓρ‖∞+‖∂ᵧρ‖∞)(‖∂ₓφ‖∞+‖∂ᵧφ‖∞)`
//! * `Kε = 2L (‖∂ₓω‖∞+‖∂ᵧω‖∞) ‖φ‖∞ ‖ρ‖₁`
//! * `Dε = 2L (‖∂ₓφ‖∞+‖∂ᵧφ‖∞)(‖ρ‖₁ + 4L²‖ρ‖∞)`
//!
//! | theorem | density | quantity |
//! |---|---|---|
//! | th1 | `C12/N²` | `K12/N + C12‖ω‖∞/N²` |
//! | th2 | `ε‖φ‖∞ + Cε/N²` | `ε‖φ‖∞‖ω‖∞ + Cε‖ω‖∞/N² + Kε/N` |
//! | th3 | `D12/N` | `(K12 + D12‖ω‖∞)/N` |
//! | th4 | `ε‖φ‖∞ + Dε/N` | `ε‖φ‖∞‖ω‖∞ + (Kε + Dε‖ω‖∞)/N` |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::NormData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremId {
    Th1,
    Th2,
    Th3,
    Th4,
}

impl TheoremId {
    pub const ALL: [TheoremId; 4] = [TheoremId::Th1, TheoremId::Th2, TheoremId::Th3, TheoremId::Th4];

    /// Theorems for densities truncated at mass `ε`.
    pub fn is_truncated(self) -> bool {
        matches!(self, TheoremId::Th2 | TheoremId::Th4)
    }

    /// Theorems that assume a Lipschitz density.
    pub fn needs_density_derivatives(self) -> bool {
        matches!(self, TheoremId::Th1 | TheoremId::Th2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::Th1 => "th1",
            TheoremId::Th2 => "th2",
            TheoremId::Th3 => "th3",
            TheoremId::Th4 => "th4",
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = BoundError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TheoremId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| BoundError::UnknownName(format!("unknown theorem '{s}', expected th1..th4")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Density,
    Quantity,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Density => "density",
            Variant::Quantity => "quantity",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = BoundError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "density" => Ok(Variant::Density),
            "quantity" => Ok(Variant::Quantity),
            _ => Err(BoundError::UnknownName(format!(
                "unknown variant '{s}', expected density or quantity"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldRole {
    Rho,
    Omega,
    Phi,
}

impl FieldRole {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldRole::Rho => "rho",
            FieldRole::Omega => "omega",
            FieldRole::Phi => "phi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NormKind {
    L1,
    Sup,
    DxSup,
    DySup,
}

impl NormKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::L1 => "l1",
            NormKind::Sup => "sup",
            NormKind::DxSup => "dx_sup",
            NormKind::DySup => "dy_sup",
        }
    }

    pub fn get(self, norms: &NormData) -> Option<f64> {
        match self {
            NormKind::L1 => norms.l1,
            NormKind::Sup => norms.sup,
            NormKind::DxSup => norms.dx_sup,
            NormKind::DySup => norms.dy_sup,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("missing norm {}.{}", .role.as_str(), .norm.as_str())]
    MissingNorm { role: FieldRole, norm: NormKind },
    #[error("{0} is required for this theorem")]
    MissingParameter(&'static str),
    #[error("{0}")]
    Inconsistent(String),
    #[error("{0}")]
    UnknownName(String),
}

/// Geometry, truncation and norm data entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundInputs {
    pub delta1: f64,
    pub delta2: f64,
    /// Truncation half-width `L` (truncated theorems only).
    pub half_width: Option<f64>,
    /// Truncated mass `ε` (truncated theorems only).
    pub eps: Option<f64>,
    pub rho_norms: NormData,
    pub omega_norms: NormData,
    pub phi_norms: NormData,
    pub n: usize,
}

impl BoundInputs {
    fn norm(&self, role: FieldRole, norm: NormKind) -> Result<f64, BoundError> {
        let data = match role {
            FieldRole::Rho => &self.rho_norms,
            FieldRole::Omega => &self.omega_norms,
            FieldRole::Phi => &self.phi_norms,
        };
        let v = norm.get(data).ok_or(BoundError::MissingNorm { role, norm })?;
        if !v.is_finite() || v < 0.0 {
            return Err(BoundError::Inconsistent(format!(
                "norm {}.{} must be finite and nonnegative, got {v}",
                role.as_str(),
                norm.as_str()
            )));
        }
        Ok(v)
    }

    fn grad(&self, role: FieldRole) -> Result<f64, BoundError> {
        Ok(self.norm(role, NormKind::DxSup)? + self.norm(role, NormKind::DySup)?)
    }

    fn max_delta(&self) -> Result<f64, BoundError> {
        for (name, d) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if !(d > 0.0) || !d.is_finite() {
                return Err(BoundError::Inconsistent(format!("{name} must be positive, got {d}")));
            }
        }
        Ok(self.delta1.max(self.delta2))
    }

    fn half_width(&self) -> Result<f64, BoundError> {
        let l = self.half_width.ok_or(BoundError::MissingParameter("L"))?;
        if !(l > 0.0) || !l.is_finite() {
            return Err(BoundError::Inconsistent(format!("L must be positive, got {l}")));
        }
        Ok(l)
    }

    fn eps(&self) -> Result<f64, BoundError> {
        let e = self.eps.ok_or(BoundError::MissingParameter("eps"))?;
        if !(e >= 0.0) || !e.is_finite() {
            return Err(BoundError::Inconsistent(format!("eps must be nonnegative, got {e}")));
        }
        Ok(e)
    }
}

pub fn constant_c12(inputs: &BoundInputs) -> Result<f64, BoundError> {
    let m = inputs.max_delta()?;
    Ok(m.powi(4) * inputs.grad(FieldRole::Rho)? * inputs.grad(FieldRole::Phi)?)
}

pub fn constant_k12(inputs: &BoundInputs) -> Result<f64, BoundError> {
    let m = inputs.max_delta()?;
    Ok(m * inputs.grad(FieldRole::Omega)?
        * inputs.norm(FieldRole::Phi, NormKind::Sup)?
        * inputs.norm(FieldRole::Rho, NormKind::L1)?)
}

pub fn constant_d12(inputs: &BoundInputs) -> Result<f64, BoundError> {
    let m = inputs.max_delta()?;
    let l1 = inputs.norm(FieldRole::Rho, NormKind::L1)?;
    let sup = inputs.norm(FieldRole::Rho, NormKind::Sup)?;
    Ok(m * inputs.grad(FieldRole::Phi)? * (l1 + sup * inputs.delta1 * inputs.delta2))
}

pub fn constant_c_eps(inputs: &BoundInputs) -> Result<f64, BoundError> {
    let l = inputs.half_width()?;
    Ok(16.0 * l.powi(4) * inputs.grad(FieldRole::Rho)? * inputs.grad(FieldRole::Phi)?)
}

pub fn constant_k_eps(inputs: &BoundInputs) -> Result<f64, BoundError> {
    let l = inputs.half_width()?;
    Ok(2.0
        * l
        * inputs.grad(FieldRole::Omega)?
        * inputs.norm(FieldRole::Phi, NormKind::Sup)?
        * inputs.norm(FieldRole::Rho, NormKind::L1)?)
}

pub fn constant_d_eps(inputs: &BoundInputs) -> Result<f64, BoundError> {
    let l = inputs.half_width()?;
    let l1 = inputs.norm(FieldRole::Rho, NormKind::L1)?;
    let sup = inputs.norm(FieldRole::Rho, NormKind::Sup)?;
    Ok(2.0 * l * inputs.grad(FieldRole::Phi)? * (l1 + 4.0 * l * l * sup))
}

/// Norms that `theorem_bound(theorem, variant, ..)` reads.
pub fn required_norms(theorem: TheoremId, variant: Variant) -> Vec<(FieldRole, NormKind)> {
    use FieldRole::*;
    use NormKind::*;
    let mut out = vec![(Phi, DxSup), (Phi, DySup)];
    if theorem.needs_density_derivatives() {
        out.extend([(Rho, DxSup), (Rho, DySup)]);
    } else {
        out.extend([(Rho, L1), (Rho, Sup)]);
    }
    if theorem.is_truncated() {
        out.push((Phi, Sup));
    }
    if variant == Variant::Quantity {
        out.extend([(Omega, Sup), (Omega, DxSup), (Omega, DySup), (Phi, Sup), (Rho, L1)]);
    }
    out.sort();
    out.dedup();
    out
}

/// Every constant of one estimate together with its right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub theorem: TheoremId,
    pub variant: Variant,
    pub constants: BTreeMap<String, f64>,
    pub bound: f64,
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "theorem={}", self.theorem)?;
        writeln!(f, "variant={}", self.variant)?;
        for (k, v) in &self.constants {
            writeln!(f, "{k}={v:?}")?;
        }
        writeln!(f, "bound={:?}", self.bound)
    }
}

pub fn theorem_bound(theorem: TheoremId, variant: Variant, inputs: &BoundInputs) -> Result<BoundReport, BoundError> {
    if inputs.n == 0 {
        return Err(BoundError::Inconsistent("N must be at least 1".into()));
    }
    if !theorem.is_truncated() && inputs.eps.is_some() {
        return Err(BoundError::Inconsistent(format!(
            "{theorem} is a compact-support estimate and takes no eps"
        )));
    }
    let n = inputs.n as f64;
    let mut constants = BTreeMap::new();
    let mut put = |name: &str, v: f64| {
        constants.insert(name.to_string(), v);
        v
    };
    let omega_sup = match variant {
        Variant::Quantity => Some(inputs.norm(FieldRole::Omega, NormKind::Sup)?),
        Variant::Density => None,
    };
    let bound = match (theorem, omega_sup) {
        (TheoremId::Th1, None) => put("C12", constant_c12(inputs)?) / (n * n),
        (TheoremId::Th1, Some(w)) => {
            let k = put("K12", constant_k12(inputs)?);
            let c = put("C12", constant_c12(inputs)?);
            k / n + c * w / (n * n)
        }
        (TheoremId::Th2, w) => {
            let eps = put("eps", inputs.eps()?);
            let phi = inputs.norm(FieldRole::Phi, NormKind::Sup)?;
            put("L", inputs.half_width()?);
            let c = put("C_eps", constant_c_eps(inputs)?);
            match w {
                None => eps * phi + c / (n * n),
                Some(w) => {
                    let k = put("K_eps", constant_k_eps(inputs)?);
                    eps * phi * w + c * w / (n * n) + k / n
                }
            }
        }
        (TheoremId::Th3, None) => put("D12", constant_d12(inputs)?) / n,
        (TheoremId::Th3, Some(w)) => {
            let k = put("K12", constant_k12(inputs)?);
            let d = put("D12", constant_d12(inputs)?);
            (k + d * w) / n
        }
        (TheoremId::Th4, w) => {
            let eps = put("eps", inputs.eps()?);
            let phi = inputs.norm(FieldRole::Phi, NormKind::Sup)?;
            put("L", inputs.half_width()?);
            let d = put("D_eps", constant_d_eps(inputs)?);
            match w {
                None => eps * phi + d / n,
                Some(w) => {
                    let k = put("K_eps", constant_k_eps(inputs)?);
                    eps * phi * w + (k + d * w) / n
                }
            }
        }
    };
    if let Some(w) = omega_sup {
        constants.insert("omega_sup".to_string(), w);
    }
    Ok(BoundReport {
        theorem,
        variant,
        constants,
        bound,
    })
}

/// `(‖∂ₓφ‖∞+‖∂ᵧφ‖∞) Δ₁Δ₂ max(Δ₁,Δ₂) / N`, bounding `Σᵢⱼ ∬_cell |φ − φ(x̄ᵢ,ȳⱼ)|`.
pub fn variation_bound(delta1: f64, delta2: f64, n: usize, phi_grad: f64) -> f64 {
    phi_grad * delta1 * delta2 * delta1.max(delta2) / n as f64
}

/// `max(Δ₁,Δ₂)/N (‖∂ₓρ‖∞+‖∂ᵧρ‖∞)`, bounding `|aᵢⱼ − ρ(x,y)|` on cell `(i,j)`.
pub fn cell_deviation_bound(delta1: f64, delta2: f64, n: usize, rho_grad: f64) -> f64 {
    delta1.max(delta2) / n as f64 * rho_grad
}
