//! Choice of the truncation half-width `L` for densities without compact
//! support: the mass of `ρ` outside `[-L, L]²` must not exceed `ε`.

use thiserror::Error;

use crate::fields::ScalarField;
use crate::quadrature::{self, QuadratureError, QuadratureSpec};

/// Largest half-width the search will try.
pub const MAX_HALF_WIDTH: f64 = (1u64 << 20) as f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TruncationError {
    #[error("eps must be positive, got {0}")]
    InvalidEps(f64),
    #[error("resolution must be positive, got {0}")]
    InvalidResolution(f64),
    #[error("total mass must be finite and nonnegative, got {0}")]
    InvalidMass(f64),
    #[error("tail mass is still {tail} > eps at L = {half_width}; the density is not concentrated enough or the total mass is wrong")]
    NotConcentrated { half_width: f64, tail: f64 },
    #[error("no total mass available: declare the density's L1 norm or a support box")]
    UnknownMass,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationResult {
    pub half_width: f64,
    pub achieved_tail: f64,
    pub eps: f64,
    /// `(L - resolution, L)`, or `(1, 1)` when the first lattice point works.
    pub bracket: (f64, f64),
}

/// Total mass of `rho`: its declared L1 norm, else the integral over its
/// declared support.
pub fn total_mass(rho: &ScalarField, spec: &QuadratureSpec) -> Result<f64, TruncationError> {
    if let Some(m) = rho.norm_data().l1 {
        return Ok(m);
    }
    let support = rho.support_hint().ok_or(TruncationError::UnknownMass)?;
    Ok(quadrature::integrate_box(rho, &support, spec)?)
}

/// Smallest `L` on the lattice `1 + k·resolution`, `k = 0, 1, ...`, whose tail
/// mass is at most `eps`. Geometric growth of `k` finds an upper lattice point,
/// then bisection on `k` closes the bracket to one step. The search relies on
/// the tail being nonincreasing, which holds for `rho >= 0`.
pub fn find_truncation_l(
    rho: &ScalarField,
    eps: f64,
    total_mass: f64,
    resolution: f64,
    spec: &QuadratureSpec,
) -> Result<TruncationResult, TruncationError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(TruncationError::InvalidEps(eps));
    }
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(TruncationError::InvalidResolution(resolution));
    }
    if !(total_mass >= 0.0) || !total_mass.is_finite() {
        return Err(TruncationError::InvalidMass(total_mass));
    }
    // snapped so that e.g. 1 + 168·0.01 reports as 2.68
    let at = |k: u64| ((1.0 + k as f64 * resolution) * 1e12).round() / 1e12;
    let tail = |k: u64| quadrature::tail_mass_from_total(rho, at(k), total_mass, spec);

    let t0 = tail(0)?;
    if t0 <= eps {
        return Ok(TruncationResult {
            half_width: 1.0,
            achieved_tail: t0,
            eps,
            bracket: (1.0, 1.0),
        });
    }
    let k_max = ((MAX_HALF_WIDTH - 1.0) / resolution).floor() as u64;
    let (mut lo, mut hi) = (0u64, 1u64);
    let mut t_hi = tail(hi)?;
    while t_hi > eps {
        if hi >= k_max {
            return Err(TruncationError::NotConcentrated {
                half_width: at(hi),
                tail: t_hi,
            });
        }
        lo = hi;
        hi = (hi * 2).min(k_max);
        t_hi = tail(hi)?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let t = tail(mid)?;
        if t <= eps {
            hi = mid;
            t_hi = t;
        } else {
            lo = mid;
        }
    }
    Ok(TruncationResult {
        half_width: at(hi),
        achieved_tail: t_hi,
        eps,
        bracket: (at(lo), at(hi)),
    })
}
