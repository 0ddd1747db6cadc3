//! Analytic fields with exact norm data.
//!
//! Every constructor documents how its norms follow from the formula. Derivative
//! norms are sup norms over the declared support where there is one.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::fields::{BoxDomain, Circle, Discontinuities, FieldError, NormData, ScalarField};

/// `cos²(π(x-cx)/2a) cos²(π(y-cy)/2a)` restricted to `[cx-a, cx+a] x [cy-a, cy+a]`.
///
/// `sup = 1` at the centre. With `g(u) = cos²(πu/2a)`, `g'(u) = -(π/2a) sin(πu/a)`
/// so `‖∂ₓ‖∞ = ‖∂ᵧ‖∞ = π/2a`. `∫g = a` over `[-a, a]`, hence `‖·‖₁ = a²`. The
/// field vanishes with its first derivatives on the support boundary, so it is
/// Lipschitz on the whole plane.
pub fn cosine_squared_bump(cx: f64, cy: f64, a: f64) -> Result<ScalarField, FieldError> {
    positive("half_width", a)?;
    let support = BoxDomain::new(cx - a, cx + a, cy - a, cy + a)?;
    let k = PI / (2.0 * a);
    let d = PI / (2.0 * a);
    Ok(
        ScalarField::new(move |x, y| ((k * (x - cx)).cos() * (k * (y - cy)).cos()).powi(2))
            .with_support(support)
            .with_norms(NormData::full(a * a, 1.0, d, d)),
    )
}

/// The bump formula on the whole plane (periodic, no support, no L1 norm).
/// Sup and derivative norms as for [`cosine_squared_bump`].
pub fn cosine_squared_wave(cx: f64, cy: f64, a: f64) -> Result<ScalarField, FieldError> {
    positive("half_width", a)?;
    let k = PI / (2.0 * a);
    Ok(
        ScalarField::new(move |x, y| ((k * (x - cx)).cos() * (k * (y - cy)).cos()).powi(2)).with_norms(NormData {
            l1: None,
            sup: Some(1.0),
            dx_sup: Some(k),
            dy_sup: Some(k),
        }),
    )
}

/// `exp(-((x-cx)² + (y-cy)²)/s²)`.
///
/// `sup = 1`, `‖·‖₁ = πs²`. `|∂ₓ| = (2|u|/s²) e^{-u²/s²} e^{-v²/s²}` peaks at
/// `u = s/√2, v = 0` with value `√(2/e)/s`.
pub fn gaussian(cx: f64, cy: f64, s: f64) -> Result<ScalarField, FieldError> {
    positive("scale", s)?;
    let inv = 1.0 / (s * s);
    let d = (2.0 / E).sqrt() / s;
    Ok(ScalarField::new(move |x, y| {
        let (u, v) = (x - cx, y - cy);
        (-(u * u + v * v) * inv).exp()
    })
    .with_norms(NormData::full(PI * s * s, 1.0, d, d)))
}

/// `1 / (1 + (x-cx)² + (y-cy)²)²`, a heavy-tailed density.
///
/// `sup = 1`; `‖·‖₁ = π ∫₀^∞ 2r/(1+r²)² dr = π`. `|∂ₓ| = 4|u|/(1+u²+v²)³` peaks at
/// `v = 0, u² = 1/5` with value `4/√5 · (5/6)³ = 500/(216√5)`.
pub fn cauchy(cx: f64, cy: f64) -> ScalarField {
    let d = 500.0 / (216.0 * 5f64.sqrt());
    ScalarField::new(move |x, y| {
        let (u, v) = (x - cx, y - cy);
        let q = 1.0 + u * u + v * v;
        1.0 / (q * q)
    })
    .with_norms(NormData::full(PI, 1.0, d, d))
}

/// Indicator of the closed disk of radius `r`: `sup = 1`, `‖·‖₁ = πr²`, not Lipschitz.
pub fn disk_indicator(cx: f64, cy: f64, r: f64) -> Result<ScalarField, FieldError> {
    positive("radius", r)?;
    let support = BoxDomain::new(cx - r, cx + r, cy - r, cy + r)?;
    let r2 = r * r;
    Ok(ScalarField::new(move |x, y| {
        let (u, v) = (x - cx, y - cy);
        if u * u + v * v <= r2 {
            1.0
        } else {
            0.0
        }
    })
    .with_support(support)
    .with_discontinuities(Discontinuities {
        circles: vec![Circle { cx, cy, r }],
        ..Default::default()
    })
    .with_norms(NormData {
        l1: Some(PI * r2),
        sup: Some(1.0),
        dx_sup: None,
        dy_sup: None,
    }))
}

/// Indicator of a closed box: `sup = 1`, `‖·‖₁ = area`, not Lipschitz.
pub fn box_indicator(support: BoxDomain) -> ScalarField {
    ScalarField::new(|_, _| 1.0).with_support(support).with_norms(NormData {
        l1: Some(support.area()),
        sup: Some(1.0),
        dx_sup: None,
        dy_sup: None,
    })
}

/// Constant `c`, on the whole plane or restricted to `support`.
pub fn constant(c: f64, support: Option<BoxDomain>) -> Result<ScalarField, FieldError> {
    finite("value", c)?;
    Ok(match support {
        None => ScalarField::constant(c),
        Some(b) => {
            ScalarField::constant(c)
                .with_support(b)
                .with_norms(NormData::full(c.abs() * b.area(), c.abs(), 0.0, 0.0))
        }
    })
}

/// `a·x + b·y + c` on `support`.
///
/// The sup of an affine function over a box is attained at a corner. `‖∂ₓ‖ = |a|`,
/// `‖∂ᵧ‖ = |b|` on the support. Without a sign change over the box the L1 norm
/// is `|value at the centre| · area`; otherwise it is left for estimation.
pub fn linear(a: f64, b: f64, c: f64, support: BoxDomain) -> Result<ScalarField, FieldError> {
    for (name, v) in [("a", a), ("b", b), ("c", c)] {
        finite(name, v)?;
    }
    let f = move |x: f64, y: f64| a * x + b * y + c;
    let [x0, x1, y0, y1] = support.bounds();
    let corners = [f(x0, y0), f(x0, y1), f(x1, y0), f(x1, y1)];
    let sup = corners.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let one_signed = corners.iter().all(|&v| v >= 0.0) || corners.iter().all(|&v| v <= 0.0);
    let centre = f(0.5 * (x0 + x1), 0.5 * (y0 + y1));
    Ok(ScalarField::new(f).with_support(support).with_norms(NormData {
        l1: one_signed.then(|| centre.abs() * support.area()),
        sup: Some(sup),
        dx_sup: Some(a.abs()),
        dy_sup: Some(b.abs()),
    }))
}

fn positive(name: &str, v: f64) -> Result<(), FieldError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(FieldError::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

fn finite(name: &str, v: f64) -> Result<(), FieldError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(FieldError::InvalidParameter(format!("{name} must be finite, got {v}")))
    }
}

/// Builtin names accepted by [`from_params`].
pub const BUILTIN_NAMES: [&str; 8] = [
    "constant",
    "linear",
    "cosine_squared_bump",
    "cosine_squared_wave",
    "gaussian",
    "cauchy",
    "disk_indicator",
    "box_indicator",
];

/// Optional parameters of a builtin; each builtin accepts a fixed subset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// `[a, b, c]` of `a·x + b·y + c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<[f64; 3]>,
    /// `[x_lo, x_hi, y_lo, y_hi]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[f64; 4]>,
}

impl BuiltinParams {
    fn set_keys(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let flags = [
            ("center", self.center.is_some()),
            ("half_width", self.half_width.is_some()),
            ("scale", self.scale.is_some()),
            ("radius", self.radius.is_some()),
            ("value", self.value.is_some()),
            ("coeffs", self.coeffs.is_some()),
            ("support", self.support.is_some()),
        ];
        for (k, set) in flags {
            if set {
                out.push(k);
            }
        }
        out
    }

    fn support_box(&self) -> Result<Option<BoxDomain>, FieldError> {
        self.support.map(|[a, b, c, d]| BoxDomain::new(a, b, c, d)).transpose()
    }
}

/// Builds the named builtin. Parameters a builtin does not use are rejected.
pub fn from_params(name: &str, p: &BuiltinParams) -> Result<ScalarField, FieldError> {
    let allowed: &[&str] = match name {
        "constant" => &["value", "support"],
        "linear" => &["coeffs", "support"],
        "cosine_squared_bump" | "cosine_squared_wave" => &["center", "half_width"],
        "gaussian" => &["center", "scale"],
        "cauchy" => &["center"],
        "disk_indicator" => &["center", "radius", "support"],
        "box_indicator" => &["support"],
        _ => {
            return Err(FieldError::InvalidParameter(format!(
                "unknown builtin field '{name}', expected one of {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    if let Some(k) = p.set_keys().into_iter().find(|k| !allowed.contains(k)) {
        return Err(FieldError::InvalidParameter(format!(
            "builtin '{name}' does not take parameter '{k}' (allowed: {})",
            allowed.join(", ")
        )));
    }
    let [cx, cy] = p.center.unwrap_or([0.0, 0.0]);
    let required = |key: &str| FieldError::InvalidParameter(format!("builtin '{name}' requires '{key}'"));
    match name {
        "constant" => constant(p.value.ok_or_else(|| required("value"))?, p.support_box()?),
        "linear" => {
            let [a, b, c] = p.coeffs.ok_or_else(|| required("coeffs"))?;
            linear(a, b, c, p.support_box()?.ok_or_else(|| required("support"))?)
        }
        "cosine_squared_bump" => cosine_squared_bump(cx, cy, p.half_width.unwrap_or(1.0)),
        "cosine_squared_wave" => cosine_squared_wave(cx, cy, p.half_width.unwrap_or(1.0)),
        "gaussian" => gaussian(cx, cy, p.scale.unwrap_or(1.0)),
        "cauchy" => Ok(cauchy(cx, cy)),
        "disk_indicator" => {
            let disk = disk_indicator(cx, cy, p.radius.ok_or_else(|| required("radius"))?)?;
            match p.support_box()? {
                None => Ok(disk),
                Some(b) => disk.enlarge_support(b),
            }
        }
        "box_indicator" => Ok(box_indicator(p.support_box()?.ok_or_else(|| required("support"))?)),
        _ => unreachable!("name checked above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{estimate_derivative_sup_norms, estimate_sup_norm};
    use crate::quadrature::{integrate_box, QuadratureSpec};

    /// Sampled sup and derivative norms plus quadrature L1 over `domain`.
    fn check(f: &ScalarField, domain: BoxDomain, deriv: bool, l1: bool) {
        let n = f.norm_data();
        let sup = estimate_sup_norm(f, &domain, 401).unwrap();
        assert!((sup - n.sup.unwrap()).abs() < 1e-3, "sup {sup} vs {:?}", n.sup);
        if deriv {
            let (dx, dy) = estimate_derivative_sup_norms(f, &domain, 801, 1e-6).unwrap();
            assert!(
                (dx - n.dx_sup.unwrap()).abs() < 2e-3 * n.dx_sup.unwrap().max(1.0),
                "dx {dx} vs {:?}",
                n.dx_sup
            );
            assert!(
                (dy - n.dy_sup.unwrap()).abs() < 2e-3 * n.dy_sup.unwrap().max(1.0),
                "dy {dy} vs {:?}",
                n.dy_sup
            );
        }
        if l1 {
            let v = integrate_box(&f.abs(), &domain, &QuadratureSpec::default()).unwrap();
            assert!(
                (v - n.l1.unwrap()).abs() < 1e-6 * n.l1.unwrap().max(1.0),
                "l1 {v} vs {:?}",
                n.l1
            );
        }
    }

    #[test]
    fn bump_norms() {
        let f = cosine_squared_bump(0.0, 0.0, 1.0).unwrap();
        assert_eq!(f.norm_data(), &NormData::full(1.0, 1.0, PI / 2.0, PI / 2.0));
        check(&f, BoxDomain::centered_square(1.0).unwrap(), true, true);
        let g = cosine_squared_bump(0.5, -1.0, 0.3).unwrap();
        check(&g, BoxDomain::new(0.0, 1.0, -1.5, -0.5).unwrap(), true, true);
    }

    #[test]
    fn wave_norms() {
        let f = cosine_squared_wave(0.0, 0.0, 1.0).unwrap();
        assert_eq!(f.support_hint(), None);
        check(&f, BoxDomain::centered_square(3.0).unwrap(), true, false);
    }

    #[test]
    fn gaussian_norms() {
        for s in [1.0, 0.5] {
            let f = gaussian(0.2, 0.1, s).unwrap();
            check(&f, BoxDomain::centered_square(8.0 * s).unwrap(), true, true);
        }
    }

    #[test]
    fn cauchy_norms() {
        let f = cauchy(0.0, 0.0);
        check(&f, BoxDomain::centered_square(3.0).unwrap(), true, false);
        let core = integrate_box(
            &f,
            &BoxDomain::centered_square(400.0).unwrap(),
            &QuadratureSpec::default(),
        )
        .unwrap();
        // tail outside the square of half-width R is below pi/R^2
        assert!((core - PI).abs() < PI / (400.0 * 400.0));
    }

    #[test]
    fn indicator_norms() {
        let d = disk_indicator(0.0, 0.0, 0.7).unwrap();
        check(&d, BoxDomain::centered_square(1.0).unwrap(), false, true);
        assert_eq!(d.eval(0.7, 0.0), 1.0);
        assert_eq!(d.eval(0.71, 0.0), 0.0);
        let b = box_indicator(BoxDomain::new(-1.0, 0.5, 0.0, 2.0).unwrap());
        check(&b, BoxDomain::centered_square(3.0).unwrap(), false, true);
    }

    #[test]
    fn constant_and_linear_norms() {
        let c = constant(-2.0, Some(BoxDomain::new(0.0, 1.0, 0.0, 2.0).unwrap())).unwrap();
        check(&c, BoxDomain::centered_square(3.0).unwrap(), false, true);
        assert_eq!(c.norm_data().dx_sup, Some(0.0));

        let sup_box = BoxDomain::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let l = linear(1.0, 2.0, 0.5, sup_box).unwrap();
        assert_eq!(l.norm_data(), &NormData::full(2.0, 3.5, 1.0, 2.0));
        check(&l, sup_box, false, true);
        let mixed = linear(1.0, 0.0, -0.5, sup_box).unwrap();
        assert_eq!(mixed.norm_data().l1, None);
        // interior derivatives only: sample strictly inside the support
        let inner = BoxDomain::new(0.01, 0.99, 0.01, 0.99).unwrap();
        let (dx, dy) = estimate_derivative_sup_norms(&l, &inner, 33, 1e-6).unwrap();
        assert!((dx - 1.0).abs() < 1e-6 && (dy - 2.0).abs() < 1e-6);
    }

    #[test]
    fn params_dispatch() {
        let p = BuiltinParams {
            radius: Some(0.7),
            ..Default::default()
        };
        let f = from_params("disk_indicator", &p).unwrap();
        assert_eq!(f.norm_data().l1, Some(PI * (0.7 * 0.7)));
        let err = from_params("gaussian", &p).unwrap_err();
        assert!(err.to_string().contains("does not take parameter 'radius'"));
        assert!(from_params("disk_indicator", &BuiltinParams::default()).is_err());
        assert!(from_params("sombrero", &BuiltinParams::default())
            .unwrap_err()
            .to_string()
            .contains("unknown builtin"));
        let bump = from_params("cosine_squared_bump", &BuiltinParams::default()).unwrap();
        assert_eq!(bump.support_hint(), Some(BoxDomain::centered_square(1.0).unwrap()));
    }

    #[test]
    fn disk_support_can_grow_but_not_shrink() {
        let mut p = BuiltinParams {
            radius: Some(0.7),
            support: Some([-1.0, 1.0, -1.0, 1.0]),
            ..Default::default()
        };
        let f = from_params("disk_indicator", &p).unwrap();
        assert_eq!(f.support_hint(), Some(BoxDomain::centered_square(1.0).unwrap()));
        assert_eq!(f.eval(0.0, 0.0), 1.0);
        assert_eq!(f.eval(0.9, 0.0), 0.0);
        p.support = Some([-0.5, 1.0, -1.0, 1.0]);
        assert!(from_params("disk_indicator", &p).is_err());
    }
}
