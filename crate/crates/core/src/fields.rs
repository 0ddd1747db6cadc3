//! Scalar fields on the plane and the norm data the convergence constants need.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::quadrature::{self, QuadratureError, QuadratureSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid box [{l1_lo}, {l1_hi}] x [{l2_lo}, {l2_hi}]: bounds must be finite with lo < hi")]
    InvalidBox {
        l1_lo: f64,
        l1_hi: f64,
        l2_lo: f64,
        l2_hi: f64,
    },
    #[error("field evaluated to {value} at ({x}, {y})")]
    NonFinite { x: f64, y: f64, value: f64 },
    #[error("norm `{name}` must be finite and non-negative, got {value}")]
    InvalidNorm { name: &'static str, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Axis-aligned rectangle `[l1_lo, l1_hi] x [l2_lo, l2_hi]` with non-empty interior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    l1_lo: f64,
    l1_hi: f64,
    l2_lo: f64,
    l2_hi: f64,
}

impl BoxDomain {
    pub fn new(l1_lo: f64, l1_hi: f64, l2_lo: f64, l2_hi: f64) -> Result<Self, FieldError> {
        let finite = [l1_lo, l1_hi, l2_lo, l2_hi].iter().all(|v| v.is_finite());
        if !finite || !(l1_lo < l1_hi) || !(l2_lo < l2_hi) {
            return Err(FieldError::InvalidBox {
                l1_lo,
                l1_hi,
                l2_lo,
                l2_hi,
            });
        }
        Ok(Self {
            l1_lo,
            l1_hi,
            l2_lo,
            l2_hi,
        })
    }

    /// The square `[-half_width, half_width]^2`.
    pub fn centered_square(half_width: f64) -> Result<Self, FieldError> {
        Self::new(-half_width, half_width, -half_width, half_width)
    }

    pub fn l1_lo(&self) -> f64 {
        self.l1_lo
    }
    pub fn l1_hi(&self) -> f64 {
        self.l1_hi
    }
    pub fn l2_lo(&self) -> f64 {
        self.l2_lo
    }
    pub fn l2_hi(&self) -> f64 {
        self.l2_hi
    }

    pub fn delta1(&self) -> f64 {
        self.l1_hi - self.l1_lo
    }

    pub fn delta2(&self) -> f64 {
        self.l2_hi - self.l2_lo
    }

    pub fn area(&self) -> f64 {
        self.delta1() * self.delta2()
    }

    pub fn bounds(&self) -> [f64; 4] {
        [self.l1_lo, self.l1_hi, self.l2_lo, self.l2_hi]
    }

    /// Closed-set membership.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.l1_lo && x <= self.l1_hi && y >= self.l2_lo && y <= self.l2_hi
    }

    pub fn contains_box(&self, other: &BoxDomain) -> bool {
        other.l1_lo >= self.l1_lo && other.l1_hi <= self.l1_hi && other.l2_lo >= self.l2_lo && other.l2_hi <= self.l2_hi
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BoxDomain) -> BoxDomain {
        BoxDomain {
            l1_lo: self.l1_lo.min(other.l1_lo),
            l1_hi: self.l1_hi.max(other.l1_hi),
            l2_lo: self.l2_lo.min(other.l2_lo),
            l2_hi: self.l2_hi.max(other.l2_hi),
        }
    }

    /// Intersection, or `None` when it has empty interior.
    pub fn intersect(&self, other: &BoxDomain) -> Option<BoxDomain> {
        BoxDomain::new(
            self.l1_lo.max(other.l1_lo),
            self.l1_hi.min(other.l1_hi),
            self.l2_lo.max(other.l2_lo),
            self.l2_hi.min(other.l2_hi),
        )
        .ok()
    }

    /// Lattice of `count` points per axis including both endpoints.
    pub(crate) fn lattice_x(&self, count: usize) -> Vec<f64> {
        lattice(self.l1_lo, self.l1_hi, count)
    }

    pub(crate) fn lattice_y(&self, count: usize) -> Vec<f64> {
        lattice(self.l2_lo, self.l2_hi, count)
    }
}

impl fmt::Display for BoxDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}] x [{}, {}]", self.l1_lo, self.l1_hi, self.l2_lo, self.l2_hi)
    }
}

/// Uniform points on `[lo, hi]`; endpoints are assigned rather than accumulated.
pub(crate) fn lattice(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    debug_assert!(count >= 2);
    let steps = (count - 1) as f64;
    (0..count)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == count - 1 {
                hi
            } else {
                lo + (hi - lo) * (k as f64) / steps
            }
        })
        .collect()
}

/// Sup-norm, L1 and derivative sup-norm data for one field. Absent entries are
/// estimated on demand by [`resolve_norms`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NormData {
    pub l1: Option<f64>,
    pub sup: Option<f64>,
    pub dx_sup: Option<f64>,
    pub dy_sup: Option<f64>,
}

impl NormData {
    pub fn full(l1: f64, sup: f64, dx_sup: f64, dy_sup: f64) -> Self {
        Self {
            l1: Some(l1),
            sup: Some(sup),
            dx_sup: Some(dx_sup),
            dy_sup: Some(dy_sup),
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        for (name, value) in self.entries() {
            if let Some(v) = value {
                if !v.is_finite() || v < 0.0 {
                    return Err(FieldError::InvalidNorm { name, value: v });
                }
            }
        }
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.entries().iter().all(|(_, v)| v.is_some())
    }

    /// Keeps every present entry of `self`, taking missing ones from `other`.
    pub fn or(&self, other: &NormData) -> NormData {
        NormData {
            l1: self.l1.or(other.l1),
            sup: self.sup.or(other.sup),
            dx_sup: self.dx_sup.or(other.dx_sup),
            dy_sup: self.dy_sup.or(other.dy_sup),
        }
    }

    fn entries(&self) -> [(&'static str, Option<f64>); 4] {
        [
            ("l1", self.l1),
            ("sup", self.sup),
            ("dx_sup", self.dx_sup),
            ("dy_sup", self.dy_sup),
        ]
    }
}

/// Circle across which a field may jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

/// Declared non-smooth loci of a field. Quadrature splits its panels along
/// these so that it only ever integrates smooth pieces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Discontinuities {
    pub x_breaks: Vec<f64>,
    pub y_breaks: Vec<f64>,
    pub circles: Vec<Circle>,
}

impl Discontinuities {
    pub fn is_empty(&self) -> bool {
        self.x_breaks.is_empty() && self.y_breaks.is_empty() && self.circles.is_empty()
    }

    pub fn merge(&self, other: &Discontinuities) -> Discontinuities {
        let mut out = self.clone();
        out.x_breaks.extend_from_slice(&other.x_breaks);
        out.y_breaks.extend_from_slice(&other.y_breaks);
        for c in &other.circles {
            if !out.circles.contains(c) {
                out.circles.push(*c);
            }
        }
        out.normalize();
        out
    }

    fn normalize(&mut self) {
        for v in [&mut self.x_breaks, &mut self.y_breaks] {
            v.retain(|b| b.is_finite());
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
    }
}

pub type Evaluator = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A function on the whole plane, optionally with a declared compact support
/// (outside of which it evaluates to exactly zero), analytic norm data and
/// declared discontinuities.
#[derive(Clone)]
pub struct ScalarField {
    evaluator: Evaluator,
    support_hint: Option<BoxDomain>,
    norm_data: NormData,
    jumps: Discontinuities,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("support_hint", &self.support_hint)
            .field("norm_data", &self.norm_data)
            .field("jumps", &self.jumps)
            .finish_non_exhaustive()
    }
}

impl ScalarField {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            evaluator: Arc::new(f),
            support_hint: None,
            norm_data: NormData::default(),
            jumps: Discontinuities::default(),
        }
    }

    pub fn zero() -> Self {
        Self::new(|_, _| 0.0).with_norms(NormData::full(0.0, 0.0, 0.0, 0.0))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _| c).with_norms(NormData {
            l1: if c == 0.0 { Some(0.0) } else { None },
            sup: Some(c.abs()),
            dx_sup: Some(0.0),
            dy_sup: Some(0.0),
        })
    }

    /// Restricts the field to `support`: it evaluates to zero off the closed box.
    /// The box edges become breaklines.
    /// Declares a larger support box; the field must already vanish outside
    /// its current support, which `support` has to contain.
    pub fn enlarge_support(mut self, support: BoxDomain) -> Result<Self, FieldError> {
        match self.support_hint {
            Some(old) if support.contains_box(&old) => {
                self.support_hint = Some(support);
                Ok(self)
            }
            Some(old) => Err(FieldError::InvalidParameter(format!(
                "support {support} does not contain {old}"
            ))),
            None => Err(FieldError::InvalidParameter(
                "only a compactly supported field can enlarge its support".into(),
            )),
        }
    }

    pub fn with_support(mut self, support: BoxDomain) -> Self {
        let inner = self.evaluator.clone();
        self.evaluator = Arc::new(move |x, y| if support.contains(x, y) { inner(x, y) } else { 0.0 });
        let support = match self.support_hint {
            Some(old) => old.intersect(&support).unwrap_or(support),
            None => support,
        };
        self.support_hint = Some(support);
        self.jumps = self.jumps.merge(&Discontinuities {
            x_breaks: vec![support.l1_lo, support.l1_hi],
            y_breaks: vec![support.l2_lo, support.l2_hi],
            circles: Vec::new(),
        });
        self
    }

    pub fn with_norms(mut self, norms: NormData) -> Self {
        self.norm_data = norms;
        self
    }

    pub fn with_discontinuities(mut self, jumps: Discontinuities) -> Self {
        self.jumps = self.jumps.merge(&jumps);
        self
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.evaluator)(x, y)
    }

    pub fn support_hint(&self) -> Option<BoxDomain> {
        self.support_hint
    }

    pub fn norm_data(&self) -> &NormData {
        &self.norm_data
    }

    pub fn discontinuities(&self) -> &Discontinuities {
        &self.jumps
    }

    pub fn evaluator(&self) -> Evaluator {
        self.evaluator.clone()
    }

    /// Pointwise product. Supports intersect and discontinuities are merged;
    /// norm data is not propagated.
    pub fn product(&self, other: &ScalarField) -> ScalarField {
        let (f, g) = (self.evaluator.clone(), other.evaluator.clone());
        let support_hint = match (self.support_hint, other.support_hint) {
            (Some(a), Some(b)) => Some(a.intersect(&b).unwrap_or(a)),
            (a, b) => a.or(b),
        };
        ScalarField {
            evaluator: Arc::new(move |x, y| f(x, y) * g(x, y)),
            support_hint,
            norm_data: NormData::default(),
            jumps: self.jumps.merge(&other.jumps),
        }
    }

    /// Pointwise absolute value, keeping support and discontinuities.
    pub fn abs(&self) -> ScalarField {
        let f = self.evaluator.clone();
        ScalarField {
            evaluator: Arc::new(move |x, y| f(x, y).abs()),
            support_hint: self.support_hint,
            norm_data: NormData::default(),
            jumps: self.jumps.clone(),
        }
    }

    /// A new field built from `f` that inherits this field's discontinuities.
    pub(crate) fn derived<F>(&self, f: F) -> ScalarField
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        ScalarField {
            evaluator: Arc::new(f),
            support_hint: None,
            norm_data: NormData::default(),
            jumps: self.jumps.clone(),
        }
    }
}

/// Values on a uniform `nx x ny` lattice over a box, evaluated by bilinear
/// interpolation inside the box and zero outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGrid {
    domain: BoxDomain,
    nx: usize,
    ny: usize,
    // values[i * ny + j] sits at (x_i, y_j)
    values: Vec<f64>,
}

/// Above this many lattice lines per axis only the box edges become breaklines.
const MAX_LATTICE_BREAKLINES: usize = 129;

impl SampledGrid {
    pub fn new(domain: BoxDomain, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self, FieldError> {
        if nx < 2 || ny < 2 {
            return Err(FieldError::InvalidParameter(format!(
                "sampled grid needs at least 2 samples per axis, got {nx} x {ny}"
            )));
        }
        if values.len() != nx * ny {
            return Err(FieldError::InvalidParameter(format!(
                "expected {} values for a {nx} x {ny} lattice, found {}",
                nx * ny,
                values.len()
            )));
        }
        let xs = domain.lattice_x(nx);
        let ys = domain.lattice_y(ny);
        for (k, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(FieldError::NonFinite {
                    x: xs[k / ny],
                    y: ys[k % ny],
                    value: *v,
                });
            }
        }
        Ok(Self { domain, nx, ny, values })
    }

    /// Samples `field` on the lattice.
    pub fn sample(field: &ScalarField, domain: BoxDomain, nx: usize, ny: usize) -> Result<Self, FieldError> {
        if nx < 2 || ny < 2 {
            return Err(FieldError::InvalidParameter(format!(
                "sampled grid needs at least 2 samples per axis, got {nx} x {ny}"
            )));
        }
        let xs = domain.lattice_x(nx);
        let ys = domain.lattice_y(ny);
        let mut values = Vec::with_capacity(nx * ny);
        for &x in &xs {
            for &y in &ys {
                values.push(field.eval(x, y));
            }
        }
        Self::new(domain, nx, ny, values)
    }

    pub fn domain(&self) -> BoxDomain {
        self.domain
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ny + j]
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        if !self.domain.contains(x, y) {
            return 0.0;
        }
        let (i, tx) = locate(x, self.domain.l1_lo, self.domain.l1_hi, self.nx);
        let (j, ty) = locate(y, self.domain.l2_lo, self.domain.l2_hi, self.ny);
        if tx == 0.0 && ty == 0.0 {
            return self.value(i, j);
        }
        let v00 = self.value(i, j);
        let v10 = self.value(i + 1, j);
        let v01 = self.value(i, j + 1);
        let v11 = self.value(i + 1, j + 1);
        (1.0 - tx) * ((1.0 - ty) * v00 + ty * v01) + tx * ((1.0 - ty) * v10 + ty * v11)
    }

    pub fn into_field(self) -> ScalarField {
        let domain = self.domain;
        let jumps = if self.nx <= MAX_LATTICE_BREAKLINES && self.ny <= MAX_LATTICE_BREAKLINES {
            Discontinuities {
                x_breaks: domain.lattice_x(self.nx),
                y_breaks: domain.lattice_y(self.ny),
                circles: Vec::new(),
            }
        } else {
            Discontinuities::default()
        };
        let grid = Arc::new(self);
        ScalarField::new(move |x, y| grid.eval(x, y))
            .with_support(domain)
            .with_discontinuities(jumps)
    }
}

/// Lower lattice index and fractional offset; offsets within a few ulps of a
/// node snap to it so that nodes reproduce stored values exactly.
fn locate(x: f64, lo: f64, hi: f64, count: usize) -> (usize, f64) {
    let cells = (count - 1) as f64;
    let u = (x - lo) / (hi - lo) * cells;
    let nearest = u.round();
    if (u - nearest).abs() <= 8.0 * f64::EPSILON * cells.max(1.0) {
        let k = nearest as usize;
        return if k >= count - 1 { (count - 2, 1.0) } else { (k, 0.0) };
    }
    let i = (u.floor() as usize).min(count - 2);
    (i, (u - i as f64).clamp(0.0, 1.0))
}

fn checked_eval(f: &ScalarField, x: f64, y: f64) -> Result<f64, FieldError> {
    let v = f.eval(x, y);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(FieldError::NonFinite { x, y, value: v })
    }
}

/// Max of `|f|` over the `samples_per_axis^2` tensor lattice of `domain`
/// (corners included). Lattices with `2^k + 1` points per axis are nested.
pub fn estimate_sup_norm(f: &ScalarField, domain: &BoxDomain, samples_per_axis: usize) -> Result<f64, FieldError> {
    if samples_per_axis < 2 {
        return Err(FieldError::InvalidParameter(format!(
            "samples_per_axis must be at least 2, got {samples_per_axis}"
        )));
    }
    let ys = domain.lattice_y(samples_per_axis);
    let mut best = 0.0f64;
    for x in domain.lattice_x(samples_per_axis) {
        for &y in &ys {
            best = best.max(checked_eval(f, x, y)?.abs());
        }
    }
    Ok(best)
}

/// Lattice max of the central differences `|f(x+h,y)-f(x-h,y)|/2h` and the
/// analogue in `y`.
pub fn estimate_derivative_sup_norms(
    f: &ScalarField,
    domain: &BoxDomain,
    samples_per_axis: usize,
    h: f64,
) -> Result<(f64, f64), FieldError> {
    if samples_per_axis < 2 {
        return Err(FieldError::InvalidParameter(format!(
            "samples_per_axis must be at least 2, got {samples_per_axis}"
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(FieldError::InvalidParameter(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let ys = domain.lattice_y(samples_per_axis);
    let (mut dx, mut dy) = (0.0f64, 0.0f64);
    for x in domain.lattice_x(samples_per_axis) {
        for &y in &ys {
            let gx = (checked_eval(f, x + h, y)? - checked_eval(f, x - h, y)?) / (2.0 * h);
            let gy = (checked_eval(f, x, y + h)? - checked_eval(f, x, y - h)?) / (2.0 * h);
            dx = dx.max(gx.abs());
            dy = dy.max(gy.abs());
        }
    }
    Ok((dx, dy))
}

/// Parameters for filling in missing norms by sampling.
#[derive(Debug, Clone, Copy)]
pub struct SamplingParams {
    pub samples_per_axis: usize,
    /// Central-difference step; `None` means `1e-5` times the larger box extent.
    pub fd_step: Option<f64>,
    pub quad: QuadratureSpec,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            samples_per_axis: 257,
            fd_step: None,
            quad: QuadratureSpec::default(),
        }
    }
}

/// Returns the field's norm data with every missing entry estimated over
/// `domain`. Present entries pass through untouched.
pub fn resolve_norms(f: &ScalarField, domain: &BoxDomain, params: &SamplingParams) -> Result<NormData, FieldError> {
    let given = *f.norm_data();
    given.validate()?;
    let mut out = given;
    if out.sup.is_none() {
        out.sup = Some(estimate_sup_norm(f, domain, params.samples_per_axis)?);
    }
    if out.dx_sup.is_none() || out.dy_sup.is_none() {
        let h = params.fd_step.unwrap_or(1e-5 * domain.delta1().max(domain.delta2()));
        let (dx, dy) = estimate_derivative_sup_norms(f, domain, params.samples_per_axis, h)?;
        out.dx_sup = out.dx_sup.or(Some(dx));
        out.dy_sup = out.dy_sup.or(Some(dy));
    }
    if out.l1.is_none() {
        out.l1 = Some(quadrature::integrate_box(&f.abs(), domain, &params.quad)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit() -> BoxDomain {
        BoxDomain::new(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn box_rejects_degenerate_and_reversed() {
        assert!(BoxDomain::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoxDomain::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoxDomain::new(0.0, f64::NAN, 0.0, 1.0).is_err());
        let b = BoxDomain::new(-1.0, 2.0, 0.5, 1.0).unwrap();
        assert_eq!(b.delta1(), 3.0);
        assert_eq!(b.delta2(), 0.5);
    }

    #[test]
    fn support_hint_zeroes_outside() {
        let f = ScalarField::new(|x, y| 1.0 + x * x + y * y).with_support(unit());
        for k in 0..64 {
            let t = 2.0 * PI * k as f64 / 64.0;
            let (x, y) = (0.5 + 1.2 * t.cos(), 0.5 + 1.2 * t.sin());
            assert_eq!(f.eval(x, y), 0.0);
        }
        assert_eq!(f.eval(0.5, 0.5), 1.5);
    }

    #[test]
    fn sup_norm_examples() {
        assert_eq!(estimate_sup_norm(&ScalarField::zero(), &unit(), 9).unwrap(), 0.0);
        let fx = ScalarField::new(|x, _| x);
        assert_eq!(estimate_sup_norm(&fx, &unit(), 64).unwrap(), 1.0);
        let s = ScalarField::new(|x, y| (PI * x).sin() * (PI * y).sin());
        assert_eq!(estimate_sup_norm(&s, &unit(), 65).unwrap(), 1.0);
        assert!(estimate_sup_norm(&s, &unit(), 1).is_err());
    }

    #[test]
    fn sup_norm_reports_non_finite_point() {
        let f = ScalarField::new(|x, _| 1.0 / (x - 0.5));
        match estimate_sup_norm(&f, &unit(), 3) {
            Err(FieldError::NonFinite { x, .. }) => assert_eq!(x, 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sup_norm_monotone_on_nested_lattices() {
        let f = ScalarField::new(|x, y| (7.3 * x).sin() * (3.1 * y + 0.4).cos());
        let mut prev = 0.0;
        for k in 1..8 {
            let s = estimate_sup_norm(&f, &unit(), (1 << k) + 1).unwrap();
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn derivative_examples() {
        let c = ScalarField::new(|_, _| 3.5);
        assert_eq!(
            estimate_derivative_sup_norms(&c, &unit(), 17, 1e-3).unwrap(),
            (0.0, 0.0)
        );
        let fx = ScalarField::new(|x, _| x);
        let (dx, dy) = estimate_derivative_sup_norms(&fx, &unit(), 17, 0.25).unwrap();
        assert_relative_eq!(dx, 1.0, epsilon = 1e-14);
        assert_eq!(dy, 0.0);
        let q = ScalarField::new(|x, y| x * x + 3.0 * y);
        let (dx, dy) = estimate_derivative_sup_norms(&q, &unit(), 33, 1e-4).unwrap();
        assert!((dx - 2.0).abs() < 1e-6, "{dx}");
        assert!((dy - 3.0).abs() < 1e-6, "{dy}");
        assert!(estimate_derivative_sup_norms(&q, &unit(), 33, 0.0).is_err());
    }

    #[test]
    fn resolve_passes_through_full_data() {
        let norms = NormData::full(1.0, 2.0, 3.0, 4.0);
        let f = ScalarField::new(|x, _| x).with_norms(norms);
        let out = resolve_norms(&f, &unit(), &SamplingParams::default()).unwrap();
        assert_eq!(out, norms);
        // idempotent
        let again = resolve_norms(&f.clone().with_norms(out), &unit(), &SamplingParams::default()).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn resolve_zero_field_is_all_zero() {
        let f = ScalarField::new(|_, _| 0.0);
        let out = resolve_norms(&f, &unit(), &SamplingParams::default()).unwrap();
        assert_eq!(out, NormData::full(0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn resolve_gaussian_l1() {
        let f = ScalarField::new(|x, y| (-x * x - y * y).exp());
        let b = BoxDomain::centered_square(6.0).unwrap();
        let out = resolve_norms(&f, &b, &SamplingParams::default()).unwrap();
        assert!((out.l1.unwrap() - PI).abs() < 1e-6);
        assert_relative_eq!(out.sup.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn resolve_rejects_negative_norms() {
        let f = ScalarField::new(|x, _| x).with_norms(NormData {
            sup: Some(-1.0),
            ..NormData::default()
        });
        assert!(matches!(
            resolve_norms(&f, &unit(), &SamplingParams::default()),
            Err(FieldError::InvalidNorm { name: "sup", .. })
        ));
    }

    #[test]
    fn compact_support_sup_matches_on_larger_box() {
        let inner = BoxDomain::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let outer = BoxDomain::new(-2.0, 2.0, -2.0, 2.0).unwrap();
        let f = ScalarField::new(|x, y| (1.0 - x * x) * (1.0 - y * y)).with_support(inner);
        let a = estimate_sup_norm(&f, &inner, 65).unwrap();
        let b = estimate_sup_norm(&f, &outer, 129).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn sampled_grid_bilinear() {
        let g = SampledGrid::new(unit(), 2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        // values[i*ny+j] at (x_i, y_j): f = 2x + y
        assert_eq!(g.eval(0.5, 0.5), 1.5);
        assert_eq!(g.eval(1.0, 1.0), 3.0);
        assert_eq!(g.eval(1.5, 0.5), 0.0);
        assert!(SampledGrid::new(unit(), 2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn sampled_grid_nodes_are_exact() {
        let b = BoxDomain::new(-0.3, 0.7, 0.1, 1.3).unwrap();
        let src = ScalarField::new(|x, y| (x * 13.0).sin() + y.exp());
        let g = SampledGrid::sample(&src, b, 11, 7).unwrap();
        let xs = b.lattice_x(11);
        let ys = b.lattice_y(7);
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                assert_eq!(g.eval(x, y).to_bits(), g.value(i, j).to_bits());
            }
        }
    }
}
