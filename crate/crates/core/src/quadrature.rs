//! Composite tensor Gauss-Legendre quadrature on rectangles.
//!
//! Panels are refined dyadically until two successive estimates agree. Each
//! panel is additionally split along the field's declared breaklines, and
//! panels crossed by a declared circle are integrated with the circle arc as an
//! explicit integration limit, so piecewise-smooth integrands (indicators,
//! compactly supported bumps, bilinear lattices) keep spectral accuracy.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use rayon::prelude::*;
use thiserror::Error;

use crate::fields::{BoxDomain, Circle, Discontinuities, ScalarField};

pub const MAX_POINTS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
    #[error("invalid integration domain: {0}")]
    InvalidDomain(String),
    #[error(
        "quadrature did not reach relative tolerance {target:e} within {panels} panels per axis \
         (best estimate {best}, achieved {achieved:e})"
    )]
    NotConverged {
        best: f64,
        achieved: f64,
        target: f64,
        panels: usize,
    },
    #[error("tail mass {tail} is below the consistency threshold {threshold}")]
    InconsistentTail { tail: f64, threshold: f64 },
}

/// Composite rule parameters: `points_per_axis_per_panel`-point Gauss-Legendre on
/// each of `panels_per_axis^2` panels, doubled until successive estimates differ
/// by at most `target_rel_tol` (relative, with an absolute fallback of
/// `target_rel_tol * area * sup|f|`) or `max_panels_per_axis` is exceeded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub points_per_axis_per_panel: usize,
    pub panels_per_axis: usize,
    pub target_rel_tol: f64,
    pub max_panels_per_axis: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            points_per_axis_per_panel: 10,
            panels_per_axis: 1,
            target_rel_tol: 1e-12,
            max_panels_per_axis: 1024,
        }
    }
}

impl QuadratureSpec {
    pub fn new(points: usize, panels: usize, target_rel_tol: f64) -> Result<Self, QuadratureError> {
        let spec = Self {
            points_per_axis_per_panel: points,
            panels_per_axis: panels,
            target_rel_tol,
            ..Self::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_max_panels(mut self, max_panels_per_axis: usize) -> Self {
        self.max_panels_per_axis = max_panels_per_axis;
        self
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        if !(1..=MAX_POINTS).contains(&self.points_per_axis_per_panel) {
            return Err(QuadratureError::InvalidSpec(format!(
                "points per axis must be in 1..={MAX_POINTS}, got {}",
                self.points_per_axis_per_panel
            )));
        }
        if self.panels_per_axis == 0 {
            return Err(QuadratureError::InvalidSpec("panels per axis must be positive".into()));
        }
        if self.max_panels_per_axis < self.panels_per_axis {
            return Err(QuadratureError::InvalidSpec(format!(
                "panel cap {} is below the initial panel count {}",
                self.max_panels_per_axis, self.panels_per_axis
            )));
        }
        if !(self.target_rel_tol > 0.0) || !self.target_rel_tol.is_finite() {
            return Err(QuadratureError::InvalidSpec(format!(
                "target relative tolerance must be positive, got {}",
                self.target_rel_tol
            )));
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    fn compute(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Cached rule with `n` points, `1 <= n <= 16`.
    pub fn get(n: usize) -> &'static GaussLegendre {
        static RULES: OnceLock<Vec<GaussLegendre>> = OnceLock::new();
        let rules = RULES.get_or_init(|| (1..=MAX_POINTS).map(Self::compute).collect());
        &rules[n - 1]
    }

    /// `int_a^b g` with this rule.
    pub fn integrate_1d(&self, a: f64, b: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut s = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            s += w * g(mid + half * t);
        }
        s * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let prev = if n == 0 { 0.0 } else { p0 };
    let d = n as f64 * (x * p - prev) / (x * x - 1.0);
    (p, d)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[derive(Debug, Default, Clone, Copy)]
struct Accum {
    sum: CompensatedSum,
    sup: f64,
}

#[derive(Clone, Copy)]
struct Rect {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Rect {
    fn swapped(self) -> Rect {
        Rect {
            x0: self.y0,
            x1: self.y1,
            y0: self.x0,
            y1: self.x1,
        }
    }
}

const MAX_SPLIT_DEPTH: u32 = 6;

struct PanelIntegrator<'a> {
    f: &'a (dyn Fn(f64, f64) -> f64 + Send + Sync),
    jumps: &'a Discontinuities,
    rule: &'static GaussLegendre,
}

impl PanelIntegrator<'_> {
    #[inline]
    fn eval(&self, x: f64, y: f64, swap: bool, acc: &mut Accum) -> f64 {
        let v = if swap { (self.f)(y, x) } else { (self.f)(x, y) };
        acc.sup = acc.sup.max(v.abs());
        v
    }

    fn tensor(&self, r: Rect, swap: bool, acc: &mut Accum) {
        let (mx, hx) = (0.5 * (r.x0 + r.x1), 0.5 * (r.x1 - r.x0));
        let (my, hy) = (0.5 * (r.y0 + r.y1), 0.5 * (r.y1 - r.y0));
        let mut s = 0.0;
        for (tx, wx) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let x = mx + hx * tx;
            let mut inner = 0.0;
            for (ty, wy) in self.rule.nodes.iter().zip(&self.rule.weights) {
                inner += wy * self.eval(x, my + hy * ty, swap, acc);
            }
            s += wx * inner;
        }
        acc.sum.add(s * hx * hy);
    }

    fn panel(&self, r: Rect, depth: u32, acc: &mut Accum) {
        let mut xs = vec![r.x0, r.x1];
        let mut ys = vec![r.y0, r.y1];
        push_interior(&mut xs, &self.jumps.x_breaks, r.x0, r.x1);
        push_interior(&mut ys, &self.jumps.y_breaks, r.y0, r.y1);
        for c in self.jumps.circles.iter().filter(|c| circle_cuts(c, r)) {
            let d = c.r * FRAC_1_SQRT_2;
            push_interior(&mut xs, &[c.cx - d, c.cx, c.cx + d], r.x0, r.x1);
            push_interior(&mut ys, &[c.cy - d, c.cy, c.cy + d], r.y0, r.y1);
        }
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        for xw in xs.windows(2) {
            for yw in ys.windows(2) {
                let sub = Rect {
                    x0: xw[0],
                    x1: xw[1],
                    y0: yw[0],
                    y1: yw[1],
                };
                let mut cutting = self.jumps.circles.iter().filter(|c| circle_cuts(c, sub));
                match (cutting.next(), cutting.next()) {
                    (None, _) => self.tensor(sub, false, acc),
                    (Some(c), None) => self.circle_piece(sub, *c, acc),
                    (Some(_), Some(_)) if depth < MAX_SPLIT_DEPTH => {
                        let (mx, my) = (0.5 * (sub.x0 + sub.x1), 0.5 * (sub.y0 + sub.y1));
                        for (a, b) in [(sub.x0, mx), (mx, sub.x1)] {
                            for (c0, c1) in [(sub.y0, my), (my, sub.y1)] {
                                let q = Rect {
                                    x0: a,
                                    x1: b,
                                    y0: c0,
                                    y1: c1,
                                };
                                self.panel(q, depth + 1, acc);
                            }
                        }
                    }
                    _ => self.tensor(sub, false, acc),
                }
            }
        }
    }

    /// `sub` is crossed by one arc of `c` and lies within one octant band of the
    /// circle, so the arc is a graph with slope at most one over one axis.
    fn circle_piece(&self, sub: Rect, c: Circle, acc: &mut Accum) {
        let band = c.r * FRAC_1_SQRT_2 * (1.0 + 1e-9);
        let umax = (sub.x0 - c.cx).abs().max((sub.x1 - c.cx).abs());
        if umax <= band {
            self.graph_piece(sub, c, false, acc);
        } else {
            let swapped = Circle {
                cx: c.cy,
                cy: c.cx,
                r: c.r,
            };
            self.graph_piece(sub.swapped(), swapped, true, acc);
        }
    }

    /// Integrates over `r` with the arc `y = cy +- sqrt(r^2 - (x-cx)^2)` as an
    /// interior limit of the inner integral. With `swap` the roles of the
    /// coordinates are exchanged when evaluating the field.
    fn graph_piece(&self, r: Rect, c: Circle, swap: bool, acc: &mut Accum) {
        let sign = if 0.5 * (r.y0 + r.y1) >= c.cy { 1.0 } else { -1.0 };
        let branch = |x: f64| {
            let d = x - c.cx;
            c.cy + sign * (c.r * c.r - d * d).max(0.0).sqrt()
        };
        let mut xs = vec![r.x0, r.x1];
        for y in [r.y0, r.y1] {
            let d = y - c.cy;
            if sign * d >= 0.0 && d * d <= c.r * c.r {
                let s = (c.r * c.r - d * d).sqrt();
                push_interior(&mut xs, &[c.cx - s, c.cx + s], r.x0, r.x1);
            }
        }
        xs.sort_by(f64::total_cmp);
        let rule = self.rule;
        for w in xs.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (mx, hx) = (0.5 * (a + b), 0.5 * (b - a));
            let mut s = 0.0;
            for (tx, wx) in rule.nodes.iter().zip(&rule.weights) {
                let x = mx + hx * tx;
                let yc = branch(x).clamp(r.y0, r.y1);
                let mut inner = 0.0;
                if yc > r.y0 {
                    inner += rule.integrate_1d(r.y0, yc, |y| self.eval(x, y, swap, acc));
                }
                if yc < r.y1 {
                    inner += rule.integrate_1d(yc, r.y1, |y| self.eval(x, y, swap, acc));
                }
                s += wx * inner;
            }
            acc.sum.add(s * hx);
        }
    }
}

fn push_interior(out: &mut Vec<f64>, candidates: &[f64], lo: f64, hi: f64) {
    let margin = 1e-13 * (hi - lo);
    for &b in candidates {
        if b > lo + margin && b < hi - margin && !out.contains(&b) {
            out.push(b);
        }
    }
}

fn circle_cuts(c: &Circle, r: Rect) -> bool {
    let nx = c.cx.clamp(r.x0, r.x1) - c.cx;
    let ny = c.cy.clamp(r.y0, r.y1) - c.cy;
    let dmin = (nx * nx + ny * ny).sqrt();
    let fx = (r.x0 - c.cx).abs().max((r.x1 - c.cx).abs());
    let fy = (r.y0 - c.cy).abs().max((r.y1 - c.cy).abs());
    let dmax = (fx * fx + fy * fy).sqrt();
    dmin < c.r && dmax > c.r
}

/// One composite evaluation with `panels x panels` panels. Returns the estimate
/// and the largest `|f|` seen at a node.
fn composite(f: &ScalarField, domain: &BoxDomain, points: usize, panels: usize) -> (f64, f64) {
    let evaluator = f.evaluator();
    let integrator = PanelIntegrator {
        f: evaluator.as_ref(),
        jumps: f.discontinuities(),
        rule: GaussLegendre::get(points),
    };
    let xs = crate::fields::lattice(domain.l1_lo(), domain.l1_hi(), panels + 1);
    let ys = crate::fields::lattice(domain.l2_lo(), domain.l2_hi(), panels + 1);
    let row = |i: usize| {
        let mut acc = Accum::default();
        for j in 0..panels {
            let r = Rect {
                x0: xs[i],
                x1: xs[i + 1],
                y0: ys[j],
                y1: ys[j + 1],
            };
            integrator.panel(r, 0, &mut acc);
        }
        (acc.sum.value(), acc.sup)
    };
    let rows: Vec<(f64, f64)> = if panels >= 8 {
        (0..panels).into_par_iter().map(row).collect()
    } else {
        (0..panels).map(row).collect()
    };
    let sup = rows.iter().fold(0.0f64, |m, r| m.max(r.1));
    (compensated_sum(rows.iter().map(|r| r.0)), sup)
}

/// Result of a refinement run that may or may not have met its tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// `|last - previous|` of the final two refinement levels.
    pub error: f64,
    pub panels: usize,
    pub converged: bool,
}

/// Runs the dyadic refinement and reports the last estimate together with its
/// difference to the previous level, converged or not.
pub fn integrate_box_estimate(
    f: &ScalarField,
    domain: &BoxDomain,
    spec: &QuadratureSpec,
) -> Result<Estimate, QuadratureError> {
    spec.validate()?;
    let mut panels = spec.panels_per_axis;
    let (mut prev, mut sup) = composite(f, domain, spec.points_per_axis_per_panel, panels);
    loop {
        if panels * 2 > spec.max_panels_per_axis {
            return Ok(Estimate {
                value: prev,
                error: f64::INFINITY,
                panels,
                converged: false,
            });
        }
        panels *= 2;
        let (cur, s) = composite(f, domain, spec.points_per_axis_per_panel, panels);
        sup = sup.max(s);
        let diff = (cur - prev).abs();
        let tol = spec.target_rel_tol * cur.abs().max(domain.area() * sup);
        if !cur.is_finite() {
            return Ok(Estimate {
                value: cur,
                error: f64::INFINITY,
                panels,
                converged: false,
            });
        }
        if diff <= tol {
            return Ok(Estimate {
                value: cur,
                error: diff,
                panels,
                converged: true,
            });
        }
        if panels * 2 > spec.max_panels_per_axis {
            return Ok(Estimate {
                value: cur,
                error: diff,
                panels,
                converged: false,
            });
        }
        prev = cur;
    }
}

/// Converged composite Gauss-Legendre estimate of the integral of `f` over `domain`.
pub fn integrate_box(f: &ScalarField, domain: &BoxDomain, spec: &QuadratureSpec) -> Result<f64, QuadratureError> {
    let est = integrate_box_estimate(f, domain, spec)?;
    if est.converged {
        Ok(est.value)
    } else {
        let achieved = if est.value != 0.0 {
            est.error / est.value.abs()
        } else {
            est.error
        };
        Err(QuadratureError::NotConverged {
            best: est.value,
            achieved,
            target: spec.target_rel_tol,
            panels: est.panels,
        })
    }
}

/// Integral of `f * g` over `domain`.
pub fn integrate_product_box(
    f: &ScalarField,
    g: &ScalarField,
    domain: &BoxDomain,
    spec: &QuadratureSpec,
) -> Result<f64, QuadratureError> {
    integrate_box(&f.product(g), domain, spec)
}

/// Integral of `f * g * h` over `domain`.
pub fn integrate_triple_product_box(
    f: &ScalarField,
    g: &ScalarField,
    h: &ScalarField,
    domain: &BoxDomain,
    spec: &QuadratureSpec,
) -> Result<f64, QuadratureError> {
    integrate_box(&f.product(g).product(h), domain, spec)
}

fn clamp_tail(tail: f64, mass: f64, spec: &QuadratureSpec) -> Result<f64, QuadratureError> {
    if tail >= 0.0 {
        return Ok(tail);
    }
    let threshold = -10.0 * spec.target_rel_tol * mass.abs().max(f64::MIN_POSITIVE);
    if tail > threshold {
        Ok(0.0)
    } else {
        Err(QuadratureError::InconsistentTail { tail, threshold })
    }
}

/// Mass of `rho` inside `outer_box` but outside `[-half_width, half_width]^2`.
pub fn tail_mass(
    rho: &ScalarField,
    half_width: f64,
    outer_box: &BoxDomain,
    spec: &QuadratureSpec,
) -> Result<f64, QuadratureError> {
    let inner = BoxDomain::centered_square(half_width).map_err(|e| QuadratureError::InvalidDomain(e.to_string()))?;
    if !outer_box.contains_box(&inner) {
        return Err(QuadratureError::InvalidDomain(format!(
            "outer box {outer_box} does not contain {inner}"
        )));
    }
    let total = integrate_box(rho, outer_box, spec)?;
    let core = integrate_box(rho, &inner, spec)?;
    clamp_tail(total - core, total, spec)
}

/// Mass of `rho` outside `[-half_width, half_width]^2` given its total mass.
pub fn tail_mass_from_total(
    rho: &ScalarField,
    half_width: f64,
    total_mass: f64,
    spec: &QuadratureSpec,
) -> Result<f64, QuadratureError> {
    let inner = BoxDomain::centered_square(half_width).map_err(|e| QuadratureError::InvalidDomain(e.to_string()))?;
    let core = integrate_box(rho, &inner, spec)?;
    clamp_tail(total_mass - core, total_mass, spec)
}
