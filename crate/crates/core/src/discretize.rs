//! Uniform grids over a rectangle, cell averages and the piecewise-constant
//! density and quantity fields built from them, plus the weak-form error
//! functionals and the exact decompositions used to check them.

use rayon::prelude::*;
use thiserror::Error;

use crate::fields::{BoxDomain, FieldError, ScalarField};
use crate::quadrature::{self, compensated_sum, QuadratureError, QuadratureSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizeError {
    #[error("grid resolution must be at least 1")]
    InvalidResolution,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("quadrature failed on cell ({i}, {j}): {source}")]
    Cell {
        i: usize,
        j: usize,
        #[source]
        source: QuadratureError,
    },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("cell matrices must be {expected} x {expected}, found {found} values")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("negative cell average {value} at ({i}, {j}); the density must be nonnegative")]
    NegativeDensity { i: usize, j: usize, value: f64 },
    #[error(
        "no covering box for the reference integral: neither the density nor the test function declares a support"
    )]
    NoCoveringBox,
}

/// `N x N` uniform partition of a box. Node arrays hold `N + 1` entries each,
/// with both endpoints equal to the box bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: BoxDomain,
    n: usize,
    x_nodes: Vec<f64>,
    y_nodes: Vec<f64>,
}

pub fn make_grid(domain: BoxDomain, n: usize) -> Result<Grid, DiscretizeError> {
    if n == 0 {
        return Err(DiscretizeError::InvalidResolution);
    }
    Ok(Grid {
        domain,
        n,
        x_nodes: domain.lattice_x(n + 1),
        y_nodes: domain.lattice_y(n + 1),
    })
}

impl Grid {
    pub fn domain(&self) -> BoxDomain {
        self.domain
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }
    pub fn y_nodes(&self) -> &[f64] {
        &self.y_nodes
    }

    /// `Δ₁Δ₂/N²`, the nominal cell area.
    pub fn cell_area(&self) -> f64 {
        let n = self.n as f64;
        self.domain.delta1() * self.domain.delta2() / (n * n)
    }

    /// Closed rectangle of cell `(i, j)`.
    pub fn cell(&self, i: usize, j: usize) -> BoxDomain {
        BoxDomain::new(
            self.x_nodes[i],
            self.x_nodes[i + 1],
            self.y_nodes[j],
            self.y_nodes[j + 1],
        )
        .expect("grid nodes are strictly increasing")
    }

    /// Lower-left node of cell `(i, j)`.
    pub fn corner(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x_nodes[i], self.y_nodes[j])
    }

    /// Cell containing `(x, y)`: cells are half-open on the right and top except
    /// for the last column and row.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !self.domain.contains(x, y) {
            return None;
        }
        Some((locate_axis(&self.x_nodes, x), locate_axis(&self.y_nodes, y)))
    }
}

fn locate_axis(nodes: &[f64], x: f64) -> usize {
    let n = nodes.len() - 1;
    let (lo, hi) = (nodes[0], nodes[n]);
    let mut i = (((x - lo) / (hi - lo)) * n as f64).floor().clamp(0.0, (n - 1) as f64) as usize;
    while i > 0 && x < nodes[i] {
        i -= 1;
    }
    while i < n - 1 && x >= nodes[i + 1] {
        i += 1;
    }
    i
}

/// `N x N` matrix of per-cell values, row-major in `(i, j)` = (x-cell, y-cell).
#[derive(Debug, Clone, PartialEq)]
pub struct CellMatrix {
    n: usize,
    values: Vec<f64>,
}

impl CellMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self, DiscretizeError> {
        if n == 0 {
            return Err(DiscretizeError::InvalidResolution);
        }
        if values.len() != n * n {
            return Err(DiscretizeError::DimensionMismatch {
                expected: n,
                found: values.len(),
            });
        }
        Ok(Self { n, values })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let values = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldKind {
    Density,
    QuantityProduct,
}

/// Field equal to `values(i, j)` on cell `(i, j)` and zero outside the grid box.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantField {
    grid: Grid,
    values: CellMatrix,
    kind: FieldKind,
}

impl PiecewiseConstantField {
    pub fn new(grid: Grid, values: CellMatrix, kind: FieldKind) -> Result<Self, DiscretizeError> {
        if values.n() != grid.n() {
            return Err(DiscretizeError::DimensionMismatch {
                expected: grid.n(),
                found: values.values().len(),
            });
        }
        Ok(Self { grid, values, kind })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &CellMatrix {
        &self.values
    }
    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self.grid.locate(x, y) {
            Some((i, j)) => self.values.get(i, j),
            None => 0.0,
        }
    }

    /// `Σ values(i, j) · Δ₁Δ₂/N²`.
    pub fn mass(&self) -> f64 {
        let area = self.grid.cell_area();
        compensated_sum(self.values.values().iter().map(|v| v * area))
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    pub fn max(&self) -> f64 {
        self.values.max()
    }

    /// The field as a [`ScalarField`] with the grid box as support and the
    /// grid lines declared as breaklines.
    pub fn to_field(&self) -> ScalarField {
        let pc = self.clone();
        let jumps = crate::fields::Discontinuities {
            x_breaks: self.grid.x_nodes.clone(),
            y_breaks: self.grid.y_nodes.clone(),
            circles: Vec::new(),
        };
        ScalarField::new(move |x, y| pc.eval(x, y))
            .with_support(self.grid.domain())
            .with_discontinuities(jumps)
    }
}

/// Maps `f` over all cells in parallel; results come back row-major.
fn per_cell<T, F>(grid: &Grid, f: F) -> Result<Vec<T>, DiscretizeError>
where
    T: Send,
    F: Fn(usize, usize, BoxDomain) -> Result<T, QuadratureError> + Sync,
{
    let n = grid.n();
    let rows: Vec<Result<Vec<T>, DiscretizeError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| f(i, j, grid.cell(i, j)).map_err(|source| DiscretizeError::Cell { i, j, source }))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n * n);
    for row in rows {
        out.extend(row?);
    }
    Ok(out)
}

/// Raw integrals of `f` over every cell.
pub fn cell_integrals(f: &ScalarField, grid: &Grid, spec: &QuadratureSpec) -> Result<CellMatrix, DiscretizeError> {
    let values = per_cell(grid, |_, _, cell| quadrature::integrate_box(f, &cell, spec))?;
    CellMatrix::new(grid.n(), values)
}

/// `N²/(Δ₁Δ₂)` times the integral of `f` over each cell.
pub fn cell_averages(f: &ScalarField, grid: &Grid, spec: &QuadratureSpec) -> Result<CellMatrix, DiscretizeError> {
    let scale = 1.0 / grid.cell_area();
    let mut m = cell_integrals(f, grid, spec)?;
    m.values.iter_mut().for_each(|v| *v *= scale);
    Ok(m)
}

/// Piecewise-constant density from the cell averages of a nonnegative `rho`.
pub fn build_density_approx(
    rho: &ScalarField,
    grid: &Grid,
    spec: &QuadratureSpec,
) -> Result<PiecewiseConstantField, DiscretizeError> {
    let avgs = cell_averages(rho, grid, spec)?;
    let floor = -spec.target_rel_tol.max(1e-12) * (1.0 + avgs.max().abs());
    if let Some(k) = avgs.values().iter().position(|&v| v < floor) {
        let n = grid.n();
        return Err(DiscretizeError::NegativeDensity {
            i: k / n,
            j: k % n,
            value: avgs.values()[k],
        });
    }
    PiecewiseConstantField::new(grid.clone(), avgs, FieldKind::Density)
}

/// Cellwise product `a(i, j) · W(i, j)`.
pub fn build_quantity_approx(
    rho_avgs: &CellMatrix,
    omega_avgs: &CellMatrix,
    grid: &Grid,
) -> Result<PiecewiseConstantField, DiscretizeError> {
    for m in [rho_avgs, omega_avgs] {
        if m.n() != grid.n() {
            return Err(DiscretizeError::DimensionMismatch {
                expected: grid.n(),
                found: m.values().len(),
            });
        }
    }
    let values = rho_avgs
        .values()
        .iter()
        .zip(omega_avgs.values())
        .map(|(a, w)| a * w)
        .collect();
    PiecewiseConstantField::new(
        grid.clone(),
        CellMatrix::new(grid.n(), values)?,
        FieldKind::QuantityProduct,
    )
}

/// `∬ pc · φ`, integrating `φ` cell by cell.
pub fn weak_integral(
    pc: &PiecewiseConstantField,
    phi: &ScalarField,
    spec: &QuadratureSpec,
) -> Result<f64, DiscretizeError> {
    let iphi = cell_integrals(phi, pc.grid(), spec)?;
    Ok(compensated_sum(
        pc.values().values().iter().zip(iphi.values()).map(|(v, i)| v * i),
    ))
}

/// Smallest box containing the grid box and the intersection of the declared
/// supports of `fields`. Fields without a declared support do not restrict the
/// intersection; if none declares one there is no finite covering box.
pub fn covering_box(grid: &Grid, fields: &[&ScalarField]) -> Result<BoxDomain, DiscretizeError> {
    let mut support: Option<BoxDomain> = None;
    for f in fields {
        if let Some(s) = f.support_hint() {
            support = Some(match support {
                None => s,
                // disjoint supports: the product vanishes, the grid box suffices
                Some(prev) => match prev.intersect(&s) {
                    Some(b) => b,
                    None => return Ok(grid.domain()),
                },
            });
        }
    }
    support
        .map(|s| grid.domain().hull(&s))
        .ok_or(DiscretizeError::NoCoveringBox)
}

/// Integral of `f` over `cover` minus the grid box, as up to four strips.
fn outside_integral(
    f: &ScalarField,
    grid: &Grid,
    cover: &BoxDomain,
    spec: &QuadratureSpec,
) -> Result<f64, DiscretizeError> {
    let g = grid.domain();
    let [cx0, cx1, cy0, cy1] = cover.bounds();
    let [gx0, gx1, gy0, gy1] = g.bounds();
    let strips = [
        (cx0, gx0, cy0, cy1),
        (gx1, cx1, cy0, cy1),
        (gx0, gx1, cy0, gy0),
        (gx0, gx1, gy1, cy1),
    ];
    let mut parts = Vec::new();
    for (a, b, c, d) in strips {
        if b > a && d > c {
            let strip = BoxDomain::new(a, b, c, d)?;
            parts.push(quadrature::integrate_box(f, &strip, spec)?);
        }
    }
    Ok(compensated_sum(parts))
}

/// Signed `∬ pc·φ − ∬ target·φ`, with the reference taken over `cover`.
fn signed_error(
    pc: &PiecewiseConstantField,
    target: &ScalarField,
    phi: &ScalarField,
    cover: &BoxDomain,
    spec: &QuadratureSpec,
) -> Result<f64, DiscretizeError> {
    let grid = pc.grid();
    let weighted = target.product(phi);
    let diffs = per_cell(grid, |i, j, cell| {
        let iphi = quadrature::integrate_box(phi, &cell, spec)?;
        let iref = quadrature::integrate_box(&weighted, &cell, spec)?;
        Ok(pc.values().get(i, j) * iphi - iref)
    })?;
    let outside = outside_integral(&weighted, grid, cover, spec)?;
    Ok(compensated_sum(diffs) - outside)
}

/// `∬ ρ̂ᴺφ − ∬ ρ⁰φ` with the reference over the covering box.
pub fn weak_error_density_signed(
    rho: &ScalarField,
    pc: &PiecewiseConstantField,
    phi: &ScalarField,
    spec: &QuadratureSpec,
) -> Result<f64, DiscretizeError> {
    let cover = covering_box(pc.grid(), &[rho, phi])?;
    signed_error(pc, rho, phi, &cover, spec)
}

/// `|∬ ρ̂ᴺφ − ∬ ρ⁰φ|`.
pub fn weak_error_density(
    rho: &ScalarField,
    pc: &PiecewiseConstantField,
    phi: &ScalarField,
    spec: &QuadratureSpec,
) -> Result<f64, DiscretizeError> {
    weak_error_density_signed(rho, pc, phi, spec).map(f64::abs)
}

/// `∬ ρ̂ᴺω̂ᴺφ − ∬ ρ⁰ω⁰φ` with the reference over the covering box.
pub fn weak_error_quantity_signed(
    rho: &ScalarField,
    omega: &ScalarField,
    pcq: &PiecewiseConstantField,
    phi: &ScalarField,
    spec: &QuadratureSpec,
) -> Result<f64, DiscretizeError> {
    let cover = covering_box(pcq.grid(), &[rho, omega, phi])?;
    signed_error(pcq, &rho.product(omega), phi, &cover, spec)
}

/// `|∬ ρ̂ᴺω̂ᴺφ − ∬ ρ⁰ω⁰φ|`.
pub fn weak_error_quantity(
    rho: &ScalarField,
    omega: &ScalarField,
    pcq: &PiecewiseConstantField,
    phi: &ScalarField,
    spec: &QuadratureSpec,
) -> Result<f64, DiscretizeError> {
    weak_error_quantity_signed(rho, omega, pcq, phi, spec).map(f64::abs)
}

/// Per-cell integral of `(a − ρ)(φ − φ(corner))`.
fn corner_defect_integrals(
    rho: &ScalarField,
    avgs: &CellMatrix,
    phi: &ScalarField,
    grid: &Grid,
    spec: &QuadratureSpec,
) -> Result<Vec<f64>, DiscretizeError> {
    let jumps = rho.discontinuities().merge(phi.discontinuities());
    per_cell(grid, |i, j, cell| {
        let a = avgs.get(i, j);
        let (xc, yc) = grid.corner(i, j);
        let phic = phi.eval(xc, yc);
        let (r, p) = (rho.evaluator(), phi.evaluator());
        let integrand =
            ScalarField::new(move |x, y| (a - r(x, y)) * (p(x, y) - phic)).with_discontinuities(jumps.clone());
        quadrature::integrate_box(&integrand, &cell, spec)
    })
}

/// `|LHS − RHS|` of the exact identity
///
/// `∬ ρ̂ᴺφ − ∬ ρ⁰φ = −∬_{cover∖C_L} ρ⁰φ + Σᵢⱼ ∬_cell (aᵢⱼ − ρ⁰)(φ − φ(x̄ᵢ, ȳⱼ))`,
///
/// each side evaluated by its own quadratures.
pub fn decomposition_residual(
    rho: &ScalarField,
    grid: &Grid,
    phi: &ScalarField,
    spec: &QuadratureSpec,
) -> Result<f64, DiscretizeError> {
    let pc = build_density_approx(rho, grid, spec)?;
    let cover = covering_box(grid, &[rho, phi])?;
    let lhs = signed_error(&pc, rho, phi, &cover, spec)?;
    let tail = outside_integral(&rho.product(phi), grid, &cover, spec)?;
    let cells = corner_defect_integrals(rho, pc.values(), phi, grid, spec)?;
    let rhs = compensated_sum(cells) - tail;
    Ok((lhs - rhs).abs())
}

/// Terms of the quantity decomposition
///
/// `∬ ρ̂ᴺω̂ᴺφ − ∬ ρ⁰ω⁰φ = −tail + Σ Wᵢⱼ ∬_cell (aᵢⱼ − ρ⁰)(φ − φᵢⱼ) + Σ ∬_cell ρ⁰(Wᵢⱼ − ω⁰)φ`
///
/// where `φᵢⱼ = φ(x̄ᵢ, ȳⱼ)`. `corner_weight_term` is `Σ ∬ ρ⁰(Wᵢⱼ − ω⁰)φᵢⱼ`, which
/// differs from the last term by `Σ ∬ ρ⁰(Wᵢⱼ − ω⁰)(φ − φᵢⱼ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantityDecomposition {
    pub weak_error: f64,
    pub tail: f64,
    pub density_term: f64,
    pub weight_term: f64,
    pub corner_weight_term: f64,
}

impl QuantityDecomposition {
    pub fn residual(&self) -> f64 {
        (self.weak_error - (-self.tail + self.density_term + self.weight_term)).abs()
    }

    /// Residual when the weight term is anchored at the cell corner.
    pub fn corner_anchored_residual(&self) -> f64 {
        (self.weak_error - (-self.tail + self.density_term + self.corner_weight_term)).abs()
    }
}

pub fn quantity_decomposition(
    rho: &ScalarField,
    omega: &ScalarField,
    grid: &Grid,
    phi: &ScalarField,
    spec: &QuadratureSpec,
) -> Result<QuantityDecomposition, DiscretizeError> {
    let a = cell_averages(rho, grid, spec)?;
    let w = cell_averages(omega, grid, spec)?;
    let pcq = build_quantity_approx(&a, &w, grid)?;
    let cover = covering_box(grid, &[rho, omega, phi])?;
    let rho_omega = rho.product(omega);
    let weak_error = signed_error(&pcq, &rho_omega, phi, &cover, spec)?;
    let tail = outside_integral(&rho_omega.product(phi), grid, &cover, spec)?;
    let defects = corner_defect_integrals(rho, &a, phi, grid, spec)?;
    let density_term = compensated_sum(defects.iter().zip(w.values()).map(|(d, wij)| wij * d));
    let jumps = rho
        .discontinuities()
        .merge(omega.discontinuities())
        .merge(phi.discontinuities());
    let weights = per_cell(grid, |i, j, cell| {
        let wij = w.get(i, j);
        let (xc, yc) = grid.corner(i, j);
        let phic = phi.eval(xc, yc);
        let (r, o, p) = (rho.evaluator(), omega.evaluator(), phi.evaluator());
        let full =
            ScalarField::new(move |x, y| r(x, y) * (wij - o(x, y)) * p(x, y)).with_discontinuities(jumps.clone());
        let (r, o) = (rho.evaluator(), omega.evaluator());
        let corner = ScalarField::new(move |x, y| r(x, y) * (wij - o(x, y)) * phic).with_discontinuities(jumps.clone());
        Ok((
            quadrature::integrate_box(&full, &cell, spec)?,
            quadrature::integrate_box(&corner, &cell, spec)?,
        ))
    })?;
    Ok(QuantityDecomposition {
        weak_error,
        tail,
        density_term,
        weight_term: compensated_sum(weights.iter().map(|t| t.0)),
        corner_weight_term: compensated_sum(weights.iter().map(|t| t.1)),
    })
}

/// Residual of the quantity decomposition, see [`quantity_decomposition`].
pub fn quantity_decomposition_residual(
    rho: &ScalarField,
    omega: &ScalarField,
    grid: &Grid,
    phi: &ScalarField,
    spec: &QuadratureSpec,
) -> Result<f64, DiscretizeError> {
    quantity_decomposition(rho, omega, grid, phi, spec).map(|d| d.residual())
}

/// Largest `|aᵢⱼ − ρ(x, y)|` over a `samples x samples` lattice in each closed
/// cell (corners included).
pub fn cell_deviation_max(
    rho: &ScalarField,
    avgs: &CellMatrix,
    grid: &Grid,
    samples: usize,
) -> Result<f64, DiscretizeError> {
    if samples < 2 {
        return Err(
            FieldError::InvalidParameter(format!("need at least 2 samples per cell axis, got {samples}")).into(),
        );
    }
    if avgs.n() != grid.n() {
        return Err(DiscretizeError::DimensionMismatch {
            expected: grid.n(),
            found: avgs.values().len(),
        });
    }
    let devs = per_cell(grid, |i, j, cell| {
        let a = avgs.get(i, j);
        let ys = cell.lattice_y(samples);
        let mut worst = 0.0f64;
        for x in cell.lattice_x(samples) {
            for &y in &ys {
                worst = worst.max((a - rho.eval(x, y)).abs());
            }
        }
        Ok(worst)
    })?;
    Ok(devs.into_iter().fold(0.0, f64::max))
}

const VARIATION_PANEL_CAP: usize = 64;

/// `Σᵢⱼ ∬_cell |φ − φ(x̄ᵢ, ȳⱼ)|` and an upper estimate of its quadrature error.
pub fn test_function_variation(
    phi: &ScalarField,
    grid: &Grid,
    spec: &QuadratureSpec,
) -> Result<(f64, f64), DiscretizeError> {
    let capped = spec.with_max_panels(
        spec.max_panels_per_axis
            .min(VARIATION_PANEL_CAP)
            .max(spec.panels_per_axis),
    );
    let parts = per_cell(grid, |i, j, cell| {
        let (xc, yc) = grid.corner(i, j);
        let phic = phi.eval(xc, yc);
        let p = phi.evaluator();
        // |φ − φc| has kinks inside the cell, so accept the unconverged estimate
        let f = phi.derived(move |x, y| (p(x, y) - phic).abs());
        let est = quadrature::integrate_box_estimate(&f, &cell, &capped)?;
        Ok((
            est.value,
            if est.error.is_finite() {
                est.error
            } else {
                est.value.abs()
            },
        ))
    })?;
    Ok((
        compensated_sum(parts.iter().map(|p| p.0)),
        compensated_sum(parts.iter().map(|p| p.1)),
    ))
}
