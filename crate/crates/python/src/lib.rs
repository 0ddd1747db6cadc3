//! Python bindings: fields, boxes, discretization, bounds, truncation and
//! convergence studies.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use partapprox_core::builtins::{self, BuiltinParams};
use partapprox_core::discretize::{self as dz, FieldKind, PiecewiseConstantField};
use partapprox_core::fields::{NormData, SampledGrid};
use partapprox_core::harness::{self, DEFAULT_BOUND_FLOOR};
use partapprox_core::{bounds, io, quadrature, truncation, BoundInputs, QuadratureSpec, TheoremId, Variant};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn spec(rel_tol: f64) -> PyResult<QuadratureSpec> {
    QuadratureSpec::new(QuadratureSpec::default().points_per_axis_per_panel, 1, rel_tol).map_err(value_err)
}

/// Axis-aligned box `[x_lo, x_hi] x [y_lo, y_hi]`.
#[pyclass(name = "Box", frozen, from_py_object, module = "partapprox")]
#[derive(Clone, Copy)]
struct PyBox(partapprox_core::BoxDomain);

#[pymethods]
impl PyBox {
    #[new]
    fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> PyResult<Self> {
        partapprox_core::BoxDomain::new(x_lo, x_hi, y_lo, y_hi)
            .map(PyBox)
            .map_err(value_err)
    }

    /// `[-h, h]²`.
    #[staticmethod]
    fn centered_square(h: f64) -> PyResult<Self> {
        partapprox_core::BoxDomain::centered_square(h)
            .map(PyBox)
            .map_err(value_err)
    }

    #[getter]
    fn bounds(&self) -> [f64; 4] {
        self.0.bounds()
    }

    #[getter]
    fn area(&self) -> f64 {
        self.0.area()
    }

    fn __repr__(&self) -> String {
        let [a, b, c, d] = self.0.bounds();
        format!("Box({a:?}, {b:?}, {c:?}, {d:?})")
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

fn norms_dict<'py>(py: Python<'py>, n: &NormData) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in [("l1", n.l1), ("sup", n.sup), ("dx_sup", n.dx_sup), ("dy_sup", n.dy_sup)] {
        d.set_item(k, v)?;
    }
    Ok(d)
}

fn norms_from_dict(d: Option<&Bound<'_, PyDict>>) -> PyResult<NormData> {
    let mut n = NormData::default();
    let Some(d) = d else { return Ok(n) };
    for (k, v) in d.iter() {
        let key: String = k.extract()?;
        let v: Option<f64> = v.extract()?;
        match key.as_str() {
            "l1" => n.l1 = v,
            "sup" => n.sup = v,
            "dx_sup" => n.dx_sup = v,
            "dy_sup" => n.dy_sup = v,
            other => return Err(PyValueError::new_err(format!("unknown norm '{other}'"))),
        }
    }
    n.validate().map_err(value_err)?;
    Ok(n)
}

/// Scalar field on the plane with optional support box and declared norms.
#[pyclass(name = "Field", frozen, from_py_object, module = "partapprox")]
#[derive(Clone)]
struct PyField(partapprox_core::ScalarField);

#[pymethods]
impl PyField {
    /// Builtin field by name; keyword arguments are its parameters.
    #[staticmethod]
    #[pyo3(signature = (name, **params))]
    fn builtin(name: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut p = BuiltinParams::default();
        if let Some(params) = params {
            for (k, v) in params.iter() {
                let key: String = k.extract()?;
                match key.as_str() {
                    "center" => p.center = Some(v.extract()?),
                    "half_width" => p.half_width = Some(v.extract()?),
                    "scale" => p.scale = Some(v.extract()?),
                    "radius" => p.radius = Some(v.extract()?),
                    "value" => p.value = Some(v.extract()?),
                    "coeffs" => p.coeffs = Some(v.extract()?),
                    "support" => p.support = Some(v.extract()?),
                    other => return Err(PyValueError::new_err(format!("unknown parameter '{other}'"))),
                }
            }
        }
        builtins::from_params(name, &p).map(PyField).map_err(value_err)
    }

    /// Field from a Python callable `f(x, y) -> float`. Exceptions and
    /// non-numeric results evaluate to NaN, which the library reports.
    #[staticmethod]
    #[pyo3(signature = (f, support=None, norms=None))]
    fn from_callable(f: Py<PyAny>, support: Option<PyBox>, norms: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let norms = norms_from_dict(norms)?;
        let mut field = partapprox_core::ScalarField::new(move |x, y| {
            Python::attach(|py| {
                f.call1(py, (x, y))
                    .and_then(|v| v.extract::<f64>(py))
                    .unwrap_or(f64::NAN)
            })
        });
        if let Some(b) = support {
            field = field.with_support(b.0);
        }
        Ok(PyField(field.with_norms(norms)))
    }

    /// Bilinear interpolant of `values[i][j]` at the lattice points of `domain`.
    #[staticmethod]
    fn from_samples(domain: PyBox, values: Vec<Vec<f64>>) -> PyResult<Self> {
        let nx = values.len();
        let ny = values.first().map_or(0, Vec::len);
        if values.iter().any(|r| r.len() != ny) {
            return Err(PyValueError::new_err("rows must have equal length"));
        }
        let grid = SampledGrid::new(domain.0, nx, ny, values.concat()).map_err(value_err)?;
        Ok(PyField(grid.into_field()))
    }

    /// Loads a sampled-field text file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        io::read_field_file(&path)
            .map(|g| PyField(g.into_field()))
            .map_err(value_err)
    }

    /// Copy with the given norms replacing the declared ones.
    #[pyo3(signature = (**norms))]
    fn with_norms(&self, norms: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let n = norms_from_dict(norms)?.or(self.0.norm_data());
        Ok(PyField(self.0.clone().with_norms(n)))
    }

    fn eval(&self, py: Python<'_>, x: f64, y: f64) -> f64 {
        py.detach(|| self.0.eval(x, y))
    }

    fn __call__(&self, py: Python<'_>, x: f64, y: f64) -> f64 {
        self.eval(py, x, y)
    }

    #[getter]
    fn support(&self) -> Option<PyBox> {
        self.0.support_hint().map(PyBox)
    }

    #[getter]
    fn norms<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        norms_dict(py, self.0.norm_data())
    }
}

/// Piecewise-constant field on an `N x N` grid.
#[pyclass(name = "Approximation", frozen, module = "partapprox")]
struct PyApproximation(PiecewiseConstantField);

#[pymethods]
impl PyApproximation {
    #[getter]
    fn n(&self) -> usize {
        self.0.grid().n()
    }

    #[getter]
    fn domain(&self) -> PyBox {
        PyBox(self.0.grid().domain())
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.0.kind() {
            FieldKind::Density => "density",
            FieldKind::QuantityProduct => "quantity_product",
        }
    }

    /// Cell values, row `i` being the x-cell.
    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        self.0.values().rows()
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.0.mass()
    }

    #[getter]
    fn min(&self) -> f64 {
        self.0.min()
    }

    #[getter]
    fn max(&self) -> f64 {
        self.0.max()
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        self.0.eval(x, y)
    }

    /// Text dump, readable by the CLI tooling.
    fn dump(&self) -> String {
        io::pc_field_to_string(&self.0)
    }
}

/// Cell averages of `rho` on the `n x n` grid over `domain`.
#[pyfunction]
#[pyo3(signature = (rho, domain, n, rel_tol=1e-12))]
fn discretize(py: Python<'_>, rho: &PyField, domain: PyBox, n: usize, rel_tol: f64) -> PyResult<PyApproximation> {
    let spec = spec(rel_tol)?;
    py.detach(|| {
        let grid = dz::make_grid(domain.0, n)?;
        dz::build_density_approx(&rho.0, &grid, &spec)
    })
    .map(PyApproximation)
    .map_err(value_err)
}

/// Cellwise product of the averages of `rho` and `omega`.
#[pyfunction]
#[pyo3(signature = (rho, omega, domain, n, rel_tol=1e-12))]
fn discretize_quantity(
    py: Python<'_>,
    rho: &PyField,
    omega: &PyField,
    domain: PyBox,
    n: usize,
    rel_tol: f64,
) -> PyResult<PyApproximation> {
    let spec = spec(rel_tol)?;
    py.detach(|| {
        let grid = dz::make_grid(domain.0, n)?;
        let a = dz::cell_averages(&rho.0, &grid, &spec)?;
        let w = dz::cell_averages(&omega.0, &grid, &spec)?;
        dz::build_quantity_approx(&a, &w, &grid)
    })
    .map(PyApproximation)
    .map_err(value_err)
}

/// `|∬ approx·phi − ∬ rho·phi|`.
#[pyfunction]
#[pyo3(signature = (rho, approx, phi, rel_tol=1e-12))]
fn weak_error_density(
    py: Python<'_>,
    rho: &PyField,
    approx: &PyApproximation,
    phi: &PyField,
    rel_tol: f64,
) -> PyResult<f64> {
    let spec = spec(rel_tol)?;
    py.detach(|| dz::weak_error_density(&rho.0, &approx.0, &phi.0, &spec))
        .map_err(value_err)
}

/// `|∬ approx·phi − ∬ rho·omega·phi|`.
#[pyfunction]
#[pyo3(signature = (rho, omega, approx, phi, rel_tol=1e-12))]
fn weak_error_quantity(
    py: Python<'_>,
    rho: &PyField,
    omega: &PyField,
    approx: &PyApproximation,
    phi: &PyField,
    rel_tol: f64,
) -> PyResult<f64> {
    let spec = spec(rel_tol)?;
    py.detach(|| dz::weak_error_quantity(&rho.0, &omega.0, &approx.0, &phi.0, &spec))
        .map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (f, domain, rel_tol=1e-12))]
fn integrate(py: Python<'_>, f: &PyField, domain: PyBox, rel_tol: f64) -> PyResult<f64> {
    let spec = spec(rel_tol)?;
    py.detach(|| quadrature::integrate_box(&f.0, &domain.0, &spec))
        .map_err(value_err)
}

/// Theorem bound at resolution `n`; returns the constants and `bound`.
#[pyfunction]
#[pyo3(signature = (theorem, n, delta1, delta2, variant="density", half_width=None, eps=None, rho_norms=None, omega_norms=None, phi_norms=None))]
#[allow(clippy::too_many_arguments)]
fn theorem_bound(
    theorem: &str,
    n: usize,
    delta1: f64,
    delta2: f64,
    variant: &str,
    half_width: Option<f64>,
    eps: Option<f64>,
    rho_norms: Option<&Bound<'_, PyDict>>,
    omega_norms: Option<&Bound<'_, PyDict>>,
    phi_norms: Option<&Bound<'_, PyDict>>,
) -> PyResult<BTreeMap<String, f64>> {
    let theorem: TheoremId = theorem.parse().map_err(value_err)?;
    let variant: Variant = variant.parse().map_err(value_err)?;
    let inputs = BoundInputs {
        delta1,
        delta2,
        half_width,
        eps,
        rho_norms: norms_from_dict(rho_norms)?,
        omega_norms: norms_from_dict(omega_norms)?,
        phi_norms: norms_from_dict(phi_norms)?,
        n,
    };
    let report = bounds::theorem_bound(theorem, variant, &inputs).map_err(value_err)?;
    let mut out = report.constants;
    out.insert("bound".into(), report.bound);
    Ok(out)
}

/// Smallest half-width on the lattice `1 + k·resolution` with tail mass <= eps.
#[pyfunction]
#[pyo3(signature = (rho, eps, resolution=0.01, total_mass=None, rel_tol=1e-12))]
fn find_truncation_l(
    py: Python<'_>,
    rho: &PyField,
    eps: f64,
    resolution: f64,
    total_mass: Option<f64>,
    rel_tol: f64,
) -> PyResult<BTreeMap<&'static str, f64>> {
    let spec = spec(rel_tol)?;
    let r = py
        .detach(|| {
            let mass = match total_mass {
                Some(m) => m,
                None => truncation::total_mass(&rho.0, &spec)?,
            };
            truncation::find_truncation_l(&rho.0, eps, mass, resolution, &spec)
        })
        .map_err(value_err)?;
    Ok(BTreeMap::from([
        ("half_width", r.half_width),
        ("achieved_tail", r.achieved_tail),
        ("eps", r.eps),
        ("bracket_lo", r.bracket.0),
        ("bracket_hi", r.bracket.1),
    ]))
}

/// Runs every case of a TOML study config. Returns the CSV report and whether
/// all bounds hold with the given slack and floor.
#[pyfunction]
#[pyo3(signature = (path, slack=0.0, floor=DEFAULT_BOUND_FLOOR))]
fn run_study_config(py: Python<'_>, path: PathBuf, slack: f64, floor: f64) -> PyResult<(String, bool)> {
    let parsed = io::read_study_config(&path).map_err(value_err)?;
    py.detach(|| {
        let outcomes = parsed
            .cases
            .iter()
            .map(harness::run_study)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let pass = outcomes
            .iter()
            .flat_map(|o| std::iter::once(&o.density).chain(o.quantity.as_ref()))
            .all(|r| harness::verify_bounds(r, slack, floor).all_pass());
        let csv = io::studies_to_csv(&outcomes).map_err(value_err)?;
        Ok((csv, pass))
    })
}

#[pymodule]
fn partapprox(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBox>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyApproximation>()?;
    m.add_function(wrap_pyfunction!(discretize, m)?)?;
    m.add_function(wrap_pyfunction!(discretize_quantity, m)?)?;
    m.add_function(wrap_pyfunction!(weak_error_density, m)?)?;
    m.add_function(wrap_pyfunction!(weak_error_quantity, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(theorem_bound, m)?)?;
    m.add_function(wrap_pyfunction!(find_truncation_l, m)?)?;
    m.add_function(wrap_pyfunction!(run_study_config, m)?)?;
    m.add("BUILTINS", builtins::BUILTIN_NAMES.to_vec())?;
    Ok(())
}
