//! Text formats: sampled-field files, piecewise-constant dumps, TOML study
//! configuration and CSV reports.
//!
//! # Sampled-field files
//!
//! ```text
//! GRIDFIELD 1
//! box <x_lo> <x_hi> <y_lo> <y_hi>
//! size <nx> <ny>
//! <ny values at x_0>
//! ...
//! <ny values at x_{nx-1}>
//! ```
//!
//! Value `j` of row `i` sits at `(x_i, y_j)` of the uniform lattice over the box.
//! Loaded fields interpolate bilinearly and vanish outside the box.
//!
//! # Study configuration
//!
//! ```toml
//! output = "study.csv"          # optional, relative to the config file
//!
//! [[case]]
//! name = "smooth"
//! theorem = "th1"               # th1 | th2 | th3 | th4
//! # eps = 1e-3                  # th2 and th4 only
//! n_values = [4, 8, 16, 32, 64] # default
//! truncation_resolution = 0.01  # default, th2 and th4 only
//!
//! [case.quadrature]             # optional, defaults shown
//! points = 10
//! panels = 1
//! rel_tol = 1e-12
//! max_panels = 1024
//!
//! [case.rho]
//! builtin = "cosine_squared_bump"   # or: file = "rho.txt"
//! center = [0.0, 0.0]
//! half_width = 1.0
//!
//! [case.rho.norms]              # optional overrides
//! dx_sup = 1.5707963267948966
//!
//! [case.phi]
//! builtin = "cosine_squared_bump"
//!
//! [case.omega]                  # optional; enables quantity errors
//! builtin = "cosine_squared_wave"
//! ```
//!
//! Builtin parameters are `center`, `half_width`, `scale`, `radius`, `value`,
//! `coeffs = [a, b, c]` and `support = [x_lo, x_hi, y_lo, y_hi]`; each builtin
//! accepts the subset it uses.
//!
//! # CSV report
//!
//! Header [`CSV_HEADER`]. One row per `N`, then one row per study with `N` set
//! to `constants`, whose error columns hold `key=value;...` lists of the
//! density and quantity bound constants plus `norms=analytic|estimated`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::TheoremId;
use crate::builtins::{self, BuiltinParams};
use crate::discretize::{make_grid, CellMatrix, FieldKind, PiecewiseConstantField};
use crate::fields::{BoxDomain, FieldError, NormData, SampledGrid, ScalarField};
use crate::harness::{StudyCase, StudyOutcome, DEFAULT_N_VALUES, DEFAULT_RESOLUTION};
use crate::quadrature::QuadratureSpec;

pub const CSV_HEADER: &str = "name,theorem,N,L,eps,measured_error_density,bound_density,ratio_density,measured_error_quantity,bound_quantity,ratio_quantity";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid study config: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text_file(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

/// Non-empty lines with their 1-based numbers.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, IoError> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("'{tok}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value '{tok}'")));
    }
    Ok(v)
}

fn parse_usize(tok: &str, line: usize) -> Result<usize, IoError> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("'{tok}' is not a nonnegative integer")))
}

/// Expects `keyword v1 .. vk` and returns the value tokens.
fn keyed<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    keyword: &str,
    arity: usize,
    last_line: usize,
) -> Result<(usize, Vec<&'a str>), IoError> {
    let (line, text) = lines
        .next()
        .ok_or_else(|| parse_err(last_line + 1, format!("missing '{keyword}' line")))?;
    let mut toks = text.split_whitespace();
    if toks.next() != Some(keyword) {
        return Err(parse_err(line, format!("expected '{keyword}'")));
    }
    let vals: Vec<&str> = toks.collect();
    if vals.len() != arity {
        return Err(parse_err(
            line,
            format!("'{keyword}' takes {arity} values, found {}", vals.len()),
        ));
    }
    Ok((line, vals))
}

fn parse_box(vals: &[&str], line: usize) -> Result<BoxDomain, IoError> {
    let b: Vec<f64> = vals.iter().map(|t| parse_f64(t, line)).collect::<Result<_, _>>()?;
    BoxDomain::new(b[0], b[1], b[2], b[3]).map_err(|e| parse_err(line, e.to_string()))
}

/// Reads `rows` lines of `cols` values each.
fn parse_rows<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    rows: usize,
    cols: usize,
    mut last_line: usize,
) -> Result<Vec<f64>, IoError> {
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let Some((line, text)) = lines.next() else {
            return Err(parse_err(
                last_line + 1,
                format!("expected {} values, found {}", rows * cols, values.len()),
            ));
        };
        last_line = line;
        let row: Vec<f64> = text
            .split_whitespace()
            .map(|t| parse_f64(t, line))
            .collect::<Result<_, _>>()?;
        if row.len() != cols {
            return Err(parse_err(
                line,
                format!("expected {cols} values in this row, found {}", row.len()),
            ));
        }
        values.extend(row);
    }
    if let Some((line, _)) = lines.next() {
        return Err(parse_err(line, format!("trailing data after {} values", rows * cols)));
    }
    Ok(values)
}

fn header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, magic: &str) -> Result<usize, IoError> {
    let (line, text) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let toks: Vec<&str> = text.split_whitespace().collect();
    match toks.as_slice() {
        [m, "1"] if *m == magic => Ok(line),
        [m, v] if *m == magic => Err(parse_err(line, format!("unsupported {magic} version {v}"))),
        _ => Err(parse_err(line, format!("expected '{magic} 1' header"))),
    }
}

pub fn grid_field_to_string(grid: &SampledGrid) -> String {
    let mut s = String::new();
    let [a, b, c, d] = grid.domain().bounds();
    let _ = writeln!(s, "GRIDFIELD 1");
    let _ = writeln!(s, "box {} {} {} {}", fmt_num(a), fmt_num(b), fmt_num(c), fmt_num(d));
    let _ = writeln!(s, "size {} {}", grid.nx(), grid.ny());
    for row in grid.values().chunks(grid.ny()) {
        let line: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn parse_grid_field(text: &str) -> Result<SampledGrid, IoError> {
    let mut lines = numbered_lines(text);
    let l0 = header(&mut lines, "GRIDFIELD")?;
    let (l1, b) = keyed(&mut lines, "box", 4, l0)?;
    let domain = parse_box(&b, l1)?;
    let (l2, size) = keyed(&mut lines, "size", 2, l1)?;
    let (nx, ny) = (parse_usize(size[0], l2)?, parse_usize(size[1], l2)?);
    if nx < 2 || ny < 2 {
        return Err(parse_err(
            l2,
            format!("need at least 2 samples per axis, got {nx} x {ny}"),
        ));
    }
    let values = parse_rows(&mut lines, nx, ny, l2)?;
    Ok(SampledGrid::new(domain, nx, ny, values)?)
}

pub fn write_field_file(path: &Path, grid: &SampledGrid) -> Result<(), IoError> {
    write_text_file(path, &grid_field_to_string(grid))
}

pub fn read_field_file(path: &Path) -> Result<SampledGrid, IoError> {
    parse_grid_field(&read_text(path)?)
}

/// Dump of a piecewise-constant field: `PCFIELD 1`, `kind`, `box`, `n`, then
/// `N` rows of `N` cell values (row `i` is the x-cell).
pub fn pc_field_to_string(pc: &PiecewiseConstantField) -> String {
    let mut s = String::new();
    let [a, b, c, d] = pc.grid().domain().bounds();
    let kind = match pc.kind() {
        FieldKind::Density => "density",
        FieldKind::QuantityProduct => "quantity_product",
    };
    let _ = writeln!(s, "PCFIELD 1");
    let _ = writeln!(s, "kind {kind}");
    let _ = writeln!(s, "box {} {} {} {}", fmt_num(a), fmt_num(b), fmt_num(c), fmt_num(d));
    let _ = writeln!(s, "n {}", pc.grid().n());
    for row in pc.values().rows() {
        let line: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn parse_pc_field(text: &str) -> Result<PiecewiseConstantField, IoError> {
    let mut lines = numbered_lines(text);
    let l0 = header(&mut lines, "PCFIELD")?;
    let (l1, k) = keyed(&mut lines, "kind", 1, l0)?;
    let kind = match k[0] {
        "density" => FieldKind::Density,
        "quantity_product" => FieldKind::QuantityProduct,
        other => return Err(parse_err(l1, format!("unknown kind '{other}'"))),
    };
    let (l2, b) = keyed(&mut lines, "box", 4, l1)?;
    let domain = parse_box(&b, l2)?;
    let (l3, n) = keyed(&mut lines, "n", 1, l2)?;
    let n = parse_usize(n[0], l3)?;
    let grid = make_grid(domain, n).map_err(|e| parse_err(l3, e.to_string()))?;
    let values = parse_rows(&mut lines, n, n, l3)?;
    let m = CellMatrix::new(n, values).map_err(|e| parse_err(l3, e.to_string()))?;
    PiecewiseConstantField::new(grid, m, kind).map_err(|e| parse_err(l3, e.to_string()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx_sup: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dy_sup: Option<f64>,
}

impl NormOverrides {
    fn as_norms(&self) -> NormData {
        NormData {
            l1: self.l1,
            sup: self.sup,
            dx_sup: self.dx_sup,
            dy_sup: self.dy_sup,
        }
    }
}

/// A field given either by a builtin name and parameters or by a sampled file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
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
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norms: Option<NormOverrides>,
}

impl FieldConfig {
    pub fn builtin(name: &str) -> Self {
        Self {
            builtin: Some(name.to_string()),
            ..Default::default()
        }
    }

    fn params(&self) -> BuiltinParams {
        BuiltinParams {
            center: self.center,
            half_width: self.half_width,
            scale: self.scale,
            radius: self.radius,
            value: self.value,
            coeffs: self.coeffs,
            support: self.support,
        }
    }

    /// Builds the field; file paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<ScalarField, IoError> {
        let field = match (&self.builtin, &self.file) {
            (Some(name), None) => builtins::from_params(name, &self.params())?,
            (None, Some(file)) => {
                if self.params() != BuiltinParams::default() {
                    return Err(IoError::Config(format!(
                        "field file {} takes no builtin parameters",
                        file.display()
                    )));
                }
                read_field_file(&base_dir.join(file))?.into_field()
            }
            (Some(_), Some(_)) => {
                return Err(IoError::Config(
                    "a field takes either 'builtin' or 'file', not both".into(),
                ))
            }
            (None, None) => return Err(IoError::Config("a field needs 'builtin' or 'file'".into())),
        };
        Ok(match &self.norms {
            None => field,
            Some(o) => {
                let norms = o.as_norms();
                norms.validate()?;
                let merged = norms.or(field.norm_data());
                field.with_norms(merged)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_panels")]
    pub panels: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_max_panels")]
    pub max_panels: usize,
}

fn default_points() -> usize {
    QuadratureSpec::default().points_per_axis_per_panel
}
fn default_panels() -> usize {
    QuadratureSpec::default().panels_per_axis
}
fn default_rel_tol() -> f64 {
    QuadratureSpec::default().target_rel_tol
}
fn default_max_panels() -> usize {
    QuadratureSpec::default().max_panels_per_axis
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            points: default_points(),
            panels: default_panels(),
            rel_tol: default_rel_tol(),
            max_panels: default_max_panels(),
        }
    }
}

impl QuadratureConfig {
    pub fn spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            points_per_axis_per_panel: self.points,
            panels_per_axis: self.panels,
            target_rel_tol: self.rel_tol,
            max_panels_per_axis: self.max_panels,
        }
    }
}

fn default_n_values() -> Vec<usize> {
    DEFAULT_N_VALUES.to_vec()
}
fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    pub theorem: TheoremId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_resolution")]
    pub truncation_resolution: f64,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    pub rho: FieldConfig,
    pub phi: FieldConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<FieldConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(rename = "case")]
    pub cases: Vec<CaseConfig>,
}

impl StudyConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("study configs always serialize")
    }
}

/// A validated configuration with its cases built.
#[derive(Debug, Clone)]
pub struct ParsedStudy {
    pub config: StudyConfig,
    pub cases: Vec<StudyCase>,
    /// Output path resolved against the config directory.
    pub output: Option<PathBuf>,
}

/// Parses and validates a study configuration. Relative paths resolve against
/// `base_dir`, and every referenced file must exist.
pub fn parse_study_config(text: &str, base_dir: &Path) -> Result<ParsedStudy, IoError> {
    let config: StudyConfig = toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
    if config.cases.is_empty() {
        return Err(IoError::Config("no [[case]] tables".into()));
    }
    let mut cases = Vec::with_capacity(config.cases.len());
    for (k, c) in config.cases.iter().enumerate() {
        if c.name.contains(['\n', '\r']) {
            return Err(IoError::Config(format!("case {}: name must be a single line", k + 1)));
        }
        if config.cases[..k].iter().any(|o| o.name == c.name) {
            return Err(IoError::Config(format!("duplicate case name '{}'", c.name)));
        }
        let ctx = |role: &str, e: IoError| IoError::Config(format!("case '{}', {role}: {e}", c.name));
        for (role, f) in [
            ("rho", Some(&c.rho)),
            ("phi", Some(&c.phi)),
            ("omega", c.omega.as_ref()),
        ] {
            if let Some(path) = f.and_then(|f| f.file.as_ref()) {
                let full = base_dir.join(path);
                if !full.is_file() {
                    return Err(IoError::Config(format!(
                        "case '{}', {role}: file {} does not exist",
                        c.name,
                        full.display()
                    )));
                }
            }
        }
        let rho = c.rho.build(base_dir).map_err(|e| ctx("rho", e))?;
        let phi = c.phi.build(base_dir).map_err(|e| ctx("phi", e))?;
        let omega = c
            .omega
            .as_ref()
            .map(|o| o.build(base_dir))
            .transpose()
            .map_err(|e| ctx("omega", e))?;
        let case = StudyCase {
            name: c.name.clone(),
            rho,
            phi,
            omega,
            theorem: c.theorem,
            eps: c.eps,
            n_values: c.n_values.clone(),
            quad: c.quadrature.spec(),
            truncation_resolution: c.truncation_resolution,
            sampling: Default::default(),
        };
        case.validate().map_err(|e| IoError::Config(e.to_string()))?;
        cases.push(case);
    }
    let output = config.output.as_ref().map(|p| base_dir.join(p));
    Ok(ParsedStudy { config, cases, output })
}

pub fn read_study_config(path: &Path) -> Result<ParsedStudy, IoError> {
    let text = read_text(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_study_config(&text, base)
}

fn constants_list(outcome: &StudyOutcome, records: Option<&[crate::harness::ConvergenceRecord]>) -> String {
    let Some(first) = records.and_then(|r| r.first()) else {
        return String::new();
    };
    let mut parts: Vec<String> = first
        .report
        .constants
        .iter()
        .map(|(k, v)| format!("{k}={}", fmt_num(*v)))
        .collect();
    let provenance = if outcome.norms_estimated {
        "estimated"
    } else {
        "analytic"
    };
    parts.push(format!("norms={provenance}"));
    parts.join(";")
}

/// CSV report of one or more studies, byte-for-byte deterministic.
pub fn studies_to_csv(outcomes: &[StudyOutcome]) -> Result<String, IoError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))?;
    for o in outcomes {
        let l = o.half_width().map(fmt_num).unwrap_or_default();
        let eps = o.eps.map(fmt_num).unwrap_or_default();
        for (k, d) in o.density.iter().enumerate() {
            let (eq, bq, rq) = match o.quantity.as_ref().map(|q| &q[k]) {
                Some(q) => (fmt_num(q.measured_error), fmt_num(q.bound), fmt_num(q.ratio)),
                None => Default::default(),
            };
            w.write_record([
                o.name.as_str(),
                o.theorem.as_str(),
                &d.n.to_string(),
                &l,
                &eps,
                &fmt_num(d.measured_error),
                &fmt_num(d.bound),
                &fmt_num(d.ratio),
                &eq,
                &bq,
                &rq,
            ])?;
        }
        w.write_record([
            o.name.as_str(),
            o.theorem.as_str(),
            "constants",
            &l,
            &eps,
            &constants_list(o, Some(&o.density)),
            "",
            "",
            &constants_list(o, o.quantity.as_deref()),
            "",
            "",
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_studies_csv(path: &Path, outcomes: &[StudyOutcome]) -> Result<(), IoError> {
    write_text_file(path, &studies_to_csv(outcomes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run_study;
    use proptest::prelude::*;

    fn unit() -> BoxDomain {
        BoxDomain::new(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn constant_grid_round_trip() {
        let g = SampledGrid::new(unit(), 3, 3, vec![2.5; 9]).unwrap();
        let back = parse_grid_field(&grid_field_to_string(&g)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn short_payload_names_counts() {
        let text = "GRIDFIELD 1\nbox 0 1 0 1\nsize 2 2\n1 2\n3\n";
        let err = parse_grid_field(text).unwrap_err().to_string();
        assert_eq!(err, "line 5: expected 2 values in this row, found 1");
        let text = "GRIDFIELD 1\nbox 0 1 0 1\nsize 2 2\n1 2\n";
        let err = parse_grid_field(text).unwrap_err().to_string();
        assert!(err.contains("expected 4 values, found 2"), "{err}");
    }

    #[test]
    fn malformed_headers() {
        for (text, needle) in [
            ("", "empty file"),
            ("GRIDFIELD 2\n", "unsupported"),
            ("GRID 1\n", "header"),
            ("GRIDFIELD 1\nbox 0 1 1 0\nsize 2 2\n", "line 2"),
            ("GRIDFIELD 1\nbox 0 1 0 1\nsize 2\n", "line 3"),
            ("GRIDFIELD 1\nbox 0 1 0 1\nsize 2 2\n1 nan\n1 1\n", "line 4"),
            ("GRIDFIELD 1\nbox 0 1 0 1\nsize 2 2\n1 1\n1 1\n5\n", "trailing"),
        ] {
            let err = parse_grid_field(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?}: {err}");
        }
    }

    #[test]
    fn loaded_field_reproduces_nodes() {
        let f = ScalarField::new(|x, y| (3.0 * x).sin() + y * y);
        let g = SampledGrid::sample(&f, BoxDomain::new(-1.0, 2.0, 0.0, 1.0).unwrap(), 7, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        write_field_file(&path, &g).unwrap();
        let back = read_field_file(&path).unwrap();
        assert_eq!(back, g);
        let field = back.into_field();
        let xs = g.domain().lattice_x(7);
        let ys = g.domain().lattice_y(5);
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                assert_eq!(field.eval(x, y), g.value(i, j));
            }
        }
        assert_eq!(field.eval(2.5, 0.5), 0.0);
    }

    proptest! {
        #[test]
        fn grid_text_round_trip_is_bit_exact(values in proptest::collection::vec(-1e300f64..1e300, 12)) {
            let g = SampledGrid::new(BoxDomain::new(-0.1, 0.3, 1e-7, 5.0).unwrap(), 4, 3, values).unwrap();
            prop_assert_eq!(parse_grid_field(&grid_field_to_string(&g)).unwrap(), g);
        }
    }

    #[test]
    fn pc_dump_round_trip() {
        let g = make_grid(unit(), 3).unwrap();
        let pc = PiecewiseConstantField::new(
            g,
            CellMatrix::from_fn(3, |i, j| i as f64 * 0.1 + j as f64 / 3.0),
            FieldKind::QuantityProduct,
        )
        .unwrap();
        assert_eq!(parse_pc_field(&pc_field_to_string(&pc)).unwrap(), pc);
    }

    const MINIMAL: &str = r#"
[[case]]
name = "smooth"
theorem = "th1"
[case.rho]
builtin = "cosine_squared_bump"
[case.phi]
builtin = "cosine_squared_bump"
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let p = parse_study_config(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(p.cases.len(), 1);
        let c = &p.cases[0];
        assert_eq!(c.n_values, vec![4, 8, 16, 32, 64]);
        assert_eq!(c.quad, QuadratureSpec::default());
        assert_eq!(
            c.rho.norm_data(),
            &NormData::full(1.0, 1.0, std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)
        );
        assert!(p.output.is_none());
    }

    #[test]
    fn config_errors() {
        let gauss = MINIMAL.replacen("cosine_squared_bump", "gaussian", 1);
        let e = parse_study_config(&gauss, Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("th1 requires compact support"), "{e}");

        let dup = MINIMAL.replace("theorem = \"th1\"", "theorem = \"th1\"\nn_values = [4, 8, 8]");
        let e = parse_study_config(&dup, Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("strictly ascending"), "{e}");

        let empty = MINIMAL.replace("theorem = \"th1\"", "theorem = \"th1\"\nn_values = []");
        assert!(parse_study_config(&empty, Path::new(".")).is_err());

        let unknown = MINIMAL.replace("theorem = \"th1\"", "theorem = \"th1\"\ncolour = 3");
        let e = parse_study_config(&unknown, Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("unknown field"), "{e}");

        let th2 = MINIMAL.replace("th1", "th2");
        let e = parse_study_config(&th2, Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("requires eps"), "{e}");

        let badname = MINIMAL.replacen("cosine_squared_bump", "sombrero", 1);
        let e = parse_study_config(&badname, Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("unknown builtin"), "{e}");

        let missing = MINIMAL.replacen("builtin = \"cosine_squared_bump\"", "file = \"nope.txt\"", 1);
        let e = parse_study_config(&missing, Path::new("/nonexistent"))
            .unwrap_err()
            .to_string();
        assert!(e.contains("does not exist"), "{e}");
    }

    #[test]
    fn norm_overrides_replace_analytic_values() {
        let text = format!("{MINIMAL}[case.rho.norms]\ndx_sup = 0.25\n");
        let p = parse_study_config(&text, Path::new(".")).unwrap();
        let n = p.cases[0].rho.norm_data();
        assert_eq!(n.dx_sup, Some(0.25));
        assert_eq!(n.dy_sup, Some(std::f64::consts::FRAC_PI_2));
    }

    #[test]
    fn config_round_trip() {
        let text = r#"
output = "out.csv"

[[case]]
name = "trunc"
theorem = "th4"
eps = 0.001
n_values = [4, 8]
truncation_resolution = 0.05
[case.quadrature]
points = 8
rel_tol = 1e-11
[case.rho]
builtin = "gaussian"
scale = 1.0
[case.phi]
builtin = "cosine_squared_bump"
center = [0.5, 0.0]
half_width = 1.0
[case.phi.norms]
sup = 1.0
[case.omega]
builtin = "cosine_squared_wave"
"#;
        let p = parse_study_config(text, Path::new("/base")).unwrap();
        assert_eq!(p.output, Some(PathBuf::from("/base/out.csv")));
        let again: StudyConfig = toml::from_str(&p.config.to_toml()).unwrap();
        assert_eq!(again, p.config);
    }

    #[test]
    fn config_with_field_file() {
        let dir = tempfile::tempdir().unwrap();
        let g = SampledGrid::new(unit(), 2, 2, vec![1.0; 4]).unwrap();
        write_field_file(&dir.path().join("rho.txt"), &g).unwrap();
        let text = MINIMAL
            .replacen("builtin = \"cosine_squared_bump\"", "file = \"rho.txt\"", 1)
            .replace("th1", "th3");
        let p = parse_study_config(&text, dir.path()).unwrap();
        assert_eq!(p.cases[0].rho.support_hint(), Some(unit()));
    }

    #[test]
    fn csv_layout() {
        let p = parse_study_config(
            &MINIMAL.replace("theorem = \"th1\"", "theorem = \"th1\"\nn_values = [2, 4]"),
            Path::new("."),
        )
        .unwrap();
        let out = run_study(&p.cases[0]).unwrap();
        let csv = studies_to_csv(&[out]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("smooth,th1,2,,,"));
        assert!(lines[1].ends_with(",,,"));
        assert!(lines[3].starts_with("smooth,th1,constants,,,C12="));
        assert!(lines[3].contains(";norms=analytic"));
    }
}
