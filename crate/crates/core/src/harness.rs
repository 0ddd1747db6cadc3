//! Convergence studies: sweep `N`, measure weak errors, evaluate the matching
//! bound, and fit empirical orders.

use std::error::Error as StdError;

use rayon::prelude::*;
use thiserror::Error;

use crate::bounds::{self, theorem_bound, BoundInputs, BoundReport, FieldRole, NormKind, TheoremId, Variant};
use crate::discretize::{self, build_density_approx, build_quantity_approx, cell_averages, covering_box, make_grid};
use crate::fields::{resolve_norms, BoxDomain, NormData, SamplingParams, ScalarField};
use crate::quadrature::QuadratureSpec;
use crate::truncation::{self, find_truncation_l, TruncationResult};

pub const DEFAULT_N_VALUES: [usize; 5] = [4, 8, 16, 32, 64];
pub const DEFAULT_RESOLUTION: f64 = 0.01;
/// Absolute allowance for quadrature noise in bound checks.
pub const DEFAULT_BOUND_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid study case: {0}")]
    InvalidCase(String),
    #[error("cannot fit an order: {0}")]
    Insufficient(String),
    #[error("case '{case}', {stage}: {source}")]
    Failed {
        case: String,
        stage: String,
        #[source]
        source: Box<dyn StdError + Send + Sync>,
    },
}

fn failed<E: StdError + Send + Sync + 'static>(
    case: &str,
    stage: impl Into<String>,
) -> impl FnOnce(E) -> HarnessError + '_ {
    let stage = stage.into();
    move |e| HarnessError::Failed {
        case: case.to_string(),
        stage,
        source: Box::new(e),
    }
}

/// One convergence study: a density, a test function, optionally a quantity
/// field, and the estimate they are checked against.
#[derive(Debug, Clone)]
pub struct StudyCase {
    pub name: String,
    pub rho: ScalarField,
    pub phi: ScalarField,
    pub omega: Option<ScalarField>,
    pub theorem: TheoremId,
    pub eps: Option<f64>,
    pub n_values: Vec<usize>,
    pub quad: QuadratureSpec,
    /// Lattice step of the truncation search.
    pub truncation_resolution: f64,
    pub sampling: SamplingParams,
}

impl StudyCase {
    pub fn new(name: impl Into<String>, theorem: TheoremId, rho: ScalarField, phi: ScalarField) -> Self {
        Self {
            name: name.into(),
            rho,
            phi,
            omega: None,
            theorem,
            eps: None,
            n_values: DEFAULT_N_VALUES.to_vec(),
            quad: QuadratureSpec::default(),
            truncation_resolution: DEFAULT_RESOLUTION,
            sampling: SamplingParams::default(),
        }
    }

    pub fn with_omega(mut self, omega: ScalarField) -> Self {
        self.omega = Some(omega);
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    pub fn with_n_values(mut self, n_values: Vec<usize>) -> Self {
        self.n_values = n_values;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidCase(format!("{}: {m}", self.name)));
        if self.name.trim().is_empty() {
            return Err(HarnessError::InvalidCase("case name must not be empty".into()));
        }
        if self.n_values.is_empty() {
            return bad("N list must not be empty".into());
        }
        if self.n_values.contains(&0) {
            return bad("N values must be positive".into());
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("N values must be strictly ascending, got {:?}", self.n_values));
        }
        if let Err(e) = self.quad.validate() {
            return bad(e.to_string());
        }
        if self.theorem.is_truncated() {
            match self.eps {
                None => return bad(format!("{} requires eps", self.theorem)),
                Some(e) if !(e > 0.0) || !e.is_finite() => return bad(format!("eps must be positive, got {e}")),
                _ => {}
            }
            if !(self.truncation_resolution > 0.0) || !self.truncation_resolution.is_finite() {
                return bad(format!(
                    "truncation resolution must be positive, got {}",
                    self.truncation_resolution
                ));
            }
        } else {
            if self.rho.support_hint().is_none() {
                return bad(format!("{} requires compact support", self.theorem));
            }
            if self.eps.is_some() {
                return bad(format!("{} takes no eps", self.theorem));
            }
        }
        Ok(())
    }
}

/// Measured error and bound at one `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub n: usize,
    pub measured_error: f64,
    pub bound: f64,
    /// `measured_error / bound`; infinite when the bound is zero and the error is not.
    pub ratio: f64,
    pub report: BoundReport,
}

impl ConvergenceRecord {
    fn new(n: usize, measured_error: f64, report: BoundReport) -> Self {
        let bound = report.bound;
        let ratio = if bound > 0.0 {
            measured_error / bound
        } else if measured_error == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            n,
            measured_error,
            bound,
            ratio,
            report,
        }
    }
}

/// Resolved norms of the three fields of a study.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StudyNorms {
    pub rho: NormData,
    pub omega: NormData,
    pub phi: NormData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    pub name: String,
    pub theorem: TheoremId,
    /// `C_L`: the density's support box, or `[-L, L]²` for truncated theorems.
    pub domain: BoxDomain,
    pub eps: Option<f64>,
    pub truncation: Option<TruncationResult>,
    pub norms: StudyNorms,
    /// Whether any norm entering a bound was estimated rather than declared.
    pub norms_estimated: bool,
    pub density: Vec<ConvergenceRecord>,
    pub quantity: Option<Vec<ConvergenceRecord>>,
}

impl StudyOutcome {
    pub fn half_width(&self) -> Option<f64> {
        self.truncation.map(|t| t.half_width)
    }

    pub fn all_records(&self) -> impl Iterator<Item = &ConvergenceRecord> {
        self.density.iter().chain(self.quantity.iter().flatten())
    }
}

fn study_domain(case: &StudyCase) -> Result<(BoxDomain, Option<TruncationResult>), HarnessError> {
    if !case.theorem.is_truncated() {
        let support = case.rho.support_hint().expect("validated");
        return Ok((support, None));
    }
    let eps = case.eps.expect("validated");
    let mass = truncation::total_mass(&case.rho, &case.quad).map_err(failed(&case.name, "total mass"))?;
    let t = find_truncation_l(&case.rho, eps, mass, case.truncation_resolution, &case.quad)
        .map_err(failed(&case.name, "truncation"))?;
    let domain = BoxDomain::centered_square(t.half_width).map_err(failed(&case.name, "truncation"))?;
    Ok((domain, Some(t)))
}

/// Fills missing norms that the bounds read, estimating over `domain`.
fn resolve_study_norms(case: &StudyCase, domain: &BoxDomain) -> Result<(StudyNorms, bool), HarnessError> {
    let mut required = bounds::required_norms(case.theorem, Variant::Density);
    if case.omega.is_some() {
        required.extend(bounds::required_norms(case.theorem, Variant::Quantity));
    }
    let mut estimated = false;
    let mut resolve = |role: FieldRole, f: &ScalarField, over: BoxDomain| -> Result<NormData, HarnessError> {
        let given = *f.norm_data();
        let missing = required.iter().any(|&(r, k)| r == role && k.get(&given).is_none());
        if !missing {
            return Ok(given);
        }
        estimated = true;
        let full =
            resolve_norms(f, &over, &case.sampling).map_err(failed(&case.name, format!("{} norms", role.as_str())))?;
        // keep only what was declared or is needed, so reports stay honest
        let mut out = given;
        for &(r, k) in &required {
            if r == role && k.get(&out).is_none() {
                let v = k.get(&full);
                match k {
                    NormKind::L1 => out.l1 = v,
                    NormKind::Sup => out.sup = v,
                    NormKind::DxSup => out.dx_sup = v,
                    NormKind::DySup => out.dy_sup = v,
                }
            }
        }
        Ok(out)
    };
    let rho_box = case.rho.support_hint().map_or(*domain, |s| s.hull(domain));
    let rho = resolve(FieldRole::Rho, &case.rho, rho_box)?;
    let phi_box = case.phi.support_hint().unwrap_or(*domain);
    let phi = resolve(FieldRole::Phi, &case.phi, phi_box)?;
    let omega = match &case.omega {
        Some(w) => resolve(FieldRole::Omega, w, w.support_hint().unwrap_or(*domain))?,
        None => NormData::default(),
    };
    Ok((StudyNorms { rho, omega, phi }, estimated))
}

struct NRecords {
    density: ConvergenceRecord,
    quantity: Option<ConvergenceRecord>,
}

fn run_one(
    case: &StudyCase,
    domain: BoxDomain,
    half_width: Option<f64>,
    norms: &StudyNorms,
    n: usize,
) -> Result<NRecords, HarnessError> {
    let stage = format!("N = {n}");
    let wrap = |e: discretize::DiscretizeError| HarnessError::Failed {
        case: case.name.clone(),
        stage: stage.clone(),
        source: Box::new(e),
    };
    let grid = make_grid(domain, n).map_err(wrap)?;
    let pc = build_density_approx(&case.rho, &grid, &case.quad).map_err(wrap)?;
    let err_d = discretize::weak_error_density(&case.rho, &pc, &case.phi, &case.quad).map_err(wrap)?;
    let inputs = BoundInputs {
        delta1: domain.delta1(),
        delta2: domain.delta2(),
        half_width,
        eps: case.eps,
        rho_norms: norms.rho,
        omega_norms: norms.omega,
        phi_norms: norms.phi,
        n,
    };
    let bound = |variant| theorem_bound(case.theorem, variant, &inputs).map_err(failed(&case.name, stage.clone()));
    let density = ConvergenceRecord::new(n, err_d, bound(Variant::Density)?);
    let quantity = match &case.omega {
        None => None,
        Some(omega) => {
            let w = cell_averages(omega, &grid, &case.quad).map_err(wrap)?;
            let pcq = build_quantity_approx(pc.values(), &w, &grid).map_err(wrap)?;
            let err_q = discretize::weak_error_quantity(&case.rho, omega, &pcq, &case.phi, &case.quad).map_err(wrap)?;
            Some(ConvergenceRecord::new(n, err_q, bound(Variant::Quantity)?))
        }
    };
    Ok(NRecords { density, quantity })
}

/// Runs one study. The truncation half-width, if any, is chosen once from `eps`
/// and shared by every `N`. Records come back in ascending `N`.
pub fn run_study(case: &StudyCase) -> Result<StudyOutcome, HarnessError> {
    case.validate()?;
    let (domain, truncation) = study_domain(case)?;
    let half_width = truncation.map(|t| t.half_width);
    // the reference integral needs a finite covering box; fail before the sweep
    let probe = make_grid(domain, 1).map_err(failed(&case.name, "grid"))?;
    let mut fields = vec![&case.rho, &case.phi];
    fields.extend(case.omega.as_ref());
    covering_box(&probe, &fields).map_err(failed(&case.name, "reference domain"))?;

    let (norms, norms_estimated) = resolve_study_norms(case, &domain)?;
    let per_n: Vec<Result<NRecords, HarnessError>> = case
        .n_values
        .par_iter()
        .map(|&n| run_one(case, domain, half_width, &norms, n))
        .collect();
    let mut density = Vec::new();
    let mut quantity = case.omega.as_ref().map(|_| Vec::new());
    for r in per_n {
        let r = r?;
        density.push(r.density);
        if let (Some(q), Some(rec)) = (quantity.as_mut(), r.quantity) {
            q.push(rec);
        }
    }
    Ok(StudyOutcome {
        name: case.name.clone(),
        theorem: case.theorem,
        domain,
        eps: case.eps,
        truncation,
        norms,
        norms_estimated,
        density,
        quantity,
    })
}

/// Least-squares fit of `log(error) = intercept + slope·log(N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_used: usize,
}

/// Fits the empirical order over records whose error exceeds `noise_floor`.
/// At least three usable records are needed.
pub fn estimate_order(records: &[ConvergenceRecord], noise_floor: f64) -> Result<OrderEstimate, HarnessError> {
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.measured_error > noise_floor && r.measured_error.is_finite())
        .map(|r| ((r.n as f64).ln(), r.measured_error.ln()))
        .collect();
    if points.len() < 3 {
        return Err(HarnessError::Insufficient(format!(
            "only {} of {} records have an error above {noise_floor:e}; widen the N range, or the field may be represented exactly",
            points.len(),
            records.len()
        )));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::Insufficient("all usable records share one N".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(OrderEstimate {
        slope,
        intercept: my - slope * mx,
        r_squared,
        n_used: points.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordCheck {
    pub n: usize,
    pub measured_error: f64,
    pub bound: f64,
    /// `(1 + slack)·bound + floor`.
    pub limit: f64,
    pub pass: bool,
    pub report: BoundReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub checks: Vec<RecordCheck>,
}

impl BoundCheck {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RecordCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// A record passes when `measured_error <= (1 + slack)·bound + floor`.
pub fn verify_bounds(records: &[ConvergenceRecord], slack: f64, floor: f64) -> BoundCheck {
    let checks = records
        .iter()
        .map(|r| {
            let limit = (1.0 + slack) * r.bound + floor;
            RecordCheck {
                n: r.n,
                measured_error: r.measured_error,
                bound: r.bound,
                limit,
                pass: r.measured_error <= limit,
                report: r.report.clone(),
            }
        })
        .collect();
    BoundCheck { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn record(n: usize, err: f64, bound: f64) -> ConvergenceRecord {
        ConvergenceRecord::new(
            n,
            err,
            BoundReport {
                theorem: TheoremId::Th1,
                variant: Variant::Density,
                constants: BTreeMap::new(),
                bound,
            },
        )
    }

    #[test]
    fn exact_power_laws() {
        let recs: Vec<_> = [4, 8, 16]
            .iter()
            .map(|&n| record(n, 3.0 / (n * n) as f64, 1.0))
            .collect();
        let o = estimate_order(&recs, 0.0).unwrap();
        assert!((o.slope + 2.0).abs() < 1e-12);
        assert!((o.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(o.n_used, 3);
        let recs: Vec<_> = [4, 8, 16, 32].iter().map(|&n| record(n, 0.5 / n as f64, 1.0)).collect();
        assert!((estimate_order(&recs, 0.0).unwrap().slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn order_needs_three_usable_records() {
        let recs = vec![record(4, 1e-3, 1.0), record(8, 1e-14, 1.0), record(16, 0.0, 1.0)];
        assert!(matches!(
            estimate_order(&recs, 1e-10),
            Err(HarnessError::Insufficient(_))
        ));
    }

    #[test]
    fn bound_check_examples() {
        assert!(verify_bounds(&[record(4, 0.03, 0.04)], 0.0, 0.0).all_pass());
        let c = verify_bounds(&[record(4, 0.05, 0.04)], 0.0, 0.0);
        assert!(!c.all_pass());
        assert_eq!(c.failures().count(), 1);
    }

    proptest! {
        #[test]
        fn doubling_slack_keeps_passes(err in 0.0f64..2.0, bound in 0.0f64..2.0, slack in 0.0f64..1.0) {
            let r = [record(4, err, bound)];
            if verify_bounds(&r, slack, 1e-9).all_pass() {
                prop_assert!(verify_bounds(&r, 2.0 * slack, 1e-9).all_pass());
            }
        }
    }

    #[test]
    fn case_validation() {
        let bump = builtins::cosine_squared_bump(0.0, 0.0, 1.0).unwrap();
        let gauss = builtins::gaussian(0.0, 0.0, 1.0).unwrap();
        let ok = StudyCase::new("a", TheoremId::Th1, bump.clone(), bump.clone());
        assert!(ok.validate().is_ok());
        let e = StudyCase::new("b", TheoremId::Th1, gauss.clone(), bump.clone())
            .validate()
            .unwrap_err();
        assert!(e.to_string().contains("th1 requires compact support"));
        let e = StudyCase::new("c", TheoremId::Th2, gauss.clone(), bump.clone())
            .validate()
            .unwrap_err();
        assert!(e.to_string().contains("requires eps"));
        let e = ok.clone().with_n_values(vec![4, 8, 8]).validate().unwrap_err();
        assert!(e.to_string().contains("strictly ascending"));
        assert!(ok.clone().with_n_values(vec![]).validate().is_err());
    }

    #[test]
    fn constant_density_is_exact() {
        let unit = BoxDomain::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let rho = builtins::constant(1.0, Some(unit)).unwrap();
        let phi = builtins::cosine_squared_bump(0.5, 0.5, 0.75).unwrap();
        let case = StudyCase::new("flat", TheoremId::Th3, rho, phi).with_n_values(vec![2, 4]);
        let out = run_study(&case).unwrap();
        assert_eq!(out.density.len(), 2);
        for r in &out.density {
            assert!(r.measured_error < 1e-14, "{}", r.measured_error);
        }
        assert!(!out.norms_estimated);
    }

    #[test]
    fn smooth_th1_study_respects_bound() {
        let bump = builtins::cosine_squared_bump(0.0, 0.0, 1.0).unwrap();
        let case = StudyCase::new("smooth", TheoremId::Th1, bump.clone(), bump.clone())
            .with_omega(bump)
            .with_n_values(vec![4, 8, 16, 32]);
        let out = run_study(&case).unwrap();
        assert!(verify_bounds(&out.density, 0.0, DEFAULT_BOUND_FLOOR).all_pass());
        assert!(verify_bounds(out.quantity.as_ref().unwrap(), 0.0, DEFAULT_BOUND_FLOOR).all_pass());
        let o = estimate_order(&out.density, 100.0 * case.quad.target_rel_tol).unwrap();
        assert!(o.slope <= -1.9, "{o:?}");
        for w in out.density.windows(2) {
            assert!(w[0].n < w[1].n);
        }
    }

    #[test]
    fn truncated_study_shares_one_half_width() {
        let gauss = builtins::gaussian(0.0, 0.0, 1.0).unwrap();
        let bump = builtins::cosine_squared_bump(0.0, 0.0, 1.0).unwrap();
        let case = StudyCase::new("gauss", TheoremId::Th2, gauss, bump)
            .with_eps(1e-3)
            .with_n_values(vec![4, 8]);
        let out = run_study(&case).unwrap();
        let l = out.half_width().unwrap();
        assert!((2.6..=2.9).contains(&l), "{l}");
        for r in &out.density {
            assert_eq!(r.report.constants["L"], l);
            assert!(r.measured_error <= r.bound);
        }
    }

    #[test]
    fn missing_norms_are_estimated_and_flagged() {
        let unit = BoxDomain::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let rho = ScalarField::new(|x, y| 1.0 + x * y).with_support(unit);
        let phi = builtins::cosine_squared_bump(0.5, 0.5, 0.5).unwrap();
        let case = StudyCase::new("est", TheoremId::Th3, rho, phi).with_n_values(vec![2, 4]);
        let out = run_study(&case).unwrap();
        assert!(out.norms_estimated);
        assert!((out.norms.rho.sup.unwrap() - 2.0).abs() < 1e-12);
        assert!((out.norms.rho.l1.unwrap() - 1.25).abs() < 1e-12);
        assert_eq!(out.norms.rho.dx_sup, None);
    }
}
