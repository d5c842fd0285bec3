//! Confidence intervals from a data-driven criterion localization.
//!
//! The calibrated slack level κ̂ — a bootstrap quantile, a χ² quantile, or
//! a user-supplied constant — defines one set of mixtures compatible with
//! the data. Interval endpoints are slack bounds at κ̂, so every interval
//! computed from the same localization inherits simultaneous coverage:
//! whenever the true mixture lies in the set, all bounds hold at once.

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bounds::{solve_slack, BoundConstraint, BoundQuery, BoundValue, Direction};
use crate::error::{Error, Result};
use crate::estimands::RatioEstimand;
use crate::gmm::{kappa_quantile, BootstrapResult, WeightingMatrix};
use crate::ingest::EmpiricalPmf;
use crate::model::{ExperimentDesign, LikelihoodMatrix};
use crate::rng::splitmix64;

/// How the slack level κ̂ was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum KappaProvenance {
    /// Quantile of the parametric projection bootstrap.
    Bootstrap { b: u32, seed: u64 },
    /// χ² quantile heuristic; the constrained null distribution is not
    /// exactly χ², so treat as a bootstrap-free fallback.
    Chi2 { df: u32 },
    /// Fixed by the caller.
    User,
}

/// A calibrated constraint set: all mixtures within criterion slack κ̂ of
/// the data.
#[derive(Debug, Clone, Serialize)]
pub struct FLocalization {
    kappa_hat: f64,
    alpha: f64,
    provenance: KappaProvenance,
}

impl FLocalization {
    pub fn new(kappa_hat: f64, alpha: f64, provenance: KappaProvenance) -> Result<Self> {
        if !kappa_hat.is_finite() || kappa_hat < 0.0 {
            return Err(Error::Domain(format!(
                "slack level must be finite and nonnegative, got {kappa_hat}"
            )));
        }
        check_alpha(alpha)?;
        Ok(Self {
            kappa_hat,
            alpha,
            provenance,
        })
    }

    pub fn kappa_hat(&self) -> f64 {
        self.kappa_hat
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn provenance(&self) -> KappaProvenance {
        self.provenance
    }
}

/// Which interval endpoints to compute; the omitted side is reported as
/// the corresponding infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalSides {
    Both,
    LowerOnly,
    UpperOnly,
}

/// One estimand in a simultaneous family, with its endpoint convention.
#[derive(Debug, Clone)]
pub struct CiRequest {
    estimand: RatioEstimand,
    sides: IntervalSides,
}

impl CiRequest {
    pub fn new(estimand: RatioEstimand, sides: IntervalSides) -> Self {
        Self { estimand, sides }
    }

    pub fn estimand(&self) -> &RatioEstimand {
        &self.estimand
    }

    pub fn sides(&self) -> IntervalSides {
        self.sides
    }
}

/// A confidence interval for one estimand, valid simultaneously with every
/// other interval sharing its `family_id`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    estimand: String,
    #[serde(serialize_with = "serialize_extended")]
    lower: f64,
    #[serde(serialize_with = "serialize_extended")]
    upper: f64,
    alpha: f64,
    simultaneous_family_id: String,
}

impl ConfidenceInterval {
    pub fn estimand(&self) -> &str {
        &self.estimand
    }

    /// Lower endpoint; `-inf` when the lower side was not requested or is
    /// unbounded.
    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Upper endpoint; `+inf` when the upper side was not requested or is
    /// unbounded.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Fingerprint of the shared inputs (κ̂, f̄, W, n): intervals with equal
    /// ids were solved over the same constraint set and cover jointly.
    pub fn simultaneous_family_id(&self) -> &str {
        &self.simultaneous_family_id
    }
}

fn serialize_extended<S: Serializer>(
    v: &f64,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        serializer.serialize_f64(*v)
    } else if *v > 0.0 {
        serializer.serialize_str("+inf")
    } else {
        serializer.serialize_str("-inf")
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && 0.0 < alpha && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level must satisfy 0 < alpha < 1, got {alpha}"
        )));
    }
    Ok(())
}

/// Calibrate κ̂ as the bootstrap `1−α` quantile of the projected criterion.
pub fn calibrate(boot: &BootstrapResult, alpha: f64) -> Result<FLocalization> {
    check_alpha(alpha)?;
    let kappa_hat = kappa_quantile(boot, alpha)?;
    FLocalization::new(
        kappa_hat,
        alpha,
        KappaProvenance::Bootstrap {
            b: boot.b(),
            seed: boot.seed(),
        },
    )
}

/// Bootstrap-free fallback: κ̂ as the `1−α` quantile of χ² with
/// `(L+1)² − 1` degrees of freedom, one per free pattern probability. The
/// constrained criterion is not exactly χ², so this over-covers in
/// well-specified models; prefer the bootstrap when affordable.
pub fn chi2_localization(design: &ExperimentDesign, alpha: f64) -> Result<FLocalization> {
    check_alpha(alpha)?;
    let df = design.pattern_count() as u32 - 1;
    let chi2 = ChiSquared::new(f64::from(df))
        .map_err(|e| Error::Domain(format!("chi-squared with {df} degrees of freedom: {e}")))?;
    FLocalization::new(
        chi2.inverse_cdf(1.0 - alpha),
        alpha,
        KappaProvenance::Chi2 { df },
    )
}

/// Fixed, user-chosen κ̂.
pub fn fixed_localization(kappa_hat: f64, alpha: f64) -> Result<FLocalization> {
    FLocalization::new(kappa_hat, alpha, KappaProvenance::User)
}

/// Simultaneous confidence intervals for a family of estimands over the
/// localized constraint set.
///
/// All members share one κ̂ and one `(f̄, W, n)`; that shared structure is
/// what delivers simultaneity, and it is fingerprinted into each interval's
/// family id. An empty constraint set at κ̂ rejects the mixture model
/// itself and fails the whole family; an undefined conditioning event is a
/// per-estimand defect and is reported in that estimand's slot only.
pub fn confidence_interval(
    floc: &FLocalization,
    family: &[CiRequest],
    a: &LikelihoodMatrix,
    fbar: &EmpiricalPmf,
    w: &WeightingMatrix,
    n: u64,
) -> Result<Vec<Result<ConfidenceInterval>>> {
    if family.is_empty() {
        return Err(Error::Validation(
            "confidence-interval family is empty".into(),
        ));
    }
    let family_id = family_fingerprint(floc.kappa_hat(), fbar, w, n);

    let outcomes: Vec<Result<ConfidenceInterval>> = family
        .par_iter()
        .map(|request| {
            let endpoint = |direction: Direction| -> Result<f64> {
                let query = BoundQuery::new(
                    request.estimand().clone(),
                    direction,
                    BoundConstraint::Slack {
                        kappa: floc.kappa_hat(),
                        fbar: fbar.clone(),
                        w: w.clone(),
                        n,
                    },
                )?;
                let result = solve_slack(&query, a)?;
                match result.value() {
                    BoundValue::Finite(v) => Ok(v),
                    BoundValue::PosInfinite => Ok(f64::INFINITY),
                    BoundValue::NegInfinite => Ok(f64::NEG_INFINITY),
                    BoundValue::Infeasible => Err(Error::SpecificationTest(format!(
                        "no mixture is within slack {} of the data at level {}",
                        floc.kappa_hat(),
                        floc.alpha()
                    ))),
                }
            };
            let lower = match request.sides() {
                IntervalSides::UpperOnly => f64::NEG_INFINITY,
                _ => endpoint(Direction::Lower)?,
            };
            let upper = match request.sides() {
                IntervalSides::LowerOnly => f64::INFINITY,
                _ => endpoint(Direction::Upper)?,
            };
            Ok(ConfidenceInterval {
                estimand: request.estimand().label().to_owned(),
                lower,
                upper,
                alpha: floc.alpha(),
                simultaneous_family_id: family_id.clone(),
            })
        })
        .collect();

    // An empty constraint set does not depend on the estimand: escalate the
    // first specification-test rejection to the whole family.
    if let Some(rejection) = outcomes.iter().find_map(|o| match o {
        Err(Error::SpecificationTest(msg)) => Some(msg.clone()),
        _ => None,
    }) {
        return Err(Error::SpecificationTest(rejection));
    }
    Ok(outcomes)
}

/// Deterministic fingerprint of the inputs every family member must share.
fn family_fingerprint(kappa_hat: f64, fbar: &EmpiricalPmf, w: &WeightingMatrix, n: u64) -> String {
    let mut h = 0x6c62_272e_07bb_0142_u64;
    let mut absorb = |bits: u64| h = splitmix64(h ^ bits);
    absorb(kappa_hat.to_bits());
    absorb(n);
    for v in fbar.values() {
        absorb(v.to_bits());
    }
    for i in 0..w.dim() {
        for j in 0..w.dim() {
            absorb(w.entry(i, j).to_bits());
        }
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimands::discr_estimand;
    use crate::gmm::{bootstrap_jopt, default_weighting, project};
    use crate::model::{build_grid, likelihood_matrix, CallbackPattern};
    use approx::assert_abs_diff_eq;

    fn uniform_fixture() -> (LikelihoodMatrix, EmpiricalPmf, WeightingMatrix, u64) {
        let grid = build_grid(3).unwrap();
        let design = ExperimentDesign::new(1).unwrap();
        let a = likelihood_matrix(&grid, &design).unwrap();
        let n = 400;
        let fbar = EmpiricalPmf::from_raw(vec![0.25; 4], n);
        let w = default_weighting(&fbar, n);
        (a, fbar, w, n)
    }

    fn discr_request(a: &LikelihoodMatrix, sides: IntervalSides) -> CiRequest {
        let grid = build_grid(3).unwrap();
        let est = discr_estimand(CallbackPattern::new(1, 0), &grid, a.design()).unwrap();
        CiRequest::new(est, sides)
    }

    #[test]
    fn chi2_quantiles_match_reference_values() {
        let floc = chi2_localization(&ExperimentDesign::new(2).unwrap(), 0.05).unwrap();
        assert_eq!(floc.provenance(), KappaProvenance::Chi2 { df: 8 });
        assert_abs_diff_eq!(floc.kappa_hat(), 15.50731, epsilon = 1e-4);
        let floc = chi2_localization(&ExperimentDesign::new(1).unwrap(), 0.05).unwrap();
        assert_eq!(floc.provenance(), KappaProvenance::Chi2 { df: 3 });
        assert_abs_diff_eq!(floc.kappa_hat(), 7.81473, epsilon = 1e-4);
    }

    #[test]
    fn calibrate_records_bootstrap_provenance() {
        let boot = BootstrapResult::from_raw((1..=100).map(f64::from).collect(), 42, 100, 0);
        let floc = calibrate(&boot, 0.05).unwrap();
        assert_eq!(floc.kappa_hat(), 95.0);
        assert_eq!(
            floc.provenance(),
            KappaProvenance::Bootstrap { b: 100, seed: 42 }
        );
    }

    #[test]
    fn degenerate_bootstrap_collapses_to_equality_bounds() {
        let (a, fbar, w, n) = uniform_fixture();
        let boot = BootstrapResult::from_raw(vec![0.0; 50], 7, 50, 0);
        let floc = calibrate(&boot, 0.05).unwrap();
        assert_eq!(floc.kappa_hat(), 0.0);
        let family = vec![discr_request(&a, IntervalSides::Both)];
        let cis = confidence_interval(&floc, &family, &a, &fbar, &w, n).unwrap();
        let ci = cis[0].as_ref().unwrap();
        // κ̂ = 0 is the empirical-equality constraint; the uniform pmf is a
        // mixture marginal, so the interval is the identified set itself.
        use crate::bounds::{solve_linear_constraint, BoundConstraint, BoundQuery, Direction};
        let est = discr_request(&a, IntervalSides::Both).estimand().clone();
        let exact_lower = solve_linear_constraint(
            &BoundQuery::new(
                est.clone(),
                Direction::Lower,
                BoundConstraint::Empirical(fbar.clone()),
            )
            .unwrap(),
            &a,
        )
        .unwrap();
        let exact_upper = solve_linear_constraint(
            &BoundQuery::new(
                est,
                Direction::Upper,
                BoundConstraint::Empirical(fbar.clone()),
            )
            .unwrap(),
            &a,
        )
        .unwrap();
        assert_abs_diff_eq!(
            ci.lower(),
            exact_lower.value().as_finite().unwrap(),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            ci.upper(),
            exact_upper.value().as_finite().unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn intervals_nest_as_alpha_shrinks() {
        let (a, fbar, w, n) = uniform_fixture();
        let fit = project(&fbar, &a, &w, n).unwrap();
        let boot = bootstrap_jopt(&fit, &a, n, 60, 99).unwrap();
        let tight = calibrate(&boot, 0.20).unwrap();
        let wide = calibrate(&boot, 0.05).unwrap();
        assert!(wide.kappa_hat() >= tight.kappa_hat());
        let family = vec![discr_request(&a, IntervalSides::Both)];
        let ci_tight = confidence_interval(&tight, &family, &a, &fbar, &w, n).unwrap();
        let ci_wide = confidence_interval(&wide, &family, &a, &fbar, &w, n).unwrap();
        let (t, v) = (ci_tight[0].as_ref().unwrap(), ci_wide[0].as_ref().unwrap());
        assert!(v.lower() <= t.lower() + 1e-9);
        assert!(t.upper() <= v.upper() + 1e-9);
    }

    #[test]
    fn family_members_share_the_fingerprint() {
        let (a, fbar, w, n) = uniform_fixture();
        let floc = fixed_localization(2.0, 0.05).unwrap();
        let grid = build_grid(3).unwrap();
        let family = vec![
            discr_request(&a, IntervalSides::Both),
            CiRequest::new(
                discr_estimand(CallbackPattern::new(0, 1), &grid, a.design()).unwrap(),
                IntervalSides::Both,
            ),
        ];
        let cis = confidence_interval(&floc, &family, &a, &fbar, &w, n).unwrap();
        let first = cis[0].as_ref().unwrap();
        let second = cis[1].as_ref().unwrap();
        assert_eq!(
            first.simultaneous_family_id(),
            second.simultaneous_family_id()
        );
        assert!(first.lower() <= first.upper());
        // A different κ̂ lands in a different family.
        let other = fixed_localization(3.0, 0.05).unwrap();
        let cis_other = confidence_interval(&other, &family, &a, &fbar, &w, n).unwrap();
        assert_ne!(
            cis_other[0].as_ref().unwrap().simultaneous_family_id(),
            first.simultaneous_family_id()
        );
    }

    #[test]
    fn one_sided_requests_leave_the_other_end_unbounded() {
        let (a, fbar, w, n) = uniform_fixture();
        let floc = fixed_localization(1.0, 0.05).unwrap();
        let family = vec![
            discr_request(&a, IntervalSides::LowerOnly),
            discr_request(&a, IntervalSides::UpperOnly),
        ];
        let cis = confidence_interval(&floc, &family, &a, &fbar, &w, n).unwrap();
        let lower_only = cis[0].as_ref().unwrap();
        assert!(lower_only.lower().is_finite());
        assert_eq!(lower_only.upper(), f64::INFINITY);
        let upper_only = cis[1].as_ref().unwrap();
        assert_eq!(upper_only.lower(), f64::NEG_INFINITY);
        assert!(upper_only.upper().is_finite());
    }

    #[test]
    fn empty_constraint_set_rejects_the_specification() {
        let grid = build_grid(3).unwrap();
        let design = ExperimentDesign::new(2).unwrap();
        let a = likelihood_matrix(&grid, &design).unwrap();
        let n = 200;
        let mut values = vec![0.0; 9];
        values[4] = 1.0; // concentrated on one callback per group: not a mixture marginal
        let fbar = EmpiricalPmf::from_raw(values, n);
        let w = default_weighting(&fbar, n);
        let fit = project(&fbar, &a, &w, n).unwrap();
        let floc = fixed_localization(fit.j_opt() * 0.5, 0.05).unwrap();
        let est = discr_estimand(CallbackPattern::new(1, 1), &grid, &design).unwrap();
        let family = vec![CiRequest::new(est, IntervalSides::Both)];
        assert!(matches!(
            confidence_interval(&floc, &family, &a, &fbar, &w, n),
            Err(Error::SpecificationTest(_))
        ));
    }

    #[test]
    fn interval_serializes_infinities_as_strings() {
        let ci = ConfidenceInterval {
            estimand: "discr(1,0)".into(),
            lower: 0.25,
            upper: f64::INFINITY,
            alpha: 0.05,
            simultaneous_family_id: "abc".into(),
        };
        let json = serde_json::to_string(&ci).unwrap();
        assert!(json.contains("\"upper\":\"+inf\""));
        assert!(json.contains("\"lower\":0.25"));
    }

    #[test]
    fn alpha_is_validated() {
        assert!(fixed_localization(1.0, 0.0).is_err());
        assert!(fixed_localization(1.0, 1.0).is_err());
        assert!(fixed_localization(-1.0, 0.05).is_err());
        let boot = BootstrapResult::from_raw(vec![1.0], 0, 1, 0);
        assert!(calibrate(&boot, 1.5).is_err());
    }
}
