//! Posterior discrimination estimands as ratios of linear functionals.
//!
//! Every estimand here has the form `N(G; z) / D(G; z)` where both the
//! numerator and denominator are linear in the mixture weights. Coefficient
//! vectors over the grid are precomputed once; evaluation and bound solving
//! then only ever see two dot products.
//!
//! The posterior-odds coefficients accumulate the "a ahead" and "b ahead"
//! outcome sums with the same loop structure over swapped pmf tables, so on
//! diagonal grid points the two coefficients are bitwise equal and
//! no-discrimination ensembles yield an odds ratio of exactly 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    binom_pmf, likelihood, CallbackPattern, ExperimentDesign, Grid, MixtureWeights,
};

/// A ratio `N/D` of linear functionals of the mixture, with one coefficient
/// per grid point in each vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimand {
    numerator_coeffs: Vec<f64>,
    denominator_coeffs: Vec<f64>,
    label: String,
    conditioning_pattern: Option<CallbackPattern>,
}

impl RatioEstimand {
    /// Assembles a custom ratio estimand. Coefficient vectors must have
    /// equal length, finite entries, and a nonnegative denominator.
    pub fn from_parts(
        numerator_coeffs: Vec<f64>,
        denominator_coeffs: Vec<f64>,
        label: impl Into<String>,
        conditioning_pattern: Option<CallbackPattern>,
    ) -> Result<Self> {
        if numerator_coeffs.len() != denominator_coeffs.len() {
            return Err(Error::Dimension(format!(
                "numerator has {} coefficients, denominator {}",
                numerator_coeffs.len(),
                denominator_coeffs.len()
            )));
        }
        if numerator_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(
                "numerator coefficients must be finite".into(),
            ));
        }
        if denominator_coeffs
            .iter()
            .any(|c| !c.is_finite() || *c < 0.0)
        {
            return Err(Error::Domain(
                "denominator coefficients must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            numerator_coeffs,
            denominator_coeffs,
            label: label.into(),
            conditioning_pattern,
        })
    }

    pub fn numerator_coeffs(&self) -> &[f64] {
        &self.numerator_coeffs
    }

    pub fn denominator_coeffs(&self) -> &[f64] {
        &self.denominator_coeffs
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The pattern the estimand conditions on; `None` for unconditional
    /// (population-share) estimands whose denominator is identically 1.
    pub fn conditioning_pattern(&self) -> Option<CallbackPattern> {
        self.conditioning_pattern
    }

    pub fn len(&self) -> usize {
        self.numerator_coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerator_coeffs.is_empty()
    }
}

/// Posterior callback odds ratio request: condition on pattern `z`, compare
/// counterfactual callback counts from `l_prime` fresh applications per
/// group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OddsRatioSpec {
    z: CallbackPattern,
    l_prime: u32,
}

impl OddsRatioSpec {
    pub fn new(z: CallbackPattern, l_prime: u32) -> Result<Self> {
        if l_prime < 1 {
            return Err(Error::Domain(
                "counterfactual applications per group must be at least 1".into(),
            ));
        }
        Ok(Self { z, l_prime })
    }

    pub fn z(&self) -> CallbackPattern {
        self.z
    }

    pub fn l_prime(&self) -> u32 {
        self.l_prime
    }
}

/// Shared builder for estimands of the posterior-mean form
/// `E[h(theta) | Z=z]`: numerator coefficient `h(theta_l) * p(z|theta_l)`,
/// denominator coefficient `p(z|theta_l)`.
fn posterior_mean_estimand(
    z: CallbackPattern,
    grid: &Grid,
    design: &ExperimentDesign,
    label: String,
    h: impl Fn(f64, f64) -> f64,
) -> Result<RatioEstimand> {
    design.validate_pattern(z)?;
    let mut num = Vec::with_capacity(grid.len());
    let mut den = Vec::with_capacity(grid.len());
    for &(p_a, p_b) in grid.points() {
        let lik = likelihood(z, (p_a, p_b), design)?;
        num.push(h(p_a, p_b) * lik);
        den.push(lik);
    }
    RatioEstimand::from_parts(num, den, label, Some(z))
}

/// Posterior probability that a job with pattern `z` favors group a:
/// `P[p_a > p_b | Z=z]`.
pub fn discr_estimand(
    z: CallbackPattern,
    grid: &Grid,
    design: &ExperimentDesign,
) -> Result<RatioEstimand> {
    posterior_mean_estimand(z, grid, design, format!("discr{z}"), |p_a, p_b| {
        if p_a > p_b {
            1.0
        } else {
            0.0
        }
    })
}

/// Posterior probability of unequal latent rates: `P[p_a != p_b | Z=z]`.
pub fn neq_estimand(
    z: CallbackPattern,
    grid: &Grid,
    design: &ExperimentDesign,
) -> Result<RatioEstimand> {
    posterior_mean_estimand(z, grid, design, format!("neq{z}"), |p_a, p_b| {
        if p_a != p_b {
            1.0
        } else {
            0.0
        }
    })
}

/// Posterior mean of the logistic gap `sigma(logit(p_a) - logit(p_b))`,
/// extended to the endpoints by monotone limits: 1 when group a's rate is
/// at 1 or group b's at 0 (one-sidedly), 0 in the mirror cases, 0.5 when
/// both rates sit on the same endpoint.
pub fn logit_estimand(
    z: CallbackPattern,
    grid: &Grid,
    design: &ExperimentDesign,
) -> Result<RatioEstimand> {
    posterior_mean_estimand(z, grid, design, format!("logit{z}"), logit_gap)
}

fn logit_gap(p_a: f64, p_b: f64) -> f64 {
    let a0 = p_a == 0.0;
    let a1 = p_a == 1.0;
    let b0 = p_b == 0.0;
    let b1 = p_b == 1.0;
    if (a0 && b0) || (a1 && b1) {
        return 0.5;
    }
    if a1 || b0 {
        return 1.0;
    }
    if a0 || b1 {
        return 0.0;
    }
    let gap_a = (p_a / (1.0 - p_a)).ln();
    let gap_b = (p_b / (1.0 - p_b)).ln();
    1.0 / (1.0 + (gap_b - gap_a).exp())
}

/// Posterior odds that group a collects strictly more callbacks than group
/// b from `l_prime` fresh applications each, conditional on `z`, relative
/// to the reverse event.
pub fn odds_estimand(
    spec: OddsRatioSpec,
    grid: &Grid,
    design: &ExperimentDesign,
) -> Result<RatioEstimand> {
    design.validate_pattern(spec.z)?;
    let l_prime = spec.l_prime;

    // One counterfactual pmf table per distinct axis value.
    let mut pmf_cache: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut pmf_for = |p: f64| -> Result<Vec<f64>> {
        if let Some((_, pmf)) = pmf_cache.iter().find(|(v, _)| *v == p) {
            return Ok(pmf.clone());
        }
        let pmf: Vec<f64> = (0..=l_prime)
            .map(|c| binom_pmf(c, l_prime, p))
            .collect::<Result<_>>()?;
        pmf_cache.push((p, pmf.clone()));
        Ok(pmf)
    };

    let mut num = Vec::with_capacity(grid.len());
    let mut den = Vec::with_capacity(grid.len());
    for &(p_a, p_b) in grid.points() {
        let lik = likelihood(spec.z, (p_a, p_b), design)?;
        let pmf_a = pmf_for(p_a)?;
        let pmf_b = pmf_for(p_b)?;
        num.push(ahead_probability(&pmf_a, &pmf_b) * lik);
        den.push(ahead_probability(&pmf_b, &pmf_a) * lik);
    }
    RatioEstimand::from_parts(
        num,
        den,
        format!("odds{},Lprime={}", spec.z, l_prime),
        Some(spec.z),
    )
}

/// `P[X > Y]` for independent counts with pmfs `lead` and `trail`. Both
/// orderings of a pair run this identical summation, so swapping equal pmfs
/// reproduces the exact same floating-point value.
fn ahead_probability(lead: &[f64], trail: &[f64]) -> f64 {
    let top = lead.len(); // l_prime + 1
    let mut total = 0.0;
    for (j, &t) in trail.iter().enumerate().take(top - 1) {
        let mut above = 0.0;
        for &l in &lead[j + 1..] {
            above += l;
        }
        total += above * t;
    }
    total
}

/// Population share of jobs favoring group a, `P[p_a > p_b]`, as a ratio
/// with denominator identically 1 (no conditioning).
pub fn discr_share_estimand(grid: &Grid) -> RatioEstimand {
    let num: Vec<f64> = grid
        .points()
        .iter()
        .map(|&(p_a, p_b)| if p_a > p_b { 1.0 } else { 0.0 })
        .collect();
    let den = vec![1.0; grid.len()];
    RatioEstimand::from_parts(num, den, "discr_share", None)
        .expect("share coefficients are valid by construction")
}

/// Evaluates `N(pi)/D(pi)`. Returns `+inf` when the denominator is zero
/// with positive numerator; a zero-probability conditioning event (0/0) is
/// an error, never a silent default.
pub fn evaluate(est: &RatioEstimand, pi: &MixtureWeights) -> Result<f64> {
    if est.len() != pi.len() {
        return Err(Error::Dimension(format!(
            "estimand has {} coefficients but mixture has {} weights",
            est.len(),
            pi.len()
        )));
    }
    let num = dot(est.numerator_coeffs(), pi.weights());
    let den = dot(est.denominator_coeffs(), pi.weights());
    if den == 0.0 {
        if num == 0.0 {
            return Err(Error::UndefinedConditioning(format!(
                "estimand {} conditions on an event of probability zero",
                est.label()
            )));
        }
        return Ok(f64::INFINITY);
    }
    Ok(num / den)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Posterior odds ratio in the limit of infinitely many counterfactual
/// applications: ties split evenly, so the value is
/// `(P[p_a = p_b | z]/2 + P[p_a > p_b | z]) / (P[p_a = p_b | z]/2 + P[p_a < p_b | z])`.
pub fn odds_limit(
    pi: &MixtureWeights,
    z: CallbackPattern,
    grid: &Grid,
    design: &ExperimentDesign,
) -> Result<f64> {
    if pi.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "mixture has {} weights but the grid has {} points",
            pi.len(),
            grid.len()
        )));
    }
    design.validate_pattern(z)?;
    let mut mass_gt = 0.0;
    let mut mass_lt = 0.0;
    let mut mass_eq = 0.0;
    for (l, &(p_a, p_b)) in grid.points().iter().enumerate() {
        let w = pi.weights()[l];
        if w == 0.0 {
            continue;
        }
        let joint = w * likelihood(z, (p_a, p_b), design)?;
        if p_a > p_b {
            mass_gt += joint;
        } else if p_a < p_b {
            mass_lt += joint;
        } else {
            mass_eq += joint;
        }
    }
    let num = mass_eq / 2.0 + mass_gt;
    let den = mass_eq / 2.0 + mass_lt;
    if den == 0.0 {
        if num == 0.0 {
            return Err(Error::UndefinedConditioning(format!(
                "pattern {z} has probability zero under the mixture"
            )));
        }
        return Ok(f64::INFINITY);
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_grid;
    use approx::assert_abs_diff_eq;

    fn design(l: u32) -> ExperimentDesign {
        ExperimentDesign::new(l).unwrap()
    }

    /// Two-point latent support {0.2, 0.7} on each axis.
    fn small_grid() -> Grid {
        Grid::from_axis(&[0.2, 0.7]).unwrap()
    }

    fn point_index(grid: &Grid, p: (f64, f64)) -> usize {
        grid.points().iter().position(|&q| q == p).unwrap()
    }

    #[test]
    fn discr_coefficient_is_gated_likelihood() {
        let grid = small_grid();
        let d = design(1);
        let z = CallbackPattern::new(1, 0);
        let est = discr_estimand(z, &grid, &d).unwrap();
        let favored = point_index(&grid, (0.7, 0.2));
        assert_abs_diff_eq!(est.numerator_coeffs()[favored], 0.7 * 0.8, epsilon = 1e-15);
        assert_eq!(
            est.numerator_coeffs()[favored],
            est.denominator_coeffs()[favored]
        );
    }

    #[test]
    fn discr_coefficient_zero_on_diagonal() {
        let grid = build_grid(3).unwrap();
        let d = design(1);
        let est = discr_estimand(CallbackPattern::new(1, 0), &grid, &d).unwrap();
        for idx in grid.diagonal_indices() {
            assert_eq!(est.numerator_coeffs()[idx], 0.0);
        }
    }

    #[test]
    fn discr_vectors_match_hand_enumeration() {
        let grid = build_grid(3).unwrap();
        let d = design(1);
        let z = CallbackPattern::new(1, 0);
        let est = discr_estimand(z, &grid, &d).unwrap();
        for (l, &(p_a, p_b)) in grid.points().iter().enumerate() {
            // L = 1 likelihood written out directly.
            let lik = p_a * (1.0 - p_b);
            let ind = if p_a > p_b { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(est.numerator_coeffs()[l], ind * lik, epsilon = 1e-15);
            assert_abs_diff_eq!(est.denominator_coeffs()[l], lik, epsilon = 1e-15);
        }
    }

    #[test]
    fn neq_diagonal_zero_and_corner_one() {
        let grid = build_grid(3).unwrap();
        let d = design(1);
        let z = CallbackPattern::new(1, 0);
        let est = neq_estimand(z, &grid, &d).unwrap();
        for idx in grid.diagonal_indices() {
            assert_eq!(est.numerator_coeffs()[idx], 0.0);
        }
        let corner = point_index(&grid, (1.0, 0.0));
        assert_eq!(est.numerator_coeffs()[corner], 1.0);
    }

    #[test]
    fn neq_vectors_match_hand_enumeration() {
        let grid = build_grid(3).unwrap();
        let d = design(1);
        let z = CallbackPattern::new(0, 1);
        let est = neq_estimand(z, &grid, &d).unwrap();
        for (l, &(p_a, p_b)) in grid.points().iter().enumerate() {
            let lik = (1.0 - p_a) * p_b;
            let ind = if p_a != p_b { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(est.numerator_coeffs()[l], ind * lik, epsilon = 1e-15);
        }
    }

    #[test]
    fn logit_gap_interior_diagonal_is_half() {
        assert_eq!(logit_gap(0.3, 0.3), 0.5);
        assert_eq!(logit_gap(0.5, 0.5), 0.5);
    }

    #[test]
    fn logit_gap_known_value() {
        // logit(0.8) - logit(0.5) = ln 4, and sigma(ln 4) = 0.8.
        assert_abs_diff_eq!(logit_gap(0.8, 0.5), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn logit_gap_endpoint_conventions() {
        assert_eq!(logit_gap(1.0, 0.0), 1.0);
        assert_eq!(logit_gap(0.0, 1.0), 0.0);
        assert_eq!(logit_gap(0.0, 0.0), 0.5);
        assert_eq!(logit_gap(1.0, 1.0), 0.5);
        assert_eq!(logit_gap(0.5, 0.0), 1.0);
        assert_eq!(logit_gap(1.0, 0.5), 1.0);
        assert_eq!(logit_gap(0.0, 0.5), 0.0);
        assert_eq!(logit_gap(0.5, 1.0), 0.0);
    }

    #[test]
    fn odds_single_application_brackets() {
        let grid = small_grid();
        let d = design(1);
        let z = CallbackPattern::new(1, 0);
        let spec = OddsRatioSpec::new(z, 1).unwrap();
        let est = odds_estimand(spec, &grid, &d).unwrap();
        let idx = point_index(&grid, (0.7, 0.2));
        let lik = 0.7 * 0.8;
        // Single counterfactual application: bracket pair is
        // (p_a (1-p_b), p_b (1-p_a)).
        assert_abs_diff_eq!(
            est.numerator_coeffs()[idx],
            0.7 * 0.8 * lik,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            est.denominator_coeffs()[idx],
            0.2 * 0.3 * lik,
            epsilon = 1e-15
        );
    }

    #[test]
    fn odds_diagonal_coefficients_bitwise_equal() {
        let grid = build_grid(5).unwrap();
        let d = design(2);
        for l_prime in [1, 2, 4, 7] {
            let spec = OddsRatioSpec::new(CallbackPattern::new(2, 1), l_prime).unwrap();
            let est = odds_estimand(spec, &grid, &d).unwrap();
            for idx in grid.diagonal_indices() {
                assert_eq!(
                    est.numerator_coeffs()[idx].to_bits(),
                    est.denominator_coeffs()[idx].to_bits(),
                    "diagonal point {idx} brackets differ at L'={l_prime}"
                );
            }
        }
    }

    #[test]
    fn odds_brackets_match_exhaustive_outcome_sum() {
        let (p_a, p_b) = (0.8, 0.2);
        let grid = Grid::from_axis(&[0.2, 0.8]).unwrap();
        let d = design(1);
        let z = CallbackPattern::new(1, 0);
        let spec = OddsRatioSpec::new(z, 4).unwrap();
        let est = odds_estimand(spec, &grid, &d).unwrap();
        let idx = point_index(&grid, (p_a, p_b));
        // Brute force over all 25 counterfactual outcome pairs.
        let mut gt = 0.0;
        let mut lt = 0.0;
        for ca in 0..=4u32 {
            for cb in 0..=4u32 {
                let prob = binom_pmf(ca, 4, p_a).unwrap() * binom_pmf(cb, 4, p_b).unwrap();
                if ca > cb {
                    gt += prob;
                } else if ca < cb {
                    lt += prob;
                }
            }
        }
        let lik = likelihood(z, (p_a, p_b), &d).unwrap();
        assert_abs_diff_eq!(est.numerator_coeffs()[idx], gt * lik, epsilon = 1e-13);
        assert_abs_diff_eq!(est.denominator_coeffs()[idx], lt * lik, epsilon = 1e-13);
    }

    #[test]
    fn evaluate_diagonal_mixture_odds_is_exactly_one() {
        let grid = build_grid(4).unwrap();
        let d = design(2);
        let mut w = vec![0.0; grid.len()];
        let diag = grid.diagonal_indices();
        for &idx in &diag {
            w[idx] = 1.0 / diag.len() as f64;
        }
        let pi = MixtureWeights::new(w).unwrap();
        for l_prime in [1, 2, 4] {
            let spec = OddsRatioSpec::new(CallbackPattern::new(1, 1), l_prime).unwrap();
            let est = odds_estimand(spec, &grid, &d).unwrap();
            assert_eq!(evaluate(&est, &pi).unwrap(), 1.0);
        }
    }

    #[test]
    fn evaluate_one_sided_mixture_is_infinite() {
        let grid = build_grid(2).unwrap();
        let d = design(1);
        let idx = point_index(&grid, (1.0, 0.0));
        let pi = MixtureWeights::point_mass(idx, grid.len()).unwrap();
        let spec = OddsRatioSpec::new(CallbackPattern::new(1, 0), 1).unwrap();
        let est = odds_estimand(spec, &grid, &d).unwrap();
        assert_eq!(evaluate(&est, &pi).unwrap(), f64::INFINITY);
    }

    #[test]
    fn evaluate_two_term_posterior() {
        let grid = small_grid();
        let d = design(1);
        let mut w = vec![0.0; grid.len()];
        w[point_index(&grid, (0.7, 0.2))] = 0.5;
        w[point_index(&grid, (0.2, 0.2))] = 0.5;
        let pi = MixtureWeights::new(w).unwrap();
        let est = discr_estimand(CallbackPattern::new(1, 0), &grid, &d).unwrap();
        // Posterior weight of the favoring atom: 0.56 / (0.56 + 0.16).
        assert_abs_diff_eq!(evaluate(&est, &pi).unwrap(), 7.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn evaluate_zero_probability_pattern_is_undefined() {
        let grid = build_grid(2).unwrap();
        let d = design(1);
        let idx = point_index(&grid, (0.0, 0.0));
        let pi = MixtureWeights::point_mass(idx, grid.len()).unwrap();
        let est = discr_estimand(CallbackPattern::new(1, 1), &grid, &d).unwrap();
        assert!(matches!(
            evaluate(&est, &pi),
            Err(Error::UndefinedConditioning(_))
        ));
    }

    #[test]
    fn evaluate_rejects_dimension_mismatch() {
        let grid = build_grid(3).unwrap();
        let d = design(1);
        let est = discr_estimand(CallbackPattern::new(1, 0), &grid, &d).unwrap();
        let pi = MixtureWeights::uniform(4).unwrap();
        assert!(matches!(evaluate(&est, &pi), Err(Error::Dimension(_))));
    }

    #[test]
    fn share_estimand_is_unconditional() {
        let grid = build_grid(3).unwrap();
        let est = discr_share_estimand(&grid);
        assert_eq!(est.conditioning_pattern(), None);
        assert!(est.denominator_coeffs().iter().all(|&c| c == 1.0));
        let pi = MixtureWeights::uniform(grid.len()).unwrap();
        // 3 of the 9 grid points lie strictly below the diagonal.
        assert_abs_diff_eq!(evaluate(&est, &pi).unwrap(), 3.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn odds_limit_diagonal_is_one() {
        let grid = build_grid(3).unwrap();
        let d = design(1);
        let diag = grid.diagonal_indices();
        let mut w = vec![0.0; grid.len()];
        for &idx in &diag {
            w[idx] = 1.0 / diag.len() as f64;
        }
        let pi = MixtureWeights::new(w).unwrap();
        assert_eq!(
            odds_limit(&pi, CallbackPattern::new(1, 0), &grid, &d).unwrap(),
            1.0
        );
    }

    #[test]
    fn odds_limit_one_sided_is_infinite() {
        let grid = Grid::from_axis(&[0.2, 0.8]).unwrap();
        let d = design(1);
        let idx = point_index(&grid, (0.8, 0.2));
        let pi = MixtureWeights::point_mass(idx, grid.len()).unwrap();
        assert_eq!(
            odds_limit(&pi, CallbackPattern::new(1, 0), &grid, &d).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn odds_limit_balanced_two_point_mixture() {
        let grid = Grid::from_axis(&[0.2, 0.8]).unwrap();
        let d = design(1);
        let mut w = vec![0.0; grid.len()];
        w[point_index(&grid, (0.8, 0.2))] = 0.5;
        w[point_index(&grid, (0.2, 0.8))] = 0.5;
        let pi = MixtureWeights::new(w).unwrap();
        // Both atoms have likelihood 0.16 at z=(0,0), so the posterior
        // splits evenly and the limit is 1.
        assert_abs_diff_eq!(
            odds_limit(&pi, CallbackPattern::new(0, 0), &grid, &d).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn odds_limit_zero_probability_pattern_is_undefined() {
        let grid = build_grid(2).unwrap();
        let d = design(1);
        let idx = point_index(&grid, (0.0, 0.0));
        let pi = MixtureWeights::point_mass(idx, grid.len()).unwrap();
        assert!(matches!(
            odds_limit(&pi, CallbackPattern::new(1, 1), &grid, &d),
            Err(Error::UndefinedConditioning(_))
        ));
    }

    fn limit_gaps(
        pi: &MixtureWeights,
        z: CallbackPattern,
        grid: &Grid,
        d: &ExperimentDesign,
    ) -> Vec<(u32, f64)> {
        let limit = odds_limit(pi, z, grid, d).unwrap();
        [1_u32, 2, 4, 8, 16, 32, 64, 128, 256]
            .iter()
            .map(|&l_prime| {
                let est = odds_estimand(OddsRatioSpec::new(z, l_prime).unwrap(), grid, d).unwrap();
                (l_prime, (evaluate(&est, pi).unwrap() - limit).abs())
            })
            .collect()
    }

    #[test]
    fn odds_converges_to_limit_as_lprime_doubles() {
        let grid = build_grid(4).unwrap();
        let d = design(2);
        let z = CallbackPattern::new(2, 1);
        // Mixture with atoms on both sides of the diagonal plus an interior
        // diagonal point. Ties at the diagonal atom split only at the
        // square-root rate, so the gap shrinks slowly — assert convergence,
        // not a tight tolerance.
        let mut w = vec![0.0; grid.len()];
        let axis = 1.0 / 3.0;
        w[point_index(&grid, (2.0 * axis, axis))] = 0.4;
        w[point_index(&grid, (axis, 2.0 * axis))] = 0.3;
        w[point_index(&grid, (axis, axis))] = 0.3;
        let pi = MixtureWeights::new(w).unwrap();
        let gap_at = limit_gaps(&pi, z, &grid, &d);
        let final_gap = gap_at.last().unwrap().1;
        assert!(
            final_gap <= 0.05,
            "odds at L'=256 still {final_gap} from the limit"
        );
        // Convergence, not monotonicity: the tail of the doubling sequence
        // keeps shrinking.
        let tail: Vec<f64> = gap_at[4..].iter().map(|&(_, g)| g).collect();
        for pair in tail.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "gap grew: {} -> {}",
                pair[0],
                pair[1]
            );
        }
        assert!(final_gap < 0.1 * gap_at[0].1);
    }

    #[test]
    fn odds_limit_is_reached_fast_without_diagonal_support() {
        let grid = build_grid(4).unwrap();
        let d = design(2);
        let z = CallbackPattern::new(2, 1);
        // Off-diagonal atoms separate at an exponential rate in L'.
        let axis = 1.0 / 3.0;
        let mut w = vec![0.0; grid.len()];
        w[point_index(&grid, (2.0 * axis, axis))] = 0.35;
        w[point_index(&grid, (1.0, axis))] = 0.15;
        w[point_index(&grid, (axis, 2.0 * axis))] = 0.3;
        w[point_index(&grid, (0.0, axis))] = 0.2;
        let pi = MixtureWeights::new(w).unwrap();
        let gap_at = limit_gaps(&pi, z, &grid, &d);
        let final_gap = gap_at.last().unwrap().1;
        assert!(
            final_gap <= 1e-6,
            "odds at L'=256 still {final_gap} from the limit"
        );
    }

    #[test]
    fn continuity_under_mixture_perturbation() {
        let grid = build_grid(3).unwrap();
        let d = design(1);
        let z = CallbackPattern::new(1, 0);
        let spec = OddsRatioSpec::new(z, 2).unwrap();
        let est = odds_estimand(spec, &grid, &d).unwrap();
        let mut w = vec![0.0; grid.len()];
        w[4] = 0.6; // (0.5, 0.5)
        w[grid.points().iter().position(|&p| p == (1.0, 0.5)).unwrap()] = 0.4;
        let pi = MixtureWeights::new(w).unwrap();
        let base = evaluate(&est, &pi).unwrap();
        let uniform = MixtureWeights::uniform(grid.len()).unwrap();
        let mut previous_gap = f64::INFINITY;
        for exponent in 1..=6 {
            let eps = 10.0_f64.powi(-exponent);
            let blended: Vec<f64> = pi
                .weights()
                .iter()
                .zip(uniform.weights())
                .map(|(a, b)| (1.0 - eps) * a + eps * b)
                .collect();
            let perturbed = MixtureWeights::new(blended).unwrap();
            let gap = (evaluate(&est, &perturbed).unwrap() - base).abs();
            assert!(gap < previous_gap + 1e-12, "gap {gap} grew at eps {eps}");
            previous_gap = gap;
        }
        assert!(previous_gap < 1e-5, "gap {previous_gap} at eps 1e-6");
    }

    #[test]
    fn odds_spec_rejects_zero_lprime() {
        assert!(OddsRatioSpec::new(CallbackPattern::new(0, 0), 0).is_err());
    }
}
