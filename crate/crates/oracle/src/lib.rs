//! Slow, independently derived reference implementations for testing.
//!
//! Everything here exists to cross-check the production solvers along a
//! different route: bounds by bisection over candidate values instead of a
//! single homogenized solve, feasibility by direct conic formulation
//! instead of the shared program builder, and tiny instances by exhaustive
//! simplex enumeration. None of this ships in release artifacts; the crate
//! is a dev-dependency of the test suites only.

use callbound::{BoundConstraint, Direction, LikelihoodMatrix, RatioEstimand};

mod feasibility;

use feasibility::{ConstraintSet, LpOutcome};

/// Denominator floor shared with the production bound solver.
const DENOMINATOR_FLOOR: f64 = 1e-10;

/// Bisection iterations; the bracket shrinks by 2^60, far below any
/// comparison tolerance.
const BISECT_ITERS: u32 = 60;

/// Candidates beyond this magnitude are declared divergent; values near
/// the cap are indistinguishable from divergence at solver precision.
const VALUE_CAP: f64 = 1e12;

/// Sign tolerance for the minimized cut functional (whose coefficients are
/// normalized to order one before solving).
const ADMIT_TOL: f64 = 1e-9;

/// What the bisection oracle established about a bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleBound {
    Value(f64),
    /// The constraint set (with positive denominator) is empty.
    Infeasible,
    /// The value diverges in the requested direction.
    Unbounded,
}

impl OracleBound {
    pub fn value(&self) -> Option<f64> {
        match self {
            OracleBound::Value(v) => Some(*v),
            _ => None,
        }
    }
}

/// Reference bound via bisection over candidate values `c`.
///
/// A candidate is admissible for the lower bound when some mixture in the
/// constraint set satisfies `N(π) − c·D(π) ≤ 0` with `D(π) ≥ δ`; the bound
/// is the infimum of admissible candidates, found by binary search. Each
/// step decides admissibility by minimizing the cut functional over the
/// fixed constraint set and reading the sign, so the solver never faces a
/// feasible set that thins out as the search closes in. The upper bound
/// searches the supremum of `c` with `N(π) − c·D(π) ≥ 0` attainable.
/// Intended for tiny instances (K ≤ 10, L ≤ 4); cost is one conic solve
/// per iteration.
pub fn bisect_bound(
    estimand: &RatioEstimand,
    constraint: &BoundConstraint,
    a: &LikelihoodMatrix,
    direction: Direction,
) -> Result<OracleBound, String> {
    let set = ConstraintSet::new(constraint, a)?;
    let num = estimand.numerator_coeffs();
    let den = estimand.denominator_coeffs();

    // The denominator maximizer settles emptiness, vanishing conditioning,
    // and the bracket seed in one well-posed solve.
    let neg_den: Vec<f64> = den.iter().map(|v| -v).collect();
    let seed = match set.minimize(&neg_den, None, None)? {
        LpOutcome::Empty => return Ok(OracleBound::Infeasible),
        LpOutcome::Optimal { x, value } => {
            if -value < DENOMINATOR_FLOOR {
                return Err("denominator vanishes on the whole constraint set".into());
            }
            x
        }
    };
    let c0 = ratio_at(estimand, &seed)?;

    // Divergence pre-check: a feasible point with zero denominator but a
    // live numerator sends the requested extremum to infinity, because the
    // ratio blows up along the segment toward it.
    let div_objective: Vec<f64> = match direction {
        Direction::Lower => num.to_vec(),
        Direction::Upper => num.iter().map(|v| -v).collect(),
    };
    if let LpOutcome::Optimal { value, .. } = set.minimize(&div_objective, None, Some(den))? {
        let diverges = match direction {
            Direction::Lower => value < -ADMIT_TOL,
            Direction::Upper => -value > ADMIT_TOL,
        };
        if diverges {
            return Ok(OracleBound::Unbounded);
        }
    }

    let admissible = |c: f64| -> Result<bool, String> {
        let sign = match direction {
            Direction::Lower => 1.0,
            Direction::Upper => -1.0,
        };
        let scale = 1.0 + c.abs();
        let objective: Vec<f64> = num
            .iter()
            .zip(den)
            .map(|(nv, dv)| sign * (nv - c * dv) / scale)
            .collect();
        match set.minimize(&objective, Some((den, DENOMINATOR_FLOOR)), None)? {
            LpOutcome::Optimal { value, .. } => Ok(value <= ADMIT_TOL),
            LpOutcome::Empty => Err("floored constraint set went empty under a cut probe".into()),
        }
    };

    // Geometric expansion away from c0 until the cut becomes unattainable;
    // walking past the cap means the value diverges.
    let mut near = c0;
    let mut step = 1.0 + c0.abs();
    let mut far = None;
    loop {
        let candidate = match direction {
            Direction::Lower => near - step,
            Direction::Upper => near + step,
        };
        if candidate.abs() > VALUE_CAP {
            break;
        }
        if admissible(candidate)? {
            near = candidate;
            step *= 2.0;
        } else {
            far = Some(candidate);
            break;
        }
    }
    let Some(mut infeasible_end) = far else {
        return Ok(OracleBound::Unbounded);
    };
    let mut feasible_end = near;

    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (infeasible_end + feasible_end);
        if admissible(mid)? {
            feasible_end = mid;
        } else {
            infeasible_end = mid;
        }
    }
    Ok(OracleBound::Value(0.5 * (infeasible_end + feasible_end)))
}

fn ratio_at(estimand: &RatioEstimand, pi: &[f64]) -> Result<f64, String> {
    let num: f64 = estimand
        .numerator_coeffs()
        .iter()
        .zip(pi)
        .map(|(c, w)| c * w)
        .sum();
    let den: f64 = estimand
        .denominator_coeffs()
        .iter()
        .zip(pi)
        .map(|(c, w)| c * w)
        .sum();
    if den < DENOMINATOR_FLOOR / 2.0 {
        return Err(format!("seed point has denominator {den}"));
    }
    Ok(num / den)
}

/// A pattern pmf (L = 2, nine patterns in lexicographic order) that no
/// mixture of paired binomials can produce, on any propensity grid.
///
/// The group-a count marginal is (0.1, 0.8, 0.1). For any mixture,
/// f(0) = E(1−p)², f(1) = 2E p(1−p), f(2) = E p², so E p = f(1)/2 + f(2)
/// and E p² = f(2); here E p² = 0.1 < 0.25 = (E p)², violating Jensen's
/// inequality. The violation is a property of the marginal alone, so it
/// certifies non-representability for every grid and every group-b
/// behavior.
pub fn non_mixture_pmf() -> Vec<f64> {
    let group_a = [0.1, 0.8, 0.1];
    let group_b = [0.25, 0.5, 0.25];
    let mut pmf = Vec::with_capacity(9);
    for a in group_a {
        for b in group_b {
            pmf.push(a * b);
        }
    }
    pmf
}

/// Exhaustive grid search over the weight simplex in steps of
/// `1/resolution`: keep points whose marginal matches `f_ref` within `tol`
/// in sup norm and whose denominator clears the floor, and return the range
/// of estimand values seen.
///
/// Cost is the number of compositions of `resolution` into K² parts; keep
/// K² ≤ 9 and resolutions modest.
pub fn enumerate_tiny(
    estimand: &RatioEstimand,
    f_ref: &[f64],
    a: &LikelihoodMatrix,
    resolution: u32,
    tol: f64,
) -> Option<(f64, f64)> {
    assert!(a.cols() <= 9, "enumeration is for tiny grids only");
    assert!(resolution >= 1);
    let m = a.cols();
    let mut weights = vec![0.0; m];
    let mut best: Option<(f64, f64)> = None;
    enumerate_compositions(resolution, m, &mut vec![0u32; m], 0, &mut |counts| {
        for (w, &c) in weights.iter_mut().zip(counts.iter()) {
            *w = f64::from(c) / f64::from(resolution);
        }
        let residual = (0..a.rows())
            .map(|z| {
                let fitted: f64 = (0..m).map(|l| a.entry(z, l) * weights[l]).sum();
                (fitted - f_ref[z]).abs()
            })
            .fold(0.0_f64, f64::max);
        if residual > tol {
            return;
        }
        let den: f64 = estimand
            .denominator_coeffs()
            .iter()
            .zip(&weights)
            .map(|(c, w)| c * w)
            .sum();
        if den < DENOMINATOR_FLOOR {
            return;
        }
        let num: f64 = estimand
            .numerator_coeffs()
            .iter()
            .zip(&weights)
            .map(|(c, w)| c * w)
            .sum();
        let value = num / den;
        best = Some(match best {
            None => (value, value),
            Some((lo, hi)) => (lo.min(value), hi.max(value)),
        });
    });
    best
}

/// Calls `visit` with every way to write `total` as an ordered sum of
/// `slots` nonnegative integers.
fn enumerate_compositions(
    total: u32,
    slots: usize,
    scratch: &mut Vec<u32>,
    index: usize,
    visit: &mut impl FnMut(&[u32]),
) {
    if index + 1 == slots {
        scratch[index] = total;
        visit(scratch);
        return;
    }
    for take in 0..=total {
        scratch[index] = take;
        enumerate_compositions(total - take, slots, scratch, index + 1, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use callbound::{
        build_grid, discr_estimand, evaluate, likelihood_matrix, marginal, CallbackPattern,
        ExperimentDesign, MarginalPmf, MixtureWeights,
    };

    #[test]
    fn non_mixture_pmf_violates_the_moment_inequality() {
        let pmf = non_mixture_pmf();
        assert_eq!(pmf.len(), 9);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Group-a marginal: sum over the three group-b columns.
        let f: Vec<f64> = (0..3)
            .map(|ca| pmf[3 * ca..3 * ca + 3].iter().sum())
            .collect();
        let m1 = f[1] / 2.0 + f[2];
        let m2 = f[2];
        assert!(
            m2 < m1 * m1 - 0.1,
            "marginal ({}, {}, {}) is not a clear violation",
            f[0],
            f[1],
            f[2]
        );
    }

    #[test]
    fn mixture_marginals_satisfy_the_moment_inequality() {
        // Jensen: E p² ≥ (E p)² for every mixing distribution, so any
        // mixture marginal passes the check the crafted pmf fails.
        let design = ExperimentDesign::new(2).unwrap();
        for (k, seed_shift) in [(2, 0.0_f64), (3, 0.17), (5, 0.42)] {
            let grid = build_grid(k).unwrap();
            let a = likelihood_matrix(&grid, &design).unwrap();
            let raw: Vec<f64> = (0..grid.len())
                .map(|i| 1.0 + ((i as f64 + seed_shift) * 2.399).sin().abs())
                .collect();
            let total: f64 = raw.iter().sum();
            let pi = MixtureWeights::new(raw.into_iter().map(|v| v / total).collect()).unwrap();
            let f = marginal(&pi, &a).unwrap();
            let fa: Vec<f64> = (0..3)
                .map(|ca| (0..3).map(|cb| f.values()[3 * ca + cb]).sum())
                .collect();
            let m1 = fa[1] / 2.0 + fa[2];
            let m2 = fa[2];
            assert!(m2 >= m1 * m1 - 1e-12, "K={k}: m2={m2} < m1²={}", m1 * m1);
        }
    }

    #[test]
    fn enumeration_recovers_a_point_mass() {
        let grid = build_grid(2).unwrap();
        let design = ExperimentDesign::new(1).unwrap();
        let a = likelihood_matrix(&grid, &design).unwrap();
        let idx = grid.points().iter().position(|&p| p == (1.0, 0.0)).unwrap();
        let pi = MixtureWeights::point_mass(idx, grid.len()).unwrap();
        let f = marginal(&pi, &a).unwrap();
        let est = discr_estimand(CallbackPattern::new(1, 0), &grid, &design).unwrap();
        let truth = evaluate(&est, &pi).unwrap();
        let (lo, hi) = enumerate_tiny(&est, f.values(), &a, 50, 1e-9).unwrap();
        assert!((lo - truth).abs() < 1e-12);
        assert!((hi - truth).abs() < 1e-12);
    }

    #[test]
    fn resolution_one_checks_only_vertices() {
        let grid = build_grid(3).unwrap();
        let design = ExperimentDesign::new(1).unwrap();
        let a = likelihood_matrix(&grid, &design).unwrap();
        let est = discr_estimand(CallbackPattern::new(1, 0), &grid, &design).unwrap();
        // With tol = 2 every vertex passes the residual filter; the range is
        // over vertices with defined conditioning only. Vertices such as
        // (1/2, 1/2) give 0 and (1, 1/2) gives 1, so the vertex range spans
        // the whole unit interval even though no mixture is ever formed.
        let f_ref = vec![0.25; 4];
        let (lo, hi) = enumerate_tiny(&est, &f_ref, &a, 1, 2.0).unwrap();
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn bisection_of_a_constant_estimand_returns_the_constant() {
        let grid = build_grid(3).unwrap();
        let design = ExperimentDesign::new(1).unwrap();
        let a = likelihood_matrix(&grid, &design).unwrap();
        let base = discr_estimand(CallbackPattern::new(1, 0), &grid, &design).unwrap();
        let den = base.denominator_coeffs().to_vec();
        let num: Vec<f64> = den.iter().map(|c| 0.3 * c).collect();
        let est = RatioEstimand::from_parts(num, den, "constant", Some(CallbackPattern::new(1, 0)))
            .unwrap();
        let f_ref = MarginalPmf::from_values(vec![0.25; 4]).unwrap();
        let constraint = BoundConstraint::Exact(f_ref);
        for direction in [Direction::Lower, Direction::Upper] {
            let bound = bisect_bound(&est, &constraint, &a, direction).unwrap();
            let v = bound.value().expect("constant estimand is bounded");
            assert!((v - 0.3).abs() < 1e-7, "{direction:?} gave {v}");
        }
    }

    #[test]
    fn empty_constraint_set_is_reported() {
        let grid = build_grid(3).unwrap();
        let design = ExperimentDesign::new(2).unwrap();
        let a = likelihood_matrix(&grid, &design).unwrap();
        let mut values = vec![0.0; 9];
        values[4] = 1.0;
        let est = discr_estimand(CallbackPattern::new(1, 1), &grid, &design).unwrap();
        let constraint = BoundConstraint::Exact(MarginalPmf::from_values(values).unwrap());
        let bound = bisect_bound(&est, &constraint, &a, Direction::Lower).unwrap();
        assert_eq!(bound, OracleBound::Infeasible);
    }
}
