//! Partial-identification inference for paired-outcome audit experiments.
//!
//! The data are counts: each unit sends `L` paired applications and records
//! how many call back on each side, giving a pattern `(c_a, c_b)`. The
//! latent object is a distribution `G` over per-unit callback propensities
//! `(p_a, p_b)`; only its pattern marginal is observable, so posterior
//! quantities such as "the probability group a is favored given this
//! pattern" are set-identified, not point-identified.
//!
//! The crate computes sharp bounds on such quantities over a discretized
//! propensity grid, and turns them into confidence intervals:
//!
//! 1. [`model`] — experiment design, propensity grids, mixtures, and the
//!    pattern-likelihood matrix linking them.
//! 2. [`ingest`] — count datasets, CSV I/O, empirical pattern frequencies,
//!    and synthetic-data simulation.
//! 3. [`estimands`] — posterior ratio estimands (favored-probability,
//!    inequality, logit gap, callback odds ratio) as coefficient pairs.
//! 4. [`gmm`] — minimum-distance projection of the empirical pmf onto the
//!    mixture-marginal set, plus the parametric bootstrap of the criterion.
//! 5. [`bounds`] — fractional-programming bounds under equality or
//!    criterion-slack constraints, and bound-versus-slack curves.
//! 6. [`flocal`] — slack calibration and simultaneous confidence intervals.
//!
//! # Example
//!
//! ```
//! use callbound::{
//!     bounds::{solve_linear_constraint, BoundConstraint, BoundQuery, Direction},
//!     estimands::discr_estimand,
//!     model::{build_grid, likelihood_matrix, marginal, CallbackPattern,
//!             ExperimentDesign, MixtureWeights},
//! };
//!
//! // Five paired applications per unit, propensities on a 6x6 grid.
//! let design = ExperimentDesign::new(5)?;
//! let grid = build_grid(6)?;
//! let a = likelihood_matrix(&grid, &design)?;
//!
//! // Pretend the latent distribution is uniform over the grid and ask how
//! // likely group a is to be the favored one among units with pattern
//! // (3 callbacks for a, 0 for b).
//! let pi = MixtureWeights::uniform(grid.len())?;
//! let f = marginal(&pi, &a)?;
//! let estimand = discr_estimand(CallbackPattern::new(3, 0), &grid, &design)?;
//!
//! let query = BoundQuery::new(estimand, Direction::Lower, BoundConstraint::Exact(f))?;
//! let lower = solve_linear_constraint(&query, &a)?;
//! assert!(lower.value().as_finite().unwrap() > 0.5);
//! # Ok::<(), callbound::Error>(())
//! ```

pub mod bounds;
mod error;
pub mod estimands;
pub mod flocal;
pub mod gmm;
pub mod ingest;
pub mod model;
mod rng;
mod solver;

pub use error::{Error, Result};
pub use solver::{SOLVER_TOL, VERBOSE_ENV};

pub use bounds::{
    bound_curve, default_kappa_grid, solve_linear_constraint, solve_slack, BoundConstraint,
    BoundCurve, BoundQuery, BoundResult, BoundValue, Direction,
};
pub use estimands::{
    discr_estimand, discr_share_estimand, evaluate, logit_estimand, neq_estimand, odds_estimand,
    OddsRatioSpec, RatioEstimand,
};
pub use flocal::{
    calibrate, chi2_localization, confidence_interval, fixed_localization, CiRequest,
    ConfidenceInterval, FLocalization, IntervalSides, KappaProvenance,
};
pub use gmm::{
    bootstrap_jopt, default_weighting, j_stat, kappa_quantile, project, BootstrapResult, GmmFit,
    SolveStatus, WeightingMatrix,
};
pub use ingest::{empirical_pmf, load_csv, simulate, write_csv, Dataset, EmpiricalPmf, CSV_HEADER};
pub use model::{
    build_grid, likelihood_matrix, marginal, CallbackPattern, ExperimentDesign, Grid,
    LikelihoodMatrix, MarginalPmf, MixtureWeights,
};
