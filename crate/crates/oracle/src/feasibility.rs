//! Direct conic linear programs over mixture constraint sets.
//!
//! Deliberately independent of the production program builder: constraints
//! are assembled straight into solver matrices from their mathematical
//! statement, so agreement between bisection and the homogenized solve is
//! evidence about two formulations, not one builder exercised twice.

use callbound::{BoundConstraint, LikelihoodMatrix};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT,
    SolverStatus, SupportedConeT, ZeroConeT,
};

pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Empty,
}

/// The mixture constraint set of one bound query, ready to minimize linear
/// functionals over it. The bisection search asks for a denominator
/// maximizer once and then for the sign of one cut functional per step;
/// keeping the feasible set fixed and rotating only the objective avoids
/// the ill-conditioned thin sets a moving cut constraint would create.
pub(crate) struct ConstraintSet<'a> {
    a: &'a LikelihoodMatrix,
    constraint: &'a BoundConstraint,
}

impl<'a> ConstraintSet<'a> {
    pub(crate) fn new(
        constraint: &'a BoundConstraint,
        a: &'a LikelihoodMatrix,
    ) -> Result<Self, String> {
        let patterns = a.rows();
        let f_len = match constraint {
            BoundConstraint::Exact(f) => f.values().len(),
            BoundConstraint::Empirical(f) => f.values().len(),
            BoundConstraint::Projected(f) => f.values().len(),
            BoundConstraint::Slack { fbar, w, kappa, .. } => {
                if w.dim() != patterns {
                    return Err(format!("W is {}x{}, expected {patterns}", w.dim(), w.dim()));
                }
                if !kappa.is_finite() || *kappa < 0.0 {
                    return Err(format!("bad slack level {kappa}"));
                }
                fbar.values().len()
            }
        };
        if f_len != patterns {
            return Err(format!(
                "reference pmf has {f_len} patterns, design has {patterns}"
            ));
        }
        Ok(Self { a, constraint })
    }

    /// Minimizes `objective · π` over the set, optionally intersected with
    /// a linear floor `coeffs · π ≥ threshold` and/or a pinned hyperplane
    /// `coeffs · π = 0`.
    pub(crate) fn minimize(
        &self,
        objective: &[f64],
        floor: Option<(&[f64], f64)>,
        pin_zero: Option<&[f64]>,
    ) -> Result<LpOutcome, String> {
        let m = self.a.cols();
        let patterns = self.a.rows();

        let mut rows: Vec<usize> = Vec::new();
        let mut cols: Vec<usize> = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0usize;

        let push_entry = |rows: &mut Vec<usize>,
                          cols: &mut Vec<usize>,
                          vals: &mut Vec<f64>,
                          r: usize,
                          c: usize,
                          v: f64| {
            if v != 0.0 {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        };

        // Zero cone: Σπ = 1, plus the marginal equality when applicable.
        for l in 0..m {
            push_entry(&mut rows, &mut cols, &mut vals, row, l, 1.0);
        }
        rhs.push(1.0);
        row += 1;
        let mut zero_rows = 1;
        let equality_values = match self.constraint {
            BoundConstraint::Exact(f) => Some(f.values()),
            BoundConstraint::Empirical(f) => Some(f.values()),
            BoundConstraint::Projected(f) => Some(f.values()),
            BoundConstraint::Slack { .. } => None,
        };
        if let Some(f_ref) = equality_values {
            for (z, &f_z) in f_ref.iter().enumerate().take(patterns) {
                for l in 0..m {
                    push_entry(&mut rows, &mut cols, &mut vals, row, l, self.a.entry(z, l));
                }
                rhs.push(f_z);
                row += 1;
            }
            zero_rows += patterns;
        }
        if let Some(coeffs) = pin_zero {
            for (l, &c) in coeffs.iter().enumerate().take(m) {
                push_entry(&mut rows, &mut cols, &mut vals, row, l, c);
            }
            rhs.push(0.0);
            row += 1;
            zero_rows += 1;
        }
        cones.push(ZeroConeT(zero_rows));

        // Nonnegative cone: π ≥ 0 and the optional floor.
        let mut nonneg_rows = 0;
        for l in 0..m {
            push_entry(&mut rows, &mut cols, &mut vals, row, l, -1.0);
            rhs.push(0.0);
            row += 1;
            nonneg_rows += 1;
        }
        if let Some((coeffs, threshold)) = floor {
            for (l, &c) in coeffs.iter().enumerate().take(m) {
                push_entry(&mut rows, &mut cols, &mut vals, row, l, -c);
            }
            rhs.push(-threshold);
            row += 1;
            nonneg_rows += 1;
        }
        cones.push(NonnegativeConeT(nonneg_rows));

        // Second-order cone for the criterion ball.
        if let BoundConstraint::Slack { kappa, fbar, w, n } = self.constraint {
            let sqrt_n = (*n as f64).sqrt();
            let r = w.factor();
            rhs.push(kappa.sqrt());
            row += 1;
            for i in 0..patterns {
                for l in 0..m {
                    let coeff: f64 = (0..patterns)
                        .map(|z| r[i * patterns + z] * self.a.entry(z, l))
                        .sum();
                    push_entry(&mut rows, &mut cols, &mut vals, row, l, sqrt_n * coeff);
                }
                let target: f64 = (0..patterns)
                    .map(|z| r[i * patterns + z] * fbar.values()[z])
                    .sum();
                rhs.push(sqrt_n * target);
                row += 1;
            }
            cones.push(SecondOrderConeT(patterns + 1));
        }

        let a_mat = CscMatrix::new_from_triplets(row, m, rows, cols, vals);
        let p = CscMatrix::new(m, m, vec![0; m + 1], vec![], vec![]);
        let q = objective.to_vec();
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .build()
            .map_err(|e| format!("settings: {e:?}"))?;
        let mut solver = DefaultSolver::new(&p, &q, &a_mat, &rhs, &cones, settings)
            .map_err(|e| format!("solver setup: {e:?}"))?;
        solver.solve();

        match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let x = solver.solution.x.clone();
                // Recomputing the value from x sidesteps any objective
                // offset conventions in the reported optimum.
                let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                Ok(LpOutcome::Optimal { x, value })
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                Ok(LpOutcome::Empty)
            }
            other => Err(format!("linear minimization ended with {other:?}")),
        }
    }
}
