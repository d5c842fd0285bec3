//! Thin deterministic wrapper over the interior-point conic solver.
//!
//! Programs are assembled as rows `a·x (cone-rel) b` grouped into zero,
//! nonnegative, and second-order cone blocks in the order they are added,
//! then handed to Clarabel in its `Ax + s = b, s ∈ K` form. All problems in
//! this crate have linear objectives.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT,
    SolverStatus, SupportedConeT, ZeroConeT,
};

use crate::error::{Error, Result};

/// Feasibility and gap tolerance used for every solve; reported alongside
/// fit artifacts.
pub const SOLVER_TOL: f64 = 1e-8;

/// Environment variable that turns on solver iteration logs.
pub const VERBOSE_ENV: &str = "CALLBOUND_SOLVER_VERBOSE";

/// What a conic solve established.
#[derive(Debug, Clone)]
pub(crate) enum RawOutcome {
    /// A (near-)optimal primal point.
    Solution {
        x: Vec<f64>,
        /// Solver-reported objective; consumers recompute values from `x`
        /// and use this only as a cross-check.
        #[allow(dead_code)]
        objective: f64,
        near: bool,
    },
    /// Primal infeasibility certificate: the constraint set is empty.
    InfeasibleCert { near: bool },
    /// Dual infeasibility certificate: the objective is unbounded over the
    /// constraint set.
    UnboundedCert { near: bool },
    /// No solution and no certificate.
    Failed { status: String },
}

#[derive(Debug, Clone, Copy)]
enum ConeBlock {
    Zero(usize),
    Nonneg(usize),
    Soc(usize),
}

/// Incrementally assembled conic program with linear objective.
#[derive(Debug, Clone)]
pub(crate) struct ConicProgram {
    n_vars: usize,
    objective: Vec<f64>,
    // triplet rows of the constraint matrix
    row_idx: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    rhs: Vec<f64>,
    cones: Vec<ConeBlock>,
}

impl ConicProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            row_idx: Vec::new(),
            col_idx: Vec::new(),
            values: Vec::new(),
            rhs: Vec::new(),
            cones: Vec::new(),
        }
    }

    /// Sets the linear objective `min q·x`.
    pub fn set_objective(&mut self, q: &[f64]) {
        debug_assert_eq!(q.len(), self.n_vars);
        self.objective.copy_from_slice(q);
    }

    fn push_row(&mut self, entries: &[(usize, f64)], rhs: f64) {
        let row = self.rhs.len();
        for &(col, val) in entries {
            debug_assert!(col < self.n_vars);
            if val != 0.0 {
                self.row_idx.push(row);
                self.col_idx.push(col);
                self.values.push(val);
            }
        }
        self.rhs.push(rhs);
    }

    /// Adds an equality block: each row enforces `a·x = rhs`.
    pub fn add_equalities(&mut self, rows: &[(&[(usize, f64)], f64)]) {
        for (entries, rhs) in rows {
            self.push_row(entries, *rhs);
        }
        self.cones.push(ConeBlock::Zero(rows.len()));
    }

    /// Adds an inequality block: each row enforces `a·x <= rhs`.
    pub fn add_inequalities(&mut self, rows: &[(&[(usize, f64)], f64)]) {
        for (entries, rhs) in rows {
            self.push_row(entries, *rhs);
        }
        self.cones.push(ConeBlock::Nonneg(rows.len()));
    }

    /// Adds a second-order cone block over the row residuals
    /// `s_i = rhs_i - a_i·x`: the first row's residual must dominate the
    /// Euclidean norm of the remaining rows' residuals.
    pub fn add_second_order_cone(&mut self, rows: &[(&[(usize, f64)], f64)]) {
        debug_assert!(rows.len() >= 2, "a second-order cone needs at least 2 rows");
        for (entries, rhs) in rows {
            self.push_row(entries, *rhs);
        }
        self.cones.push(ConeBlock::Soc(rows.len()));
    }

    /// Runs the interior-point solve. Deterministic for fixed inputs.
    pub fn solve(&self) -> Result<RawOutcome> {
        let m = self.rhs.len();
        let p = CscMatrix::new(
            self.n_vars,
            self.n_vars,
            vec![0; self.n_vars + 1],
            vec![],
            vec![],
        );
        let a = CscMatrix::new_from_triplets(
            m,
            self.n_vars,
            self.row_idx.clone(),
            self.col_idx.clone(),
            self.values.clone(),
        );
        let cones: Vec<SupportedConeT<f64>> = self
            .cones
            .iter()
            .map(|c| match *c {
                ConeBlock::Zero(d) => ZeroConeT(d),
                ConeBlock::Nonneg(d) => NonnegativeConeT(d),
                ConeBlock::Soc(d) => SecondOrderConeT(d),
            })
            .collect();
        let verbose = std::env::var(VERBOSE_ENV).is_ok_and(|v| v != "0" && !v.is_empty());
        let settings = DefaultSettingsBuilder::default()
            .verbose(verbose)
            .tol_feas(SOLVER_TOL)
            .tol_gap_abs(SOLVER_TOL)
            .tol_gap_rel(SOLVER_TOL)
            .build()
            .map_err(|e| Error::Solver(format!("solver settings rejected: {e}")))?;
        let mut solver = DefaultSolver::new(&p, &self.objective, &a, &self.rhs, &cones, settings)
            .map_err(|e| Error::Solver(format!("problem assembly failed: {e}")))?;
        solver.solve();
        let solution = &solver.solution;
        let outcome = match solution.status {
            SolverStatus::Solved => RawOutcome::Solution {
                x: solution.x.clone(),
                objective: solution.obj_val,
                near: false,
            },
            SolverStatus::AlmostSolved => RawOutcome::Solution {
                x: solution.x.clone(),
                objective: solution.obj_val,
                near: true,
            },
            SolverStatus::PrimalInfeasible => RawOutcome::InfeasibleCert { near: false },
            SolverStatus::AlmostPrimalInfeasible => RawOutcome::InfeasibleCert { near: true },
            SolverStatus::DualInfeasible => RawOutcome::UnboundedCert { near: false },
            SolverStatus::AlmostDualInfeasible => RawOutcome::UnboundedCert { near: true },
            other => RawOutcome::Failed {
                status: format!("{other:?}"),
            },
        };
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_program_on_a_segment() {
        // min x0 + 2 x1  s.t.  x0 + x1 = 1, x >= 0  ->  x = (1, 0).
        let mut prog = ConicProgram::new(2);
        prog.set_objective(&[1.0, 2.0]);
        prog.add_equalities(&[(&[(0, 1.0), (1, 1.0)], 1.0)]);
        prog.add_inequalities(&[(&[(0, -1.0)], 0.0), (&[(1, -1.0)], 0.0)]);
        match prog.solve().unwrap() {
            RawOutcome::Solution { x, objective, .. } => {
                assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-6);
                assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-6);
                assert_abs_diff_eq!(objective, 1.0, epsilon = 1e-6);
            }
            other => panic!("expected a solution, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_program_is_certified() {
        // x = 1 and x = 2 simultaneously.
        let mut prog = ConicProgram::new(1);
        prog.set_objective(&[0.0]);
        prog.add_equalities(&[(&[(0, 1.0)], 1.0), (&[(0, 1.0)], 2.0)]);
        assert!(matches!(
            prog.solve().unwrap(),
            RawOutcome::InfeasibleCert { .. }
        ));
    }

    #[test]
    fn unbounded_program_is_certified() {
        // min -x  s.t.  x >= 0.
        let mut prog = ConicProgram::new(1);
        prog.set_objective(&[-1.0]);
        prog.add_inequalities(&[(&[(0, -1.0)], 0.0)]);
        assert!(matches!(
            prog.solve().unwrap(),
            RawOutcome::UnboundedCert { .. }
        ));
    }

    #[test]
    fn second_order_cone_projects_onto_ball() {
        // min t  s.t.  t >= ||x - c||, x fixed to the origin by equalities;
        // with c = (3, 4) the optimum is t = 5.
        let mut prog = ConicProgram::new(3); // (x0, x1, t)
        prog.set_objective(&[0.0, 0.0, 1.0]);
        prog.add_equalities(&[(&[(0, 1.0)], 0.0), (&[(1, 1.0)], 0.0)]);
        prog.add_second_order_cone(&[
            (&[(2, -1.0)], 0.0), // s0 = t
            (&[(0, -1.0)], 3.0), // s1 = 3 - x0... residual 3 - 0
            (&[(1, -1.0)], 4.0), // s2 = 4 - x1
        ]);
        match prog.solve().unwrap() {
            RawOutcome::Solution { x, .. } => {
                assert_abs_diff_eq!(x[2], 5.0, epsilon = 1e-6)
            }
            other => panic!("expected a solution, got {other:?}"),
        }
    }

    #[test]
    fn solves_are_deterministic() {
        let build = || {
            let mut prog = ConicProgram::new(3);
            prog.set_objective(&[1.0, 1.0, 1.0]);
            prog.add_equalities(&[(&[(0, 1.0), (1, 2.0), (2, 3.0)], 1.0)]);
            prog.add_inequalities(&[
                (&[(0, -1.0)], 0.0),
                (&[(1, -1.0)], 0.0),
                (&[(2, -1.0)], 0.0),
            ]);
            prog.solve().unwrap()
        };
        match (build(), build()) {
            (RawOutcome::Solution { x: x1, .. }, RawOutcome::Solution { x: x2, .. }) => {
                let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&x1), bits(&x2));
            }
            other => panic!("expected two solutions, got {other:?}"),
        }
    }
}
