//! Sharp bounds on ratio estimands over constrained sets of mixtures.
//!
//! Four constraint families select which mixtures are entertained: exact
//! marginal equality, empirical-pmf equality, projected-pmf equality, and a
//! criterion ball `J_n(Aπ, f̄) ≤ κ`. Each bound is a single conic solve of
//! the Charnes–Cooper homogenization: substituting `y = sπ` with `s > 0`
//! turns `min N(π)/D(π)` into the linear objective `min N·y` under
//! `D·y = 1`, with the simplex and criterion constraints scaled by `s`.
//!
//! Infeasibility is disambiguated from an identically-zero denominator by a
//! follow-up solve maximizing `D` over the constraint set: an empty set is
//! reported as an infeasible bound (the embedded specification test), a
//! vanishing denominator as an undefined conditioning event.

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimands::RatioEstimand;
use crate::gmm::{SolveStatus, WeightingMatrix};
use crate::ingest::EmpiricalPmf;
use crate::model::{LikelihoodMatrix, MarginalPmf};
use crate::solver::{ConicProgram, RawOutcome};

/// Lower bound on the homogenization scalar, far below estimand
/// sensitivity; conic solvers need closed feasible sets.
const SCALE_MIN: f64 = 1e-10;

/// Denominator mass below which conditioning is declared undefined.
const DENOMINATOR_FLOOR: f64 = 1e-9;

/// Which end of the identified set to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Lower,
    Upper,
}

/// Constraint family for a bound solve.
#[derive(Debug, Clone)]
pub enum BoundConstraint {
    /// Mixtures whose marginal equals a known pmf exactly.
    Exact(MarginalPmf),
    /// Mixtures fitting the empirical pmf exactly; may be infeasible.
    Empirical(EmpiricalPmf),
    /// Mixtures fitting the projected pmf exactly.
    Projected(MarginalPmf),
    /// Mixtures within criterion slack `kappa` of the empirical pmf.
    Slack {
        kappa: f64,
        fbar: EmpiricalPmf,
        w: WeightingMatrix,
        n: u64,
    },
}

impl BoundConstraint {
    fn reference_values(&self) -> &[f64] {
        match self {
            BoundConstraint::Exact(f) => f.values(),
            BoundConstraint::Empirical(f) => f.values(),
            BoundConstraint::Projected(f) => f.values(),
            BoundConstraint::Slack { fbar, .. } => fbar.values(),
        }
    }
}

/// One bound request: estimand, direction, and constraint family.
#[derive(Debug, Clone)]
pub struct BoundQuery {
    estimand: RatioEstimand,
    direction: Direction,
    constraint: BoundConstraint,
}

impl BoundQuery {
    pub fn new(
        estimand: RatioEstimand,
        direction: Direction,
        constraint: BoundConstraint,
    ) -> Result<Self> {
        if let BoundConstraint::Slack { kappa, fbar, w, .. } = &constraint {
            if !kappa.is_finite() || *kappa < 0.0 {
                return Err(Error::Domain(format!(
                    "slack level must be finite and nonnegative, got {kappa}"
                )));
            }
            if fbar.len() != w.dim() {
                return Err(Error::Dimension(format!(
                    "empirical pmf has {} patterns but W is {}x{}",
                    fbar.len(),
                    w.dim(),
                    w.dim()
                )));
            }
        }
        Ok(Self {
            estimand,
            direction,
            constraint,
        })
    }

    pub fn estimand(&self) -> &RatioEstimand {
        &self.estimand
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn constraint(&self) -> &BoundConstraint {
        &self.constraint
    }

    fn with_kappa(&self, kappa: f64) -> Result<Self> {
        match &self.constraint {
            BoundConstraint::Slack { fbar, w, n, .. } => Self::new(
                self.estimand.clone(),
                self.direction,
                BoundConstraint::Slack {
                    kappa,
                    fbar: fbar.clone(),
                    w: w.clone(),
                    n: *n,
                },
            ),
            _ => Err(Error::Domain(
                "kappa sweeps need a slack-constrained query".into(),
            )),
        }
    }
}

/// Outcome value of a bound solve; infeasibility is first-class, not an
/// error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundValue {
    Finite(f64),
    PosInfinite,
    NegInfinite,
    Infeasible,
}

impl BoundValue {
    pub fn as_finite(&self) -> Option<f64> {
        match self {
            BoundValue::Finite(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, BoundValue::Infeasible)
    }

    /// Numeric view with infinities mapped to IEEE infinities; `None` for
    /// infeasible.
    pub fn as_extended(&self) -> Option<f64> {
        match self {
            BoundValue::Finite(v) => Some(*v),
            BoundValue::PosInfinite => Some(f64::INFINITY),
            BoundValue::NegInfinite => Some(f64::NEG_INFINITY),
            BoundValue::Infeasible => None,
        }
    }
}

impl std::fmt::Display for BoundValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundValue::Finite(v) => write!(f, "{v}"),
            BoundValue::PosInfinite => f.write_str("+inf"),
            BoundValue::NegInfinite => f.write_str("-inf"),
            BoundValue::Infeasible => f.write_str("infeasible"),
        }
    }
}

impl Serialize for BoundValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BoundValue::Finite(v) => serializer.serialize_f64(*v),
            BoundValue::PosInfinite => serializer.serialize_str("+inf"),
            BoundValue::NegInfinite => serializer.serialize_str("-inf"),
            BoundValue::Infeasible => serializer.serialize_str("infeasible"),
        }
    }
}

/// Result of one bound solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundResult {
    value: BoundValue,
    solver_status: SolveStatus,
    active_kappa: Option<f64>,
}

impl BoundResult {
    pub fn value(&self) -> BoundValue {
        self.value
    }

    pub fn solver_status(&self) -> SolveStatus {
        self.solver_status
    }

    /// The slack level the solve ran at, when the constraint was a slack
    /// ball.
    pub fn active_kappa(&self) -> Option<f64> {
        self.active_kappa
    }
}

/// Bound values along an increasing slack grid, after monotone repair.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCurve {
    kappas: Vec<f64>,
    #[serde(serialize_with = "serialize_values")]
    values: Vec<BoundValue>,
    statuses: Vec<SolveStatus>,
    #[serde(serialize_with = "serialize_values")]
    raw_values: Vec<BoundValue>,
    failed_kappas: Vec<f64>,
    max_monotonicity_violation: f64,
    monotonicity_warnings: u32,
}

fn serialize_values<S: Serializer>(
    values: &[BoundValue],
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = serializer.serialize_seq(Some(values.len()))?;
    for v in values {
        seq.serialize_element(v)?;
    }
    seq.end()
}

impl BoundCurve {
    /// Slack levels that produced a result (failures are dropped).
    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }

    /// Monotone-repaired bound values, aligned with `kappas`.
    pub fn values(&self) -> &[BoundValue] {
        &self.values
    }

    pub fn statuses(&self) -> &[SolveStatus] {
        &self.statuses
    }

    /// Values as returned by the solver, before monotone repair.
    pub fn raw_values(&self) -> &[BoundValue] {
        &self.raw_values
    }

    /// Slack levels whose solves failed (gaps in the curve).
    pub fn failed_kappas(&self) -> &[f64] {
        &self.failed_kappas
    }

    /// Largest wrong-direction step observed before repair.
    pub fn max_monotonicity_violation(&self) -> f64 {
        self.max_monotonicity_violation
    }

    /// Number of repairs larger than the solver-noise allowance of 1e-6.
    pub fn monotonicity_warnings(&self) -> u32 {
        self.monotonicity_warnings
    }
}

enum InnerConstraint<'a> {
    /// `Aπ = f_ref` (homogenized: `Ay = s f_ref`).
    Equality(&'a [f64]),
    /// `J_n(Aπ, f̄) ≤ κ` (homogenized: `‖√n R(Ay − s f̄)‖ ≤ √κ s`).
    Ball {
        kappa: f64,
        fbar: &'a [f64],
        w: &'a WeightingMatrix,
        n: u64,
    },
}

/// Bound under an equality constraint (exact, empirical, or projected
/// reference pmf). Empirical references may be infeasible; that is reported
/// as a value, not an error.
pub fn solve_linear_constraint(query: &BoundQuery, a: &LikelihoodMatrix) -> Result<BoundResult> {
    let f_ref = match query.constraint() {
        BoundConstraint::Exact(f) => f.values(),
        BoundConstraint::Empirical(f) => f.values(),
        BoundConstraint::Projected(f) => f.values(),
        BoundConstraint::Slack { .. } => {
            return Err(Error::Domain(
                "slack-constrained queries go through solve_slack".into(),
            ))
        }
    };
    check_dimensions(query, a)?;
    // A conditioning pattern with zero reference probability pins the
    // denominator to zero on the whole feasible set.
    if let Some(z) = query.estimand().conditioning_pattern() {
        let idx = a.design().pattern_index(z)?;
        if f_ref[idx] == 0.0 {
            return Err(Error::UndefinedConditioning(format!(
                "estimand {} conditions on pattern {z}, which has probability zero under the reference pmf",
                query.estimand().label()
            )));
        }
    }
    solve_fractional(query, InnerConstraint::Equality(f_ref), a, None)
}

/// Bound under the criterion-ball constraint, solved as a single conic
/// program. Slack below the projected criterion value yields an infeasible
/// result.
pub fn solve_slack(query: &BoundQuery, a: &LikelihoodMatrix) -> Result<BoundResult> {
    let (kappa, fbar, w, n) = match query.constraint() {
        BoundConstraint::Slack { kappa, fbar, w, n } => (*kappa, fbar, w, *n),
        _ => {
            return Err(Error::Domain(
                "equality-constrained queries go through solve_linear_constraint".into(),
            ))
        }
    };
    check_dimensions(query, a)?;
    if kappa == 0.0 {
        // A zero-radius ball is the empirical equality constraint; the
        // linear form is better conditioned.
        return solve_fractional(
            query,
            InnerConstraint::Equality(fbar.values()),
            a,
            Some(0.0),
        );
    }
    solve_fractional(
        query,
        InnerConstraint::Ball {
            kappa,
            fbar: fbar.values(),
            w,
            n,
        },
        a,
        Some(kappa),
    )
}

/// One bound per slack level over an increasing grid, in parallel, with
/// monotone repair. Failed solves become gaps; more than 10% gaps fails the
/// sweep.
pub fn bound_curve(
    query: &BoundQuery,
    a: &LikelihoodMatrix,
    kappa_grid: &[f64],
) -> Result<BoundCurve> {
    use rayon::prelude::*;

    if kappa_grid.is_empty() {
        return Err(Error::Validation("slack grid is empty".into()));
    }
    if kappa_grid.iter().any(|k| !k.is_finite() || *k < 0.0) {
        return Err(Error::Validation(
            "slack levels must be finite and nonnegative".into(),
        ));
    }
    if kappa_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation(
            "slack grid must be strictly increasing".into(),
        ));
    }
    if !matches!(query.constraint(), BoundConstraint::Slack { .. }) {
        return Err(Error::Domain(
            "curves need a slack-constrained query".into(),
        ));
    }

    let outcomes: Vec<(f64, Result<BoundResult>)> = kappa_grid
        .par_iter()
        .map(|&kappa| {
            let point = query.with_kappa(kappa).and_then(|q| solve_slack(&q, a));
            (kappa, point)
        })
        .collect();

    let mut kappas = Vec::with_capacity(kappa_grid.len());
    let mut raw_values = Vec::with_capacity(kappa_grid.len());
    let mut statuses = Vec::with_capacity(kappa_grid.len());
    let mut failed_kappas = Vec::new();
    for (kappa, outcome) in outcomes {
        match outcome {
            Ok(result) => {
                kappas.push(kappa);
                raw_values.push(result.value());
                statuses.push(result.solver_status());
            }
            Err(_) => failed_kappas.push(kappa),
        }
    }
    if failed_kappas.len() * 10 > kappa_grid.len() {
        return Err(Error::Solver(format!(
            "{} of {} slack levels failed to solve",
            failed_kappas.len(),
            kappa_grid.len()
        )));
    }

    let (values, max_violation, warnings) = repair_monotone(&raw_values, query.direction());
    Ok(BoundCurve {
        kappas,
        values,
        statuses,
        raw_values,
        failed_kappas,
        max_monotonicity_violation: max_violation,
        monotonicity_warnings: warnings,
    })
}

/// Default slack grid for curves: 40 log-spaced levels from the projected
/// criterion value (floored at 1e-3) to four times the bootstrap 99%
/// quantile.
pub fn default_kappa_grid(j_opt: f64, boot_q99: f64) -> Vec<f64> {
    let lo = j_opt.max(1e-3);
    let hi = (4.0 * boot_q99).max(lo * 1.5);
    let points = 40;
    let ratio = hi / lo;
    (0..points)
        .map(|i| lo * ratio.powf(i as f64 / (points - 1) as f64))
        .collect()
}

/// Clips each value against the running envelope: nonincreasing for lower
/// bounds, nondecreasing for upper. Returns the repaired values, the
/// largest wrong-direction step, and how many steps exceeded solver noise.
fn repair_monotone(raw: &[BoundValue], direction: Direction) -> (Vec<BoundValue>, f64, u32) {
    let mut repaired = Vec::with_capacity(raw.len());
    let mut envelope: Option<f64> = None;
    let mut max_violation = 0.0_f64;
    let mut warnings = 0;
    for value in raw {
        let clipped = match value.as_extended() {
            Some(v) => {
                let v_clipped = match (direction, envelope) {
                    (Direction::Lower, Some(e)) => {
                        if v > e {
                            let violation = v - e;
                            max_violation = max_violation.max(violation);
                            if violation > 1e-6 {
                                warnings += 1;
                            }
                        }
                        v.min(e)
                    }
                    (Direction::Upper, Some(e)) => {
                        if v < e {
                            let violation = e - v;
                            max_violation = max_violation.max(violation);
                            if violation > 1e-6 {
                                warnings += 1;
                            }
                        }
                        v.max(e)
                    }
                    (_, None) => v,
                };
                envelope = Some(v_clipped);
                if v_clipped == f64::INFINITY {
                    BoundValue::PosInfinite
                } else if v_clipped == f64::NEG_INFINITY {
                    BoundValue::NegInfinite
                } else {
                    BoundValue::Finite(v_clipped)
                }
            }
            None => BoundValue::Infeasible,
        };
        repaired.push(clipped);
    }
    (repaired, max_violation, warnings)
}

fn check_dimensions(query: &BoundQuery, a: &LikelihoodMatrix) -> Result<()> {
    let m = a.cols();
    let patterns = a.rows();
    if query.estimand().len() != m {
        return Err(Error::Dimension(format!(
            "estimand has {} coefficients but the grid has {m} points",
            query.estimand().len()
        )));
    }
    let f_ref = query.constraint().reference_values();
    if f_ref.len() != patterns {
        return Err(Error::Dimension(format!(
            "reference pmf has {} patterns but the design has {patterns}",
            f_ref.len()
        )));
    }
    if let BoundConstraint::Slack { w, .. } = query.constraint() {
        if w.dim() != patterns {
            return Err(Error::Dimension(format!(
                "W is {}x{} but the design has {patterns} patterns",
                w.dim(),
                w.dim()
            )));
        }
    }
    Ok(())
}

/// Appends the constraint-set rows (everything except `D·y = 1`) for the
/// homogenized variables `(y, s)`; shared by the bound solve and the
/// denominator-mass probe.
fn add_base_constraints(
    prog: &mut ConicProgram,
    constraint: &InnerConstraint,
    a: &LikelihoodMatrix,
    idx_s: usize,
) {
    let m = a.cols();
    let patterns = a.rows();

    // Σy − s = 0 keeps y a scaled simplex point.
    let mut simplex_row: Vec<(usize, f64)> = (0..m).map(|l| (l, 1.0)).collect();
    simplex_row.push((idx_s, -1.0));
    let mut equalities: Vec<(Vec<(usize, f64)>, f64)> = vec![(simplex_row, 0.0)];

    if let InnerConstraint::Equality(f_ref) = constraint {
        for z in 0..patterns {
            let mut row: Vec<(usize, f64)> = (0..m)
                .filter_map(|l| {
                    let coeff = a.entry(z, l);
                    (coeff != 0.0).then_some((l, coeff))
                })
                .collect();
            row.push((idx_s, -f_ref[z]));
            equalities.push((row, 0.0));
        }
    }
    let eq_refs: Vec<(&[(usize, f64)], f64)> =
        equalities.iter().map(|(r, b)| (r.as_slice(), *b)).collect();
    prog.add_equalities(&eq_refs);

    // y ≥ 0 and s ≥ SCALE_MIN.
    let mut nonneg: Vec<(Vec<(usize, f64)>, f64)> =
        (0..m).map(|l| (vec![(l, -1.0)], 0.0)).collect();
    nonneg.push((vec![(idx_s, -1.0)], -SCALE_MIN));
    let nonneg_refs: Vec<(&[(usize, f64)], f64)> =
        nonneg.iter().map(|(r, b)| (r.as_slice(), *b)).collect();
    prog.add_inequalities(&nonneg_refs);

    if let InnerConstraint::Ball { kappa, fbar, w, n } = constraint {
        let sqrt_n = (*n as f64).sqrt();
        let sqrt_kappa = kappa.sqrt();
        let r = w.factor();
        let mut soc_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(patterns + 1);
        soc_rows.push((vec![(idx_s, -sqrt_kappa)], 0.0));
        for i in 0..patterns {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(m + 1);
            for l in 0..m {
                let mut coeff = 0.0;
                for z in 0..patterns {
                    coeff += r[i * patterns + z] * a.entry(z, l);
                }
                if coeff != 0.0 {
                    row.push((l, -sqrt_n * coeff));
                }
            }
            let fbar_coeff: f64 = (0..patterns).map(|z| r[i * patterns + z] * fbar[z]).sum();
            if fbar_coeff != 0.0 {
                row.push((idx_s, sqrt_n * fbar_coeff));
            }
            soc_rows.push((row, 0.0));
        }
        let soc_refs: Vec<(&[(usize, f64)], f64)> =
            soc_rows.iter().map(|(r, b)| (r.as_slice(), *b)).collect();
        prog.add_second_order_cone(&soc_refs);
    }
}

fn solve_fractional(
    query: &BoundQuery,
    constraint: InnerConstraint,
    a: &LikelihoodMatrix,
    active_kappa: Option<f64>,
) -> Result<BoundResult> {
    let m = a.cols();
    let idx_s = m;
    let est = query.estimand();

    let mut prog = ConicProgram::new(m + 1);
    let mut objective = vec![0.0; m + 1];
    let sign = match query.direction() {
        Direction::Lower => 1.0,
        Direction::Upper => -1.0,
    };
    for (l, slot) in objective.iter_mut().take(m).enumerate() {
        *slot = sign * est.numerator_coeffs()[l];
    }
    prog.set_objective(&objective);

    // D·y = 1 normalizes the denominator.
    let denom_row: Vec<(usize, f64)> = (0..m)
        .filter_map(|l| {
            let coeff = est.denominator_coeffs()[l];
            (coeff != 0.0).then_some((l, coeff))
        })
        .collect();
    prog.add_equalities(&[(denom_row.as_slice(), 1.0)]);

    add_base_constraints(&mut prog, &constraint, a, idx_s);

    match prog.solve()? {
        RawOutcome::Solution { x, near, .. } => {
            // The reported bound is the ratio at the returned point, which
            // is invariant to the homogenization scale.
            let y: Vec<f64> = x[..m].iter().map(|&v| v.max(0.0)).collect();
            let num: f64 = est
                .numerator_coeffs()
                .iter()
                .zip(&y)
                .map(|(c, v)| c * v)
                .sum();
            let den: f64 = est
                .denominator_coeffs()
                .iter()
                .zip(&y)
                .map(|(c, v)| c * v)
                .sum();
            if !(den.is_finite() && den > 0.0) {
                return Err(Error::Solver(format!(
                    "homogenized solution has denominator {den}"
                )));
            }
            Ok(BoundResult {
                value: BoundValue::Finite(num / den),
                solver_status: if near {
                    SolveStatus::NearOptimal
                } else {
                    SolveStatus::Optimal
                },
                active_kappa,
            })
        }
        // A certificate about the homogenized program alone does not settle
        // the bound: an unbounded ray can coexist with an infeasible
        // normalization (both-infeasible duality corner), and infeasibility
        // of `D·y = 1` may mean an empty constraint set or a denominator
        // that vanishes on all of it. Probe the set itself to tell.
        RawOutcome::UnboundedCert { near } => {
            match probe_denominator(query, &constraint, a)? {
                ProbeOutcome::EmptySet { near: probe_near } => Ok(BoundResult {
                    value: BoundValue::Infeasible,
                    solver_status: status_from(near || probe_near),
                    active_kappa,
                }),
                ProbeOutcome::MaxDenominator(d) if d <= DENOMINATOR_FLOOR => {
                    Err(undefined_conditioning(est.label(), d))
                }
                ProbeOutcome::MaxDenominator(_) => Ok(BoundResult {
                    value: match query.direction() {
                        Direction::Lower => BoundValue::NegInfinite,
                        Direction::Upper => BoundValue::PosInfinite,
                    },
                    solver_status: status_from(near),
                    active_kappa,
                }),
            }
        }
        RawOutcome::InfeasibleCert { near } => {
            match probe_denominator(query, &constraint, a)? {
                ProbeOutcome::EmptySet { near: probe_near } => Ok(BoundResult {
                    value: BoundValue::Infeasible,
                    solver_status: status_from(near || probe_near),
                    active_kappa,
                }),
                ProbeOutcome::MaxDenominator(d) if d <= DENOMINATOR_FLOOR => {
                    Err(undefined_conditioning(est.label(), d))
                }
                ProbeOutcome::MaxDenominator(d) => Err(Error::Solver(format!(
                    "contradictory certificates: bound solve infeasible but denominator mass {d:.3e} is attainable",
                ))),
            }
        }
        RawOutcome::Failed { status } => Err(Error::Solver(format!(
            "bound solve for {} ended without certificate: {status}",
            est.label()
        ))),
    }
}

fn status_from(near: bool) -> SolveStatus {
    if near {
        SolveStatus::NearOptimal
    } else {
        SolveStatus::Optimal
    }
}

fn undefined_conditioning(label: &str, max_denominator: f64) -> Error {
    Error::UndefinedConditioning(format!(
        "estimand {label}: denominator mass at most {max_denominator:.3e} over the whole constraint set",
    ))
}

enum ProbeOutcome {
    /// The constraint set itself is empty.
    EmptySet { near: bool },
    /// Largest attainable denominator mass over the constraint set.
    MaxDenominator(f64),
}

/// Maximizes `D·π` over the constraint set at pinned scale `s = 1`.
fn probe_denominator(
    query: &BoundQuery,
    constraint: &InnerConstraint,
    a: &LikelihoodMatrix,
) -> Result<ProbeOutcome> {
    let m = a.cols();
    let idx_s = m;
    let est = query.estimand();

    let mut probe = ConicProgram::new(m + 1);
    let mut objective = vec![0.0; m + 1];
    for (l, slot) in objective.iter_mut().take(m).enumerate() {
        *slot = -est.denominator_coeffs()[l];
    }
    probe.set_objective(&objective);
    // Pin the scale so the probe searches the actual simplex.
    probe.add_equalities(&[(&[(idx_s, 1.0)], 1.0)]);
    add_base_constraints(&mut probe, constraint, a, idx_s);

    match probe.solve()? {
        RawOutcome::InfeasibleCert { near } => Ok(ProbeOutcome::EmptySet { near }),
        RawOutcome::Solution { x, .. } => {
            let max_denominator: f64 = est
                .denominator_coeffs()
                .iter()
                .zip(&x[..m])
                .map(|(c, v)| c * v.max(0.0))
                .sum();
            Ok(ProbeOutcome::MaxDenominator(max_denominator))
        }
        other => Err(Error::Solver(format!(
            "denominator probe ended without certificate: {other:?}"
        ))),
    }
}
