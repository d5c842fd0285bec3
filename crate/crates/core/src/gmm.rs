//! Moment-matching criterion, projection onto the mixture model, and the
//! bootstrap calibration of the slack level.
//!
//! The criterion is `J_n(f, f̄) = n (f - f̄)ᵀ W (f - f̄)`. Projection
//! minimizes it over marginals of grid mixtures via a second-order cone
//! program in `(π, t)`: minimize `t` subject to `t ≥ ‖√n R(Aπ - f̄)‖` with
//! `W = RᵀR`, then reports `J_opt = t²` recomputed from the polished
//! weights so the returned triple is internally consistent.
//!
//! Slack calibration draws bootstrap datasets from the projected marginal,
//! reprojects each, and takes an upper empirical quantile of the resulting
//! criterion values.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::EmpiricalPmf;
use crate::model::{marginal, LikelihoodMatrix, MarginalPmf, MixtureWeights};
use crate::rng::{derive_seed, sample_categorical, DOMAIN_BOOTSTRAP};
use crate::solver::{ConicProgram, RawOutcome};

/// Symmetric positive semidefinite weighting for the moment criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingMatrix {
    dim: usize,
    entries: Vec<f64>, // row-major dim x dim
}

impl WeightingMatrix {
    /// Builds from a row-major dense matrix, checking symmetry (within
    /// `1e-10`) and positive semidefiniteness (eigenvalues ≥ `-1e-10`).
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "weighting matrix needs {dim}x{dim} entries, got {}",
                entries.len()
            )));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::Domain(
                "weighting matrix entries must be finite".into(),
            ));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let gap = (entries[i * dim + j] - entries[j * dim + i]).abs();
                if gap > 1e-10 {
                    return Err(Error::Domain(format!(
                        "weighting matrix asymmetric at ({i},{j}): gap {gap}"
                    )));
                }
            }
        }
        let w = Self { dim, entries };
        let min_eig = w.min_eigenvalue();
        if min_eig < -1e-10 {
            return Err(Error::Domain(format!(
                "weighting matrix has eigenvalue {min_eig}, not positive semidefinite"
            )));
        }
        Ok(w)
    }

    /// Diagonal weighting from nonnegative entries.
    pub fn diagonal(diag: Vec<f64>) -> Result<Self> {
        if diag.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Domain(
                "diagonal weighting entries must be finite and nonnegative".into(),
            ));
        }
        let dim = diag.len();
        let mut entries = vec![0.0; dim * dim];
        for (i, d) in diag.iter().enumerate() {
            entries[i * dim + i] = *d;
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(vec![1.0; dim]).expect("unit diagonal is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn is_diagonal(&self) -> bool {
        (0..self.dim)
            .all(|i| (0..self.dim).all(|j| i == j || self.entries[i * self.dim + j] == 0.0))
    }

    fn min_eigenvalue(&self) -> f64 {
        if self.is_diagonal() {
            return (0..self.dim)
                .map(|i| self.entry(i, i))
                .fold(f64::INFINITY, f64::min);
        }
        let m = DMatrix::from_row_slice(self.dim, self.dim, &self.entries);
        SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |acc, &v| acc.min(v))
    }

    /// Row-major factor `R` with `W = RᵀR`; tiny negative eigenvalues are
    /// clipped to zero.
    pub fn factor(&self) -> Vec<f64> {
        let d = self.dim;
        if self.is_diagonal() {
            let mut r = vec![0.0; d * d];
            for i in 0..d {
                r[i * d + i] = self.entry(i, i).max(0.0).sqrt();
            }
            return r;
        }
        let m = DMatrix::from_row_slice(d, d, &self.entries);
        let eig = SymmetricEigen::new(m);
        // R = Λ^{1/2} Qᵀ, so row i of R is √λ_i times eigenvector i.
        let mut r = vec![0.0; d * d];
        for i in 0..d {
            let scale = eig.eigenvalues[i].max(0.0).sqrt();
            for j in 0..d {
                r[i * d + j] = scale * eig.eigenvectors[(j, i)];
            }
        }
        r
    }

    /// Quadratic form `rᵀ W r`.
    fn quad(&self, r: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for (i, &ri) in r.iter().enumerate() {
            let row: f64 = self.entries[i * d..(i + 1) * d]
                .iter()
                .zip(r)
                .map(|(w, rj)| w * rj)
                .sum();
            acc += ri * row;
        }
        acc
    }
}

/// Solver verdict attached to fits and bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    Failed,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::NearOptimal => "near_optimal",
            SolveStatus::Failed => "failed",
        };
        f.write_str(name)
    }
}

/// Projection of the empirical pmf onto the mixture model: the best-fitting
/// mixture, its marginal, and the criterion value at the optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    w: WeightingMatrix,
    pi_proj: MixtureWeights,
    f_proj: MarginalPmf,
    j_opt: f64,
    solver_status: SolveStatus,
}

impl GmmFit {
    pub fn weighting(&self) -> &WeightingMatrix {
        &self.w
    }

    /// Best-fitting mixture weights.
    pub fn pi_proj(&self) -> &MixtureWeights {
        &self.pi_proj
    }

    /// Marginal of the best-fitting mixture.
    pub fn f_proj(&self) -> &MarginalPmf {
        &self.f_proj
    }

    /// Criterion value at the projection.
    pub fn j_opt(&self) -> f64 {
        self.j_opt
    }

    pub fn solver_status(&self) -> SolveStatus {
        self.solver_status
    }
}

/// Bootstrap draws of the reprojected criterion value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    replicates: Vec<f64>,
    seed: u64,
    b: u32,
    failures: u32,
}

impl BootstrapResult {
    /// Criterion values of the successful replicates, ordered by replicate
    /// index.
    pub fn replicates(&self) -> &[f64] {
        &self.replicates
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Requested number of replicates.
    pub fn b(&self) -> u32 {
        self.b
    }

    /// Replicates whose projection solve failed (at most 1% of `b`).
    pub fn failures(&self) -> u32 {
        self.failures
    }

    /// Crate-internal constructor for synthetic bootstrap distributions.
    #[cfg(test)]
    pub(crate) fn from_raw(replicates: Vec<f64>, seed: u64, b: u32, failures: u32) -> Self {
        Self {
            replicates,
            seed,
            b,
            failures,
        }
    }
}

/// Default first-stage weighting: diagonal inverse multinomial variance
/// `1 / max(f̄(z)(1 - f̄(z)), 1/(4n))`, the clip guarding empty cells. Any
/// operation taking a [`WeightingMatrix`] accepts a user-supplied one
/// instead.
pub fn default_weighting(fbar: &EmpiricalPmf, n: u64) -> WeightingMatrix {
    let floor = 1.0 / (4.0 * n as f64);
    let diag: Vec<f64> = fbar
        .values()
        .iter()
        .map(|&f| 1.0 / (f * (1.0 - f)).max(floor))
        .collect();
    WeightingMatrix::diagonal(diag).expect("clipped inverse variances are positive")
}

/// Criterion value `n (f - f̄)ᵀ W (f - f̄)`.
pub fn j_stat(f: &MarginalPmf, fbar: &EmpiricalPmf, w: &WeightingMatrix, n: u64) -> Result<f64> {
    if f.len() != fbar.len() || f.len() != w.dim() {
        return Err(Error::Dimension(format!(
            "criterion inputs disagree: f has {}, f̄ has {}, W is {}x{}",
            f.len(),
            fbar.len(),
            w.dim(),
            w.dim()
        )));
    }
    Ok(j_stat_slices(f.values(), fbar.values(), w, n))
}

pub(crate) fn j_stat_slices(f: &[f64], fbar: &[f64], w: &WeightingMatrix, n: u64) -> f64 {
    let r: Vec<f64> = f.iter().zip(fbar).map(|(a, b)| a - b).collect();
    n as f64 * w.quad(&r)
}

/// Minimizes the criterion over marginals of grid mixtures.
///
/// The returned fit is polished for internal consistency: weights are
/// clamped to the simplex, the marginal is recomputed from them, and the
/// criterion value is recomputed from that marginal.
pub fn project(
    fbar: &EmpiricalPmf,
    a: &LikelihoodMatrix,
    w: &WeightingMatrix,
    n: u64,
) -> Result<GmmFit> {
    let patterns = a.rows();
    if fbar.len() != patterns || w.dim() != patterns {
        return Err(Error::Dimension(format!(
            "pattern dimensions disagree: f̄ has {}, likelihood matrix has {}, W is {}x{}",
            fbar.len(),
            patterns,
            w.dim(),
            w.dim()
        )));
    }
    if n < 1 {
        return Err(Error::Validation(
            "criterion needs at least one observation".into(),
        ));
    }

    let m = a.cols();
    let idx_t = m;
    let mut prog = ConicProgram::new(m + 1);
    let mut objective = vec![0.0; m + 1];
    objective[idx_t] = 1.0;
    prog.set_objective(&objective);

    let simplex_row: Vec<(usize, f64)> = (0..m).map(|l| (l, 1.0)).collect();
    prog.add_equalities(&[(simplex_row.as_slice(), 1.0)]);

    let nonneg_rows: Vec<Vec<(usize, f64)>> = (0..m).map(|l| vec![(l, -1.0)]).collect();
    let nonneg_refs: Vec<(&[(usize, f64)], f64)> =
        nonneg_rows.iter().map(|r| (r.as_slice(), 0.0)).collect();
    prog.add_inequalities(&nonneg_refs);

    // t dominates the norm of √n R(Aπ - f̄).
    let sqrt_n = (n as f64).sqrt();
    let r = w.factor();
    let mut soc_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(patterns + 1);
    soc_rows.push((vec![(idx_t, -1.0)], 0.0));
    for i in 0..patterns {
        let mut row = Vec::with_capacity(m);
        for l in 0..m {
            let mut coeff = 0.0;
            for z in 0..patterns {
                coeff += r[i * patterns + z] * a.entry(z, l);
            }
            if coeff != 0.0 {
                row.push((l, -sqrt_n * coeff));
            }
        }
        let rhs: f64 = -sqrt_n
            * (0..patterns)
                .map(|z| r[i * patterns + z] * fbar.values()[z])
                .sum::<f64>();
        soc_rows.push((row, rhs));
    }
    let soc_refs: Vec<(&[(usize, f64)], f64)> = soc_rows
        .iter()
        .map(|(row, rhs)| (row.as_slice(), *rhs))
        .collect();
    prog.add_second_order_cone(&soc_refs);

    match prog.solve()? {
        RawOutcome::Solution { x, near, .. } => {
            let pi_proj = MixtureWeights::from_solution(&x[..m])?;
            let f_proj = marginal(&pi_proj, a)?;
            let j_opt = j_stat_slices(f_proj.values(), fbar.values(), w, n);
            Ok(GmmFit {
                w: w.clone(),
                pi_proj,
                f_proj,
                j_opt,
                solver_status: if near {
                    SolveStatus::NearOptimal
                } else {
                    SolveStatus::Optimal
                },
            })
        }
        other => Err(Error::Solver(format!(
            "projection solve ended without a solution: {other:?}"
        ))),
    }
}

/// Parametric bootstrap of the projected criterion: each replicate draws
/// `n` patterns from the projected marginal, rebuilds the empirical pmf and
/// its default weighting, and reprojects. Replicates run in parallel;
/// values are ordered by replicate index regardless of scheduling.
pub fn bootstrap_jopt(
    fit: &GmmFit,
    a: &LikelihoodMatrix,
    n: u64,
    b: u32,
    seed: u64,
) -> Result<BootstrapResult> {
    if b < 1 {
        return Err(Error::Validation(
            "bootstrap needs at least one replicate".into(),
        ));
    }
    if n < 1 {
        return Err(Error::Validation(
            "bootstrap needs at least one observation".into(),
        ));
    }
    let source = fit.f_proj().values();
    if source.len() != a.rows() {
        return Err(Error::Dimension(format!(
            "fit has {} patterns but likelihood matrix has {}",
            source.len(),
            a.rows()
        )));
    }

    let draws: Vec<Option<f64>> = (0..b)
        .into_par_iter()
        .map(|replicate| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, DOMAIN_BOOTSTRAP, replicate as u64));
            let mut counts = vec![0u64; source.len()];
            for _ in 0..n {
                counts[sample_categorical(&mut rng, source)] += 1;
            }
            let values: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            let fstar = EmpiricalPmf::from_raw(values, n);
            let wstar = default_weighting(&fstar, n);
            project(&fstar, a, &wstar, n).ok().map(|fit| fit.j_opt())
        })
        .collect();

    let failures = draws.iter().filter(|d| d.is_none()).count() as u32;
    if f64::from(failures) > 0.01 * f64::from(b) {
        return Err(Error::Solver(format!(
            "{failures} of {b} bootstrap replicates failed to solve"
        )));
    }
    let replicates: Vec<f64> = draws.into_iter().flatten().collect();
    Ok(BootstrapResult {
        replicates,
        seed,
        b,
        failures,
    })
}

/// Upper empirical quantile of the bootstrap draws at level `1 - alpha`
/// (inverted CDF with higher interpolation, the conservative convention).
pub fn kappa_quantile(boot: &BootstrapResult, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level alpha must be in (0, 1), got {alpha}"
        )));
    }
    let m = boot.replicates().len();
    if m == 0 {
        return Err(Error::Validation(
            "bootstrap has no successful replicates".into(),
        ));
    }
    let mut sorted = boot.replicates().to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("criterion values are never NaN"));
    let rank = (m as f64 * (1.0 - alpha)).ceil() as usize;
    Ok(sorted[rank.clamp(1, m) - 1])
}
