//! Bivariate binomial likelihood, latent-space grids, and the mixture
//! marginal map.
//!
//! A job audit sends `L` applications per group to each employer and records
//! the callback pair `z = (c_a, c_b)`. Conditional on latent callback
//! probabilities `theta = (p_a, p_b)`, the pair is a product of two
//! binomials. A mixing distribution over `theta` is discretized on a grid
//! and represented by simplex weights; its observable fingerprint is the
//! marginal pmf over the `(L+1)^2` callback patterns.
//!
//! Pattern enumeration order is fixed lexicographic in `(c_a, c_b)` and is
//! identical everywhere in the crate, including serialized artifacts. Grid
//! points are row-major over the axis grid: index `i * K + j` holds
//! `(axis[i], axis[j])`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binomial coefficients are computed directly up to this `L`, in log-space
/// beyond it.
const DIRECT_COEFF_LIMIT: u32 = 20;

/// Number of applications sent per group per job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentDesign {
    applications: u32,
}

impl ExperimentDesign {
    pub fn new(applications: u32) -> Result<Self> {
        if applications < 1 {
            return Err(Error::Domain(
                "applications per group must be at least 1".into(),
            ));
        }
        Ok(Self { applications })
    }

    /// Applications per group per job (`L`).
    pub fn applications(&self) -> u32 {
        self.applications
    }

    /// Number of distinct callback patterns, `(L+1)^2`.
    pub fn pattern_count(&self) -> usize {
        let side = self.applications as usize + 1;
        side * side
    }

    /// Index of a pattern in the fixed lexicographic order over `(c_a, c_b)`.
    pub fn pattern_index(&self, z: CallbackPattern) -> Result<usize> {
        self.validate_pattern(z)?;
        Ok(z.c_a as usize * (self.applications as usize + 1) + z.c_b as usize)
    }

    /// All patterns in the fixed enumeration order.
    pub fn patterns(&self) -> impl Iterator<Item = CallbackPattern> + '_ {
        let l = self.applications;
        (0..=l).flat_map(move |c_a| (0..=l).map(move |c_b| CallbackPattern { c_a, c_b }))
    }

    pub fn validate_pattern(&self, z: CallbackPattern) -> Result<()> {
        if z.c_a > self.applications || z.c_b > self.applications {
            return Err(Error::Domain(format!(
                "callback pattern ({}, {}) outside [0, {}]^2",
                z.c_a, z.c_b, self.applications
            )));
        }
        Ok(())
    }
}

/// Observed callbacks for groups a and b at one job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallbackPattern {
    pub c_a: u32,
    pub c_b: u32,
}

impl CallbackPattern {
    pub fn new(c_a: u32, c_b: u32) -> Self {
        Self { c_a, c_b }
    }
}

impl std::fmt::Display for CallbackPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.c_a, self.c_b)
    }
}

/// Discretized latent support: the product of one axis grid with itself.
///
/// The diagonal `p_a = p_b` is always represented, which degenerate
/// no-discrimination ensembles rely on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points_per_axis: usize,
    points: Vec<(f64, f64)>,
}

impl Grid {
    /// Product grid over an explicit axis. The axis must be strictly
    /// increasing within [0, 1].
    pub fn from_axis(axis: &[f64]) -> Result<Self> {
        if axis.len() < 2 {
            return Err(Error::Domain("grid axis needs at least 2 points".into()));
        }
        if axis[0] < 0.0 || *axis.last().unwrap() > 1.0 || axis.iter().any(|v| v.is_nan()) {
            return Err(Error::Domain("grid axis must lie within [0, 1]".into()));
        }
        for w in axis.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Domain(
                    "grid axis must be strictly increasing".into(),
                ));
            }
        }
        let k = axis.len();
        let mut points = Vec::with_capacity(k * k);
        for &p_a in axis {
            for &p_b in axis {
                points.push((p_a, p_b));
            }
        }
        Ok(Self {
            points_per_axis: k,
            points,
        })
    }

    /// Points per axis (`K`); the grid holds `K^2` points.
    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Latent pair at grid index `l` (row-major over the axis grid).
    pub fn point(&self, l: usize) -> (f64, f64) {
        self.points[l]
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Indices of points on the diagonal `p_a = p_b`.
    pub fn diagonal_indices(&self) -> Vec<usize> {
        (0..self.points_per_axis)
            .map(|i| i * self.points_per_axis + i)
            .collect()
    }
}

/// Equally spaced product grid with `k` points per axis, endpoints included.
pub fn build_grid(k: usize) -> Result<Grid> {
    if k < 2 {
        return Err(Error::Domain(format!(
            "grid needs at least 2 points per axis, got {k}"
        )));
    }
    let denom = (k - 1) as f64;
    let axis: Vec<f64> = (0..k).map(|i| i as f64 / denom).collect();
    Grid::from_axis(&axis)
}

/// Simplex weights over the grid points, representing a discretized mixing
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights {
    weights: Vec<f64>,
}

/// Tolerance on the simplex-sum invariant of [`MixtureWeights`].
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

impl MixtureWeights {
    /// Validates nonnegativity and unit sum (within `1e-9`). Entries above
    /// `-1e-12` are clamped to zero.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let mut weights = weights;
        for w in &mut weights {
            if !w.is_finite() || *w < -1e-12 {
                return Err(Error::Domain(format!("mixture weight {w} is negative")));
            }
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Domain(format!(
                "mixture weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Clamps negatives and renormalizes; for cleaning near-feasible solver
    /// output, not user input.
    pub(crate) fn from_solution(raw: &[f64]) -> Result<Self> {
        let mut weights: Vec<f64> = raw.iter().map(|&w| w.max(0.0)).collect();
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::Solver(format!(
                "solver weights sum to {sum}, cannot renormalize"
            )));
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Self { weights })
    }

    /// All mass on a single grid point.
    pub fn point_mass(index: usize, len: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::Dimension(format!(
                "point mass index {index} out of range for {len} grid points"
            )));
        }
        let mut weights = vec![0.0; len];
        weights[index] = 1.0;
        Ok(Self { weights })
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Dimension(
                "cannot build uniform weights over an empty grid".into(),
            ));
        }
        Ok(Self {
            weights: vec![1.0 / len as f64; len],
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Marginal pmf over callback patterns in the fixed enumeration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalPmf {
    values: Vec<f64>,
}

impl MarginalPmf {
    /// Validates nonnegativity and unit sum within `1e-9`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < -1e-12) {
            return Err(Error::Domain(
                "marginal pmf entries must be nonnegative".into(),
            ));
        }
        let values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "marginal pmf sums to {sum}, expected 1"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `C(l, c) p^c (1-p)^(l-c)` with the convention `0^0 = 1`, so endpoint
/// probabilities are exact.
pub fn binom_pmf(c: u32, l: u32, p: f64) -> Result<f64> {
    if c > l {
        return Err(Error::Domain(format!(
            "callback count {c} exceeds {l} applications"
        )));
    }
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    if p == 0.0 {
        return Ok(if c == 0 { 1.0 } else { 0.0 });
    }
    if p == 1.0 {
        return Ok(if c == l { 1.0 } else { 0.0 });
    }
    if l <= DIRECT_COEFF_LIMIT {
        let coeff = choose_u64(l, c) as f64;
        Ok(coeff * p.powi(c as i32) * (1.0 - p).powi((l - c) as i32))
    } else {
        let log_pmf = ln_choose(l, c) + c as f64 * p.ln() + (l - c) as f64 * (1.0 - p).ln();
        Ok(log_pmf.exp())
    }
}

fn choose_u64(l: u32, c: u32) -> u64 {
    let c = c.min(l - c);
    let mut acc: u64 = 1;
    for i in 0..c as u64 {
        acc = acc * (l as u64 - i) / (i + 1);
    }
    acc
}

fn ln_choose(l: u32, c: u32) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(l as f64 + 1.0) - ln_gamma(c as f64 + 1.0) - ln_gamma((l - c) as f64 + 1.0)
}

/// Probability of callback pattern `z` given latent pair `theta`: the
/// product of the two group binomial pmfs.
pub fn likelihood(z: CallbackPattern, theta: (f64, f64), design: &ExperimentDesign) -> Result<f64> {
    design.validate_pattern(z)?;
    let l = design.applications();
    Ok(binom_pmf(z.c_a, l, theta.0)? * binom_pmf(z.c_b, l, theta.1)?)
}

/// Dense `(L+1)^2 x K^2` matrix of pattern probabilities; column `l` is the
/// pattern pmf of grid point `theta_l`, so `pi -> A pi` maps mixtures to
/// marginals.
#[derive(Debug, Clone)]
pub struct LikelihoodMatrix {
    entries: Vec<f64>, // row-major, stride = grid.len()
    design: ExperimentDesign,
    grid: Grid,
}

impl LikelihoodMatrix {
    pub fn design(&self) -> &ExperimentDesign {
        &self.design
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.design.pattern_count()
    }

    pub fn cols(&self) -> usize {
        self.grid.len()
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.grid.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.grid.len();
        &self.entries[row * n..(row + 1) * n]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.entry(r, col)).collect()
    }

    /// `A pi` without the `MarginalPmf` validation wrapper.
    pub(crate) fn apply(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        for (r, slot) in out.iter_mut().enumerate() {
            let row = self.row(r);
            *slot = row.iter().zip(weights).map(|(a, w)| a * w).sum();
        }
        out
    }
}

/// Tabulates the likelihood of every pattern at every grid point.
///
/// Per-axis binomial pmfs are computed once per distinct axis value so equal
/// latent coordinates share bitwise-identical factors.
pub fn likelihood_matrix(grid: &Grid, design: &ExperimentDesign) -> Result<LikelihoodMatrix> {
    let l = design.applications();
    let side = l as usize + 1;
    let n_patterns = design.pattern_count();
    let n_points = grid.len();

    // One pmf table per grid point and coordinate, deduplicated by axis value.
    let mut pmf_cache: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut pmf_for = |p: f64| -> Result<Vec<f64>> {
        if let Some((_, pmf)) = pmf_cache.iter().find(|(v, _)| *v == p) {
            return Ok(pmf.clone());
        }
        let pmf: Vec<f64> = (0..=l).map(|c| binom_pmf(c, l, p)).collect::<Result<_>>()?;
        pmf_cache.push((p, pmf.clone()));
        Ok(pmf)
    };

    let mut entries = vec![0.0; n_patterns * n_points];
    for (col, &(p_a, p_b)) in grid.points().iter().enumerate() {
        let pmf_a = pmf_for(p_a)?;
        let pmf_b = pmf_for(p_b)?;
        for (c_a, &pa) in pmf_a.iter().enumerate() {
            for (c_b, &pb) in pmf_b.iter().enumerate() {
                let row = c_a * side + c_b;
                entries[row * n_points + col] = pa * pb;
            }
        }
    }

    Ok(LikelihoodMatrix {
        entries,
        design: *design,
        grid: grid.clone(),
    })
}

/// Marginal pmf of the observed pattern under mixture `pi`: `f = A pi`.
pub fn marginal(pi: &MixtureWeights, a: &LikelihoodMatrix) -> Result<MarginalPmf> {
    if pi.len() != a.cols() {
        return Err(Error::Dimension(format!(
            "mixture has {} weights but the likelihood matrix has {} columns",
            pi.len(),
            a.cols()
        )));
    }
    MarginalPmf::from_values(a.apply(pi.weights()))
}
