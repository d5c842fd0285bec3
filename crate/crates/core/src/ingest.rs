//! Dataset loading, validation, summarization, and synthetic generation.
//!
//! Input is one CSV row per job with the observed callback pair. Datasets
//! are stored as pattern counts; the empirical pmf over the fixed pattern
//! order is the sufficient statistic every downstream fit consumes.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{CallbackPattern, ExperimentDesign, Grid, MixtureWeights};
use crate::rng::{derive_seed, sample_binomial, sample_categorical, DOMAIN_SIMULATE};

/// Column headers required in dataset CSV files.
pub const CSV_HEADER: [&str; 3] = ["job_id", "callbacks_a", "callbacks_b"];

/// Observed correspondence experiment: pattern occurrence counts for `n`
/// jobs under one design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    design: ExperimentDesign,
    n: u64,
    counts: BTreeMap<CallbackPattern, u64>,
}

impl Dataset {
    /// Builds from aggregated counts, validating that every pattern is in
    /// range and at least one job is present.
    pub fn from_counts(
        design: ExperimentDesign,
        counts: BTreeMap<CallbackPattern, u64>,
    ) -> Result<Self> {
        for &z in counts.keys() {
            design.validate_pattern(z)?;
        }
        let n: u64 = counts.values().sum();
        if n == 0 {
            return Err(Error::Validation("dataset holds no jobs".into()));
        }
        let counts = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        Ok(Self { design, n, counts })
    }

    pub fn design(&self) -> &ExperimentDesign {
        &self.design
    }

    /// Number of jobs.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Occurrence count per pattern; patterns never observed are absent.
    pub fn counts(&self) -> &BTreeMap<CallbackPattern, u64> {
        &self.counts
    }

    pub fn count(&self, z: CallbackPattern) -> u64 {
        self.counts.get(&z).copied().unwrap_or(0)
    }
}

/// Empirical pattern frequencies in the fixed enumeration order, with the
/// sample size they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPmf {
    values: Vec<f64>,
    n: u64,
}

impl EmpiricalPmf {
    /// Crate-internal constructor for frequencies already in pattern order.
    pub(crate) fn from_raw(values: Vec<f64>, n: u64) -> Self {
        Self { values, n }
    }

    /// Frequencies `count(z) / n` in the fixed pattern order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of jobs the frequencies are based on.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Loads one-row-per-job callback data.
///
/// The header must be exactly `job_id,callbacks_a,callbacks_b`. Callback
/// counts outside `[0, L]` are a validation error naming the offending row.
pub fn load_csv(path: &Path, design: &ExperimentDesign) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Validation(format!(
            "expected header `{}`, found `{}`",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut counts: BTreeMap<CallbackPattern, u64> = BTreeMap::new();
    let mut n: u64 = 0;
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2; // 1-based, after the header line
        let record = record?;
        if record.len() != 3 {
            return Err(Error::Validation(format!(
                "row {row}: expected 3 fields, found {}",
                record.len()
            )));
        }
        let parse = |field: usize, name: &str| -> Result<u32> {
            record[field].trim().parse::<u32>().map_err(|_| {
                Error::Validation(format!(
                    "row {row}: cannot parse {name} value `{}`",
                    &record[field]
                ))
            })
        };
        let c_a = parse(1, "callbacks_a")?;
        let c_b = parse(2, "callbacks_b")?;
        let l = design.applications();
        if c_a > l || c_b > l {
            return Err(Error::Validation(format!(
                "row {row}: callbacks ({c_a}, {c_b}) exceed {l} applications per group"
            )));
        }
        *counts.entry(CallbackPattern::new(c_a, c_b)).or_insert(0) += 1;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Validation(format!(
            "{} holds no data rows",
            path.display()
        )));
    }
    Dataset::from_counts(*design, counts)
}

/// Writes a dataset back out in the `load_csv` schema, one row per job with
/// sequential job ids, rows grouped by pattern in the fixed order.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    let mut job_id: u64 = 1;
    for (&z, &count) in data.counts() {
        for _ in 0..count {
            writeln!(out, "{},{},{}", job_id, z.c_a, z.c_b)?;
            job_id += 1;
        }
    }
    out.flush()?;
    Ok(())
}

/// Frequency vector `f̄(z) = count(z)/n` in the fixed pattern order.
pub fn empirical_pmf(data: &Dataset) -> EmpiricalPmf {
    let design = data.design();
    let mut values = vec![0.0; design.pattern_count()];
    let n = data.n() as f64;
    for (&z, &count) in data.counts() {
        let idx = design
            .pattern_index(z)
            .expect("dataset invariant guarantees in-range patterns");
        values[idx] = count as f64 / n;
    }
    EmpiricalPmf {
        values,
        n: data.n(),
    }
}

/// Draws `n` jobs: a latent pair from `pi`, then a callback pair from the
/// bivariate binomial. Identical seeds produce identical datasets.
pub fn simulate(
    pi: &MixtureWeights,
    grid: &Grid,
    design: &ExperimentDesign,
    n: u64,
    seed: u64,
) -> Result<Dataset> {
    if pi.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "mixture has {} weights but the grid has {} points",
            pi.len(),
            grid.len()
        )));
    }
    if n == 0 {
        return Err(Error::Validation(
            "cannot simulate a dataset with 0 jobs".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, DOMAIN_SIMULATE, 0));
    let l = design.applications();
    let mut counts: BTreeMap<CallbackPattern, u64> = BTreeMap::new();
    for _ in 0..n {
        let point = sample_categorical(&mut rng, pi.weights());
        let (p_a, p_b) = grid.point(point);
        let c_a = sample_binomial(&mut rng, l, p_a);
        let c_b = sample_binomial(&mut rng, l, p_b);
        *counts.entry(CallbackPattern::new(c_a, c_b)).or_insert(0) += 1;
    }
    Dataset::from_counts(*design, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, likelihood_matrix, marginal};
    use std::io::Write;

    fn design(l: u32) -> ExperimentDesign {
        ExperimentDesign::new(l).unwrap()
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file.flush().unwrap();
        file
    }

    #[test]
    fn load_csv_aggregates_repeated_pattern() {
        let file = write_temp("job_id,callbacks_a,callbacks_b\n1,0,0\n2,0,0\n3,0,0\n");
        let data = load_csv(file.path(), &design(4)).unwrap();
        assert_eq!(data.n(), 3);
        assert_eq!(data.count(CallbackPattern::new(0, 0)), 3);
        assert_eq!(data.counts().len(), 1);
    }

    #[test]
    fn load_csv_rejects_out_of_range_callbacks() {
        let file = write_temp("job_id,callbacks_a,callbacks_b\n1,5,0\n");
        let err = load_csv(file.path(), &design(4)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "error should name the row: {msg}");
    }

    #[test]
    fn load_csv_mixed_rows() {
        let file = write_temp("job_id,callbacks_a,callbacks_b\n1,1,0\n2,1,0\n3,4,0\n");
        let data = load_csv(file.path(), &design(4)).unwrap();
        assert_eq!(data.count(CallbackPattern::new(1, 0)), 2);
        assert_eq!(data.count(CallbackPattern::new(4, 0)), 1);
        assert_eq!(data.n(), 3);
    }

    #[test]
    fn load_csv_rejects_wrong_header() {
        let file = write_temp("id,a,b\n1,0,0\n");
        assert!(load_csv(file.path(), &design(1)).is_err());
    }

    #[test]
    fn load_csv_rejects_header_only_file() {
        let file = write_temp("job_id,callbacks_a,callbacks_b\n");
        assert!(load_csv(file.path(), &design(1)).is_err());
    }

    #[test]
    fn load_csv_rejects_non_integer_field() {
        let file = write_temp("job_id,callbacks_a,callbacks_b\n1,x,0\n");
        let err = load_csv(file.path(), &design(1)).unwrap_err();
        assert!(err.to_string().contains("callbacks_a"));
    }

    #[test]
    fn load_csv_missing_file_is_io_error() {
        let err = load_csv(Path::new("/nonexistent/data.csv"), &design(1)).unwrap_err();
        assert!(matches!(err, Error::Csv(_) | Error::Io(_)));
    }

    #[test]
    fn empirical_pmf_two_patterns() {
        let mut counts = BTreeMap::new();
        counts.insert(CallbackPattern::new(0, 0), 2);
        counts.insert(CallbackPattern::new(1, 1), 2);
        let data = Dataset::from_counts(design(1), counts).unwrap();
        let pmf = empirical_pmf(&data);
        assert_eq!(pmf.values(), &[0.5, 0.0, 0.0, 0.5]);
        assert_eq!(pmf.n(), 4);
    }

    #[test]
    fn empirical_pmf_single_job_is_indicator() {
        let mut counts = BTreeMap::new();
        counts.insert(CallbackPattern::new(1, 0), 1);
        let data = Dataset::from_counts(design(1), counts).unwrap();
        let pmf = empirical_pmf(&data);
        assert_eq!(pmf.values(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn empirical_pmf_tracks_marginal_at_n_1000() {
        let grid = build_grid(5).unwrap();
        let d = design(2);
        let a = likelihood_matrix(&grid, &d).unwrap();
        let pi = MixtureWeights::uniform(grid.len()).unwrap();
        let f = marginal(&pi, &a).unwrap();
        let n = 1000;
        let data = simulate(&pi, &grid, &d, n, 20_240_817).unwrap();
        let pmf = empirical_pmf(&data);
        for (got, want) in pmf.values().iter().zip(f.values()) {
            let sd = (want * (1.0 - want) / n as f64).sqrt();
            assert!(
                (got - want).abs() <= 3.0 * sd,
                "frequency {got} vs marginal {want} beyond 3 standard deviations"
            );
        }
    }

    #[test]
    fn simulate_point_mass_at_origin() {
        let grid = build_grid(3).unwrap();
        let d = design(4);
        let origin = grid.points().iter().position(|&p| p == (0.0, 0.0)).unwrap();
        let pi = MixtureWeights::point_mass(origin, grid.len()).unwrap();
        let data = simulate(&pi, &grid, &d, 50, 1).unwrap();
        assert_eq!(data.count(CallbackPattern::new(0, 0)), 50);
    }

    #[test]
    fn simulate_point_mass_at_upper_corner() {
        let grid = build_grid(3).unwrap();
        let d = design(2);
        let corner = grid.points().iter().position(|&p| p == (1.0, 1.0)).unwrap();
        let pi = MixtureWeights::point_mass(corner, grid.len()).unwrap();
        let data = simulate(&pi, &grid, &d, 50, 2).unwrap();
        assert_eq!(data.count(CallbackPattern::new(2, 2)), 50);
    }

    #[test]
    fn simulate_two_point_mixture_matches_marginal() {
        // Uniform over {(0.2, 0.2), (0.8, 0.2)} on the K=6 grid, which has
        // both points on its 0.2-spaced axis.
        let grid = build_grid(6).unwrap();
        let d = design(1);
        let mut w = vec![0.0; grid.len()];
        let i1 = grid.points().iter().position(|&p| p == (0.2, 0.2)).unwrap();
        let i2 = grid.points().iter().position(|&p| p == (0.8, 0.2)).unwrap();
        w[i1] = 0.5;
        w[i2] = 0.5;
        let pi = MixtureWeights::new(w).unwrap();
        let a = likelihood_matrix(&grid, &d).unwrap();
        let f = marginal(&pi, &a).unwrap();
        let data = simulate(&pi, &grid, &d, 10_000, 99).unwrap();
        let pmf = empirical_pmf(&data);
        let sup = pmf
            .values()
            .iter()
            .zip(f.values())
            .map(|(g, w)| (g - w).abs())
            .fold(0.0_f64, f64::max);
        assert!(sup <= 0.02, "sup-norm gap {sup} exceeds 0.02");
    }

    #[test]
    fn simulate_round_trip_converges() {
        let grid = build_grid(4).unwrap();
        let d = design(4);
        let pi = MixtureWeights::uniform(grid.len()).unwrap();
        let a = likelihood_matrix(&grid, &d).unwrap();
        let f = marginal(&pi, &a).unwrap();
        let data = simulate(&pi, &grid, &d, 100_000, 7).unwrap();
        let pmf = empirical_pmf(&data);
        let sup = pmf
            .values()
            .iter()
            .zip(f.values())
            .map(|(g, w)| (g - w).abs())
            .fold(0.0_f64, f64::max);
        assert!(sup <= 0.01, "sup-norm gap {sup} exceeds 0.01");
    }

    #[test]
    fn simulate_is_deterministic_in_seed() {
        let grid = build_grid(4).unwrap();
        let d = design(2);
        let pi = MixtureWeights::uniform(grid.len()).unwrap();
        let one = simulate(&pi, &grid, &d, 500, 42).unwrap();
        let two = simulate(&pi, &grid, &d, 500, 42).unwrap();
        let three = simulate(&pi, &grid, &d, 500, 43).unwrap();
        assert_eq!(one, two);
        assert_ne!(one, three);
    }

    #[test]
    fn write_csv_round_trips() {
        let mut counts = BTreeMap::new();
        counts.insert(CallbackPattern::new(1, 0), 2);
        counts.insert(CallbackPattern::new(2, 2), 1);
        let d = design(2);
        let data = Dataset::from_counts(d, counts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("jobs.csv");
        write_csv(&data, &path).unwrap();
        let back = load_csv(&path, &d).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn dataset_rejects_empty_counts() {
        assert!(Dataset::from_counts(design(1), BTreeMap::new()).is_err());
    }

    #[test]
    fn dataset_rejects_out_of_range_pattern() {
        let mut counts = BTreeMap::new();
        counts.insert(CallbackPattern::new(9, 0), 1);
        assert!(Dataset::from_counts(design(2), counts).is_err());
    }
}
