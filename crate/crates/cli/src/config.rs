//! Flat `key = value` run configuration shared by every subcommand.
//!
//! One file — or the built-in defaults, or either overridden by flags —
//! fixes an entire run: design size, grid resolution, input and output
//! locations, estimand list, calibration choices, and the seed.
//! Serialization is lossless: parsing the written form reproduces the
//! struct exactly, so the `config.txt` each command drops into the output
//! directory is a complete, replayable record of the run that made it.
//!
//! Format: one `key = value` per line. Blank lines and lines whose first
//! non-space character is `#` are skipped. A `#` anywhere else is part of
//! the value, so paths containing `#` survive. Unknown and duplicate keys
//! are errors: a config that parses is a config that was read whole.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use callbound::model::WEIGHT_SUM_TOL;
use callbound::{
    discr_estimand, discr_share_estimand, logit_estimand, neq_estimand, odds_estimand,
    CallbackPattern, ExperimentDesign, Grid, OddsRatioSpec, RatioEstimand, SOLVER_TOL,
};

use crate::error::CliError;
use crate::output::fmt_f64;

/// One estimand clause, e.g. `discr:4,0`, `odds:1,0:64`, or `discr_share`.
///
/// The pattern-conditioned kinds name the callback pattern `(c_a, c_b)`
/// after the colon; the odds kind appends the counterfactual number of
/// applications.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimandSpec {
    /// P(group a favored | pattern).
    Discr { c_a: u32, c_b: u32 },
    /// P(propensities differ | pattern).
    Neq { c_a: u32, c_b: u32 },
    /// Expected bounded logit gap given the pattern.
    Logit { c_a: u32, c_b: u32 },
    /// Callback odds ratio at `l_prime` counterfactual applications.
    Odds { c_a: u32, c_b: u32, l_prime: u32 },
    /// P(p_a > p_b) without conditioning.
    DiscrShare,
}

impl EstimandSpec {
    /// Instantiates the clause as coefficient vectors over `grid`.
    pub fn build(
        &self,
        grid: &Grid,
        design: &ExperimentDesign,
    ) -> callbound::Result<RatioEstimand> {
        match *self {
            EstimandSpec::Discr { c_a, c_b } => {
                discr_estimand(CallbackPattern::new(c_a, c_b), grid, design)
            }
            EstimandSpec::Neq { c_a, c_b } => {
                neq_estimand(CallbackPattern::new(c_a, c_b), grid, design)
            }
            EstimandSpec::Logit { c_a, c_b } => {
                logit_estimand(CallbackPattern::new(c_a, c_b), grid, design)
            }
            EstimandSpec::Odds { c_a, c_b, l_prime } => odds_estimand(
                OddsRatioSpec::new(CallbackPattern::new(c_a, c_b), l_prime)?,
                grid,
                design,
            ),
            EstimandSpec::DiscrShare => Ok(discr_share_estimand(grid)),
        }
    }
}

impl fmt::Display for EstimandSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            EstimandSpec::Discr { c_a, c_b } => write!(f, "discr:{c_a},{c_b}"),
            EstimandSpec::Neq { c_a, c_b } => write!(f, "neq:{c_a},{c_b}"),
            EstimandSpec::Logit { c_a, c_b } => write!(f, "logit:{c_a},{c_b}"),
            EstimandSpec::Odds { c_a, c_b, l_prime } => write!(f, "odds:{c_a},{c_b}:{l_prime}"),
            EstimandSpec::DiscrShare => f.write_str("discr_share"),
        }
    }
}

impl FromStr for EstimandSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = |why: &str| {
            CliError::validation(format!(
                "estimand clause `{s}`: {why}; expected discr:CA,CB | neq:CA,CB | \
                 logit:CA,CB | odds:CA,CB:LPRIME | discr_share"
            ))
        };
        if s == "discr_share" {
            return Ok(EstimandSpec::DiscrShare);
        }
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad("missing `:`"))?;
        let pattern = |text: &str| -> Result<(u32, u32), CliError> {
            let (a, b) = text
                .split_once(',')
                .ok_or_else(|| bad("pattern needs `CA,CB`"))?;
            Ok((
                a.trim().parse().map_err(|_| bad("CA is not a count"))?,
                b.trim().parse().map_err(|_| bad("CB is not a count"))?,
            ))
        };
        match kind {
            "discr" => {
                let (c_a, c_b) = pattern(rest)?;
                Ok(EstimandSpec::Discr { c_a, c_b })
            }
            "neq" => {
                let (c_a, c_b) = pattern(rest)?;
                Ok(EstimandSpec::Neq { c_a, c_b })
            }
            "logit" => {
                let (c_a, c_b) = pattern(rest)?;
                Ok(EstimandSpec::Logit { c_a, c_b })
            }
            "odds" => {
                let (pat, lp) = rest
                    .rsplit_once(':')
                    .ok_or_else(|| bad("odds needs `:LPRIME`"))?;
                let (c_a, c_b) = pattern(pat)?;
                let l_prime = lp
                    .trim()
                    .parse()
                    .map_err(|_| bad("LPRIME is not a count"))?;
                Ok(EstimandSpec::Odds { c_a, c_b, l_prime })
            }
            other => Err(bad(&format!("unknown kind `{other}`"))),
        }
    }
}

/// Where the slack level κ̂ comes from: `bootstrap`, `chi2`, or
/// `fixed:<value>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaSource {
    Bootstrap,
    Chi2,
    Fixed(f64),
}

impl fmt::Display for KappaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KappaSource::Bootstrap => f.write_str("bootstrap"),
            KappaSource::Chi2 => f.write_str("chi2"),
            KappaSource::Fixed(v) => write!(f, "fixed:{}", fmt_f64(*v)),
        }
    }
}

impl FromStr for KappaSource {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "bootstrap" => Ok(KappaSource::Bootstrap),
            "chi2" => Ok(KappaSource::Chi2),
            _ => {
                let v = s
                    .strip_prefix("fixed:")
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        CliError::validation(format!(
                            "kappa_source `{s}`: expected bootstrap | chi2 | fixed:<value>"
                        ))
                    })?;
                Ok(KappaSource::Fixed(v))
            }
        }
    }
}

/// One support atom for simulation: `p_a,p_b:weight`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimAtom {
    pub p_a: f64,
    pub p_b: f64,
    pub weight: f64,
}

impl fmt::Display for SimAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{}:{}",
            fmt_f64(self.p_a),
            fmt_f64(self.p_b),
            fmt_f64(self.weight)
        )
    }
}

impl FromStr for SimAtom {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::validation(format!("sim atom `{s}`: expected `p_a,p_b:weight`"));
        let (pair, w) = s.rsplit_once(':').ok_or_else(bad)?;
        let (pa, pb) = pair.split_once(',').ok_or_else(bad)?;
        Ok(SimAtom {
            p_a: pa.trim().parse().map_err(|_| bad())?,
            p_b: pb.trim().parse().map_err(|_| bad())?,
            weight: w.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// The complete run configuration. See module docs for the file format.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Paired applications per job.
    pub l: u32,
    /// Propensity grid resolution (points per axis).
    pub k: usize,
    /// Input count CSV; required by every data-consuming command.
    pub input: Option<PathBuf>,
    /// Directory for all artifacts; created if missing.
    pub output_dir: PathBuf,
    /// Estimand clauses, `;`-separated in the file.
    pub estimands: Vec<EstimandSpec>,
    /// Simultaneous miscoverage level for calibration and intervals.
    pub alpha: f64,
    /// How the slack level κ̂ is chosen.
    pub kappa_source: KappaSource,
    /// Bootstrap replicates when `kappa_source = bootstrap`.
    pub bootstrap_b: u32,
    /// Root seed; every random subsystem derives its own stream from it.
    pub seed: u64,
    /// Worker threads; 0 means one per core.
    pub threads: usize,
    /// Conic solver tolerance. Compiled in; the key may only restate it.
    pub solver_tol: f64,
    /// Grid resolutions for `bound-curve`; empty means just `k`.
    pub k_sweep: Vec<usize>,
    /// Support atoms for `simulate`, `;`-separated in the file.
    pub sim_atoms: Vec<SimAtom>,
    /// Jobs to draw in `simulate`.
    pub sim_n: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            l: 2,
            k: 20,
            input: None,
            output_dir: PathBuf::from("out"),
            estimands: Vec::new(),
            alpha: 0.05,
            kappa_source: KappaSource::Bootstrap,
            bootstrap_b: 500,
            seed: 0,
            threads: 0,
            solver_tol: SOLVER_TOL,
            k_sweep: Vec::new(),
            sim_atoms: Vec::new(),
            sim_n: 500,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::validation(format!("config key `{key}`: bad value `{value}`")))
}

fn parse_clauses<T>(value: &str, sep: char) -> Result<Vec<T>, CliError>
where
    T: FromStr<Err = CliError>,
{
    value
        .split(sep)
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(str::parse)
        .collect()
}

impl RunConfig {
    /// Parses the `key = value` form, starting from the defaults.
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::validation(format!(
                    "config line {lineno}: expected `key = value`, got `{raw}`"
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(CliError::validation(format!(
                    "config line {lineno}: duplicate key `{key}`"
                )));
            }
            match key {
                "l" => cfg.l = parse_num(key, value)?,
                "k" => cfg.k = parse_num(key, value)?,
                "input" => cfg.input = Some(PathBuf::from(value)),
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "estimands" => cfg.estimands = parse_clauses(value, ';')?,
                "alpha" => cfg.alpha = parse_num(key, value)?,
                "kappa_source" => cfg.kappa_source = value.parse()?,
                "bootstrap_b" => cfg.bootstrap_b = parse_num(key, value)?,
                "seed" => cfg.seed = parse_num(key, value)?,
                "threads" => cfg.threads = parse_num(key, value)?,
                "solver_tol" => cfg.solver_tol = parse_num(key, value)?,
                "k_sweep" => {
                    cfg.k_sweep = value
                        .split(',')
                        .map(str::trim)
                        .filter(|c| !c.is_empty())
                        .map(|c| parse_num("k_sweep", c))
                        .collect::<Result<_, _>>()?;
                }
                "sim_atoms" => cfg.sim_atoms = parse_clauses(value, ';')?,
                "sim_n" => cfg.sim_n = parse_num(key, value)?,
                other => {
                    return Err(CliError::validation(format!(
                        "config line {lineno}: unknown key `{other}`"
                    )));
                }
            }
        }
        Ok(cfg)
    }

    /// Writes the canonical file form; `parse` of the result is `self`.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "l = {}", self.l);
        let _ = writeln!(s, "k = {}", self.k);
        if let Some(input) = &self.input {
            let _ = writeln!(s, "input = {}", input.display());
        }
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        if !self.estimands.is_empty() {
            let clauses: Vec<String> = self.estimands.iter().map(|e| e.to_string()).collect();
            let _ = writeln!(s, "estimands = {}", clauses.join("; "));
        }
        let _ = writeln!(s, "alpha = {}", fmt_f64(self.alpha));
        let _ = writeln!(s, "kappa_source = {}", self.kappa_source);
        let _ = writeln!(s, "bootstrap_b = {}", self.bootstrap_b);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "solver_tol = {}", fmt_f64(self.solver_tol));
        if !self.k_sweep.is_empty() {
            let ks: Vec<String> = self.k_sweep.iter().map(|k| k.to_string()).collect();
            let _ = writeln!(s, "k_sweep = {}", ks.join(", "));
        }
        if !self.sim_atoms.is_empty() {
            let atoms: Vec<String> = self.sim_atoms.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(s, "sim_atoms = {}", atoms.join("; "));
        }
        let _ = writeln!(s, "sim_n = {}", self.sim_n);
        s
    }

    /// Field-level checks that do not need the data: ranges, ordering, and
    /// the pinned solver tolerance. Pattern-versus-design checks happen
    /// when estimands are instantiated.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.l < 1 {
            return Err(CliError::validation("l must be at least 1"));
        }
        if self.k < 2 {
            return Err(CliError::validation("k must be at least 2"));
        }
        if !(self.alpha.is_finite() && 0.0 < self.alpha && self.alpha < 1.0) {
            return Err(CliError::validation(format!(
                "alpha must satisfy 0 < alpha < 1, got {}",
                self.alpha
            )));
        }
        if self.bootstrap_b < 1 {
            return Err(CliError::validation("bootstrap_b must be at least 1"));
        }
        if let KappaSource::Fixed(v) = self.kappa_source {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::validation(format!(
                    "fixed slack level must be finite and nonnegative, got {v}"
                )));
            }
        }
        if self.solver_tol != SOLVER_TOL {
            return Err(CliError::validation(format!(
                "solver_tol is compiled in at {SOLVER_TOL:e}; remove the key or restate that value"
            )));
        }
        if self.k_sweep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::validation("k_sweep must be strictly increasing"));
        }
        if self.k_sweep.first().is_some_and(|&k| k < 2) {
            return Err(CliError::validation("k_sweep entries must be at least 2"));
        }
        if !self.sim_atoms.is_empty() {
            for atom in &self.sim_atoms {
                let on_axis = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
                if !(on_axis(atom.p_a) && on_axis(atom.p_b)) {
                    return Err(CliError::validation(format!(
                        "sim atom ({}, {}) is outside the unit square",
                        atom.p_a, atom.p_b
                    )));
                }
                if !(atom.weight.is_finite() && atom.weight > 0.0) {
                    return Err(CliError::validation(format!(
                        "sim atom weight {} must be positive",
                        atom.weight
                    )));
                }
            }
            let total: f64 = self.sim_atoms.iter().map(|a| a.weight).sum();
            if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(CliError::validation(format!(
                    "sim atom weights sum to {total}, expected 1"
                )));
            }
        }
        if self.sim_n < 1 {
            return Err(CliError::validation("sim_n must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exotic() -> RunConfig {
        RunConfig {
            l: 4,
            k: 35,
            input: Some(PathBuf::from("data/counts #7.csv")),
            output_dir: PathBuf::from("runs/aug"),
            estimands: vec![
                EstimandSpec::Discr { c_a: 4, c_b: 0 },
                EstimandSpec::Neq { c_a: 2, c_b: 1 },
                EstimandSpec::Logit { c_a: 0, c_b: 3 },
                EstimandSpec::Odds {
                    c_a: 1,
                    c_b: 0,
                    l_prime: 64,
                },
                EstimandSpec::DiscrShare,
            ],
            alpha: 0.1,
            kappa_source: KappaSource::Fixed(2.65013),
            bootstrap_b: 37,
            seed: 0xdead_beef,
            threads: 3,
            solver_tol: SOLVER_TOL,
            k_sweep: vec![5, 10, 40],
            sim_atoms: vec![
                SimAtom {
                    p_a: 0.25,
                    p_b: 0.5,
                    weight: 0.4,
                },
                SimAtom {
                    p_a: 1.0 / 3.0,
                    p_b: 0.75,
                    weight: 0.6,
                },
            ],
            sim_n: 1234,
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        for cfg in [RunConfig::default(), exotic()] {
            let text = cfg.to_config_string();
            assert_eq!(RunConfig::parse(&text).unwrap(), cfg, "{text}");
        }
    }

    #[test]
    fn comments_and_blanks_are_skipped_but_values_keep_hashes() {
        let cfg = RunConfig::parse("# header\n\n  # indented comment\ninput = a#b.csv\n").unwrap();
        assert_eq!(cfg.input, Some(PathBuf::from("a#b.csv")));
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        let unknown = RunConfig::parse("kappa = 3\n").unwrap_err();
        assert!(unknown.to_string().contains("unknown key `kappa`"));
        let dup = RunConfig::parse("seed = 1\nseed = 2\n").unwrap_err();
        assert!(dup.to_string().contains("duplicate key `seed`"));
    }

    #[test]
    fn estimand_clauses_parse_and_reject() {
        assert_eq!(
            "odds:1,0:64".parse::<EstimandSpec>().unwrap(),
            EstimandSpec::Odds {
                c_a: 1,
                c_b: 0,
                l_prime: 64
            }
        );
        assert_eq!(
            "discr_share".parse::<EstimandSpec>().unwrap(),
            EstimandSpec::DiscrShare
        );
        for bad in ["discr", "discr:1", "odds:1,0", "share", "neq:a,b"] {
            assert!(bad.parse::<EstimandSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn solver_tol_may_only_restate_the_builtin() {
        let cfg = RunConfig {
            solver_tol: 1e-6,
            ..RunConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("compiled in"));
    }

    #[test]
    fn sim_atom_weights_must_sum_to_one() {
        let cfg = RunConfig {
            sim_atoms: vec![
                SimAtom {
                    p_a: 0.2,
                    p_b: 0.4,
                    weight: 0.5,
                },
                SimAtom {
                    p_a: 0.6,
                    p_b: 0.1,
                    weight: 0.6,
                },
            ],
            ..RunConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("sum to"));
    }
}
