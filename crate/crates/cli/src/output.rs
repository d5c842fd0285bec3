//! Artifact writers with pinned number formatting.
//!
//! Identical runs must produce byte-identical files, so every float in
//! every artifact goes through a single 17-significant-digit formatter.
//! That many digits round-trips `f64` exactly: the printed decimals parse
//! back to the same binary values a rerun would compute.

use std::fs;
use std::io;
use std::path::Path;

use callbound::{BoundValue, ConfidenceInterval, KappaProvenance};
use serde::Serialize;

use crate::error::CliError;

/// Canonical float rendering: 17 significant digits, exact round-trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Extended-value rendering for interval endpoints stored as `f64`.
pub fn fmt_extended(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".to_owned()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_owned()
    } else {
        fmt_f64(v)
    }
}

/// Bound values as they appear in CSV cells.
pub fn fmt_bound(v: &BoundValue) -> String {
    match v {
        BoundValue::Finite(x) => fmt_f64(*x),
        BoundValue::PosInfinite => "+inf".to_owned(),
        BoundValue::NegInfinite => "-inf".to_owned(),
        BoundValue::Infeasible => "infeasible".to_owned(),
    }
}

/// JSON formatter that routes every `f64` through the canonical rendering.
struct PinnedFloats;

impl serde_json::ser::Formatter for PinnedFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes `value` as JSON with pinned floats and a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PinnedFloats);
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    buf.push(b'\n');
    fs::write(path, &buf).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// `fit.json`: the projection of the empirical pattern distribution onto
/// the model set, with the inputs needed to reproduce it.
#[derive(Serialize)]
pub struct FitArtifact {
    pub l: u32,
    pub k: usize,
    pub n: u64,
    pub j_opt: f64,
    pub solver_status: String,
    pub f_proj: Vec<f64>,
    pub weighting_diag: Vec<f64>,
}

/// `bootstrap.json`: criterion replicates and the calibrated slack level.
#[derive(Serialize)]
pub struct BootstrapArtifact {
    pub b: u32,
    pub seed: u64,
    pub failures: u32,
    pub alpha: f64,
    pub kappa_hat: f64,
    pub replicates: Vec<f64>,
}

/// `bound.json`: one sharp bound and how it was computed.
#[derive(Serialize)]
pub struct BoundArtifact {
    pub estimand: String,
    pub direction: &'static str,
    pub constraint: &'static str,
    pub kappa: Option<f64>,
    pub value: BoundValue,
    pub solver_status: String,
    pub active_kappa: Option<f64>,
}

/// One entry of `ci.json`. The file is an array with one record per
/// requested estimand; the shapes distinguish a computed interval, a
/// per-estimand failure, and a whole-family rejection.
#[derive(Serialize)]
#[serde(untagged)]
pub enum CiRecord {
    Interval {
        #[serde(flatten)]
        interval: ConfidenceInterval,
        kappa_hat: f64,
        kappa_provenance: KappaProvenance,
        specification_test: &'static str,
    },
    Failed {
        estimand: String,
        error: String,
    },
    Rejected {
        estimand: String,
        alpha: f64,
        kappa_hat: f64,
        kappa_provenance: KappaProvenance,
        specification_test: &'static str,
    },
}
