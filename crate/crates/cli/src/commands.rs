//! Subcommand implementations.
//!
//! Each command reads the shared run configuration, performs one pipeline
//! stage, and writes fixed-name artifacts into the output directory:
//!
//! - `fit` → `fit.json`, `fbar.csv`
//! - `bootstrap` → `bootstrap.json`
//! - `bound` → `bound.json`
//! - `bound-curve` → `curve_<estimand>_k<K>.csv` per estimand and grid size
//! - `ci` → `ci.json`
//! - `simulate` → `simulated.csv`
//!
//! Every command also drops `config.txt`, the canonical form of the
//! configuration it actually ran with, so any artifact directory can be
//! replayed verbatim.

use std::fmt::Write as _;
use std::fs;

use callbound::{
    bootstrap_jopt, bound_curve, build_grid, calibrate, chi2_localization, confidence_interval,
    default_kappa_grid, default_weighting, empirical_pmf, fixed_localization, likelihood_matrix,
    load_csv, project, simulate, solve_linear_constraint, solve_slack, write_csv, BootstrapResult,
    BoundConstraint, BoundQuery, BoundValue, CiRequest, Dataset, Direction, EmpiricalPmf, Error,
    ExperimentDesign, FLocalization, GmmFit, Grid, IntervalSides, LikelihoodMatrix, MixtureWeights,
    WeightingMatrix,
};

use crate::config::{KappaSource, RunConfig};
use crate::error::CliError;
use crate::output::{
    fmt_bound, fmt_extended, fmt_f64, write_json, write_text, BootstrapArtifact, BoundArtifact,
    CiRecord, FitArtifact,
};

/// Everything the data-consuming commands share: the design, a grid with
/// its likelihood matrix, the loaded counts, and the projection fit.
struct Fitted {
    design: ExperimentDesign,
    grid: Grid,
    a: LikelihoodMatrix,
    data: Dataset,
    fbar: EmpiricalPmf,
    w: WeightingMatrix,
    fit: GmmFit,
}

impl Fitted {
    fn n(&self) -> u64 {
        self.fbar.n()
    }
}

fn load_input(cfg: &RunConfig, design: &ExperimentDesign) -> Result<Dataset, CliError> {
    let input = cfg.input.as_ref().ok_or_else(|| {
        CliError::validation("no input data: set `input` in the config or pass --input")
    })?;
    load_csv(input, design).map_err(|e| CliError::from(e).prefixed(&input.display().to_string()))
}

fn fit_at(cfg: &RunConfig, k: usize) -> Result<Fitted, CliError> {
    let design = ExperimentDesign::new(cfg.l)?;
    let grid = build_grid(k)?;
    let a = likelihood_matrix(&grid, &design)?;
    let data = load_input(cfg, &design)?;
    let fbar = empirical_pmf(&data);
    let n = fbar.n();
    let w = default_weighting(&fbar, n);
    let fit = project(&fbar, &a, &w, n)?;
    Ok(Fitted {
        design,
        grid,
        a,
        data,
        fbar,
        w,
        fit,
    })
}

/// Resolves κ̂ per the configured source. Returns the bootstrap result too
/// when one was run, so callers can persist the replicates.
fn localize(
    cfg: &RunConfig,
    fitted: &Fitted,
) -> Result<(FLocalization, Option<BootstrapResult>), CliError> {
    match cfg.kappa_source {
        KappaSource::Bootstrap => {
            let boot = bootstrap_jopt(
                &fitted.fit,
                &fitted.a,
                fitted.n(),
                cfg.bootstrap_b,
                cfg.seed,
            )?;
            let floc = calibrate(&boot, cfg.alpha)?;
            Ok((floc, Some(boot)))
        }
        KappaSource::Chi2 => Ok((chi2_localization(&fitted.design, cfg.alpha)?, None)),
        KappaSource::Fixed(v) => Ok((fixed_localization(v, cfg.alpha)?, None)),
    }
}

/// Creates the output directory and records the resolved configuration.
fn prepare_output(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.output_dir.display())))?;
    write_text(&cfg.output_dir.join("config.txt"), &cfg.to_config_string())
}

/// Estimand labels as filename stems: lowercase alphanumerics with single
/// underscores, so `odds(1,0),Lprime=64` becomes `odds_1_0_lprime_64`.
fn file_stem(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for ch in label.chars() {
        if ch.is_ascii_alphanumeric() {
            out.extend(ch.to_lowercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_owned()
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<(), CliError> {
    let fitted = fit_at(cfg, cfg.k)?;
    prepare_output(cfg)?;

    let weighting_diag: Vec<f64> = (0..fitted.w.dim()).map(|i| fitted.w.entry(i, i)).collect();
    let artifact = FitArtifact {
        l: cfg.l,
        k: cfg.k,
        n: fitted.n(),
        j_opt: fitted.fit.j_opt(),
        solver_status: fitted.fit.solver_status().to_string(),
        f_proj: fitted.fit.f_proj().values().to_vec(),
        weighting_diag,
    };
    write_json(&cfg.output_dir.join("fit.json"), &artifact)?;

    let mut csv = String::from("c_a,c_b,count,frequency\n");
    for (i, z) in fitted.design.patterns().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            z.c_a,
            z.c_b,
            fitted.data.count(z),
            fmt_f64(fitted.fbar.values()[i])
        );
    }
    write_text(&cfg.output_dir.join("fbar.csv"), &csv)?;

    println!(
        "fit: n={} patterns={} j_opt={} status={} -> {}",
        fitted.n(),
        fitted.design.pattern_count(),
        fmt_f64(fitted.fit.j_opt()),
        fitted.fit.solver_status(),
        cfg.output_dir.join("fit.json").display()
    );
    Ok(())
}

pub fn cmd_bootstrap(cfg: &RunConfig) -> Result<(), CliError> {
    let fitted = fit_at(cfg, cfg.k)?;
    let boot = bootstrap_jopt(
        &fitted.fit,
        &fitted.a,
        fitted.n(),
        cfg.bootstrap_b,
        cfg.seed,
    )?;
    let floc = calibrate(&boot, cfg.alpha)?;
    prepare_output(cfg)?;

    let artifact = BootstrapArtifact {
        b: boot.b(),
        seed: boot.seed(),
        failures: boot.failures(),
        alpha: floc.alpha(),
        kappa_hat: floc.kappa_hat(),
        replicates: boot.replicates().to_vec(),
    };
    write_json(&cfg.output_dir.join("bootstrap.json"), &artifact)?;

    println!(
        "bootstrap: b={} failures={} kappa_hat={} -> {}",
        boot.b(),
        boot.failures(),
        fmt_f64(floc.kappa_hat()),
        cfg.output_dir.join("bootstrap.json").display()
    );
    Ok(())
}

/// Constraint families `bound` can solve against.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Empirical,
    Projected,
    Slack,
}

pub fn cmd_bound(
    cfg: &RunConfig,
    direction: Direction,
    kind: ConstraintKind,
    kappa_flag: Option<f64>,
) -> Result<(), CliError> {
    let [spec] = cfg.estimands[..] else {
        return Err(CliError::validation(format!(
            "`bound` needs exactly one estimand clause, got {}",
            cfg.estimands.len()
        )));
    };
    if kappa_flag.is_some() && kind != ConstraintKind::Slack {
        return Err(CliError::validation(
            "--kappa only applies to the slack constraint",
        ));
    }

    let fitted = fit_at(cfg, cfg.k)?;
    let estimand = spec.build(&fitted.grid, &fitted.design)?;
    let label = estimand.label().to_owned();

    let (constraint_name, kappa, result) = match kind {
        ConstraintKind::Empirical => {
            let query = BoundQuery::new(
                estimand,
                direction,
                BoundConstraint::Empirical(fitted.fbar.clone()),
            )?;
            (
                "empirical",
                None,
                solve_linear_constraint(&query, &fitted.a)?,
            )
        }
        ConstraintKind::Projected => {
            let query = BoundQuery::new(
                estimand,
                direction,
                BoundConstraint::Projected(fitted.fit.f_proj().clone()),
            )?;
            (
                "projected",
                None,
                solve_linear_constraint(&query, &fitted.a)?,
            )
        }
        ConstraintKind::Slack => {
            let floc = match kappa_flag {
                Some(v) => fixed_localization(v, cfg.alpha)?,
                None => localize(cfg, &fitted)?.0,
            };
            let query = BoundQuery::new(
                estimand,
                direction,
                BoundConstraint::Slack {
                    kappa: floc.kappa_hat(),
                    fbar: fitted.fbar.clone(),
                    w: fitted.w.clone(),
                    n: fitted.n(),
                },
            )?;
            (
                "slack",
                Some(floc.kappa_hat()),
                solve_slack(&query, &fitted.a)?,
            )
        }
    };

    prepare_output(cfg)?;
    let artifact = BoundArtifact {
        estimand: label.clone(),
        direction: direction_name(direction),
        constraint: constraint_name,
        kappa,
        value: result.value(),
        solver_status: result.solver_status().to_string(),
        active_kappa: result.active_kappa(),
    };
    write_json(&cfg.output_dir.join("bound.json"), &artifact)?;

    println!(
        "bound: {label} {} over {constraint_name} = {} ({})",
        direction_name(direction),
        fmt_bound(&result.value()),
        result.solver_status()
    );
    Ok(())
}

fn direction_name(direction: Direction) -> &'static str {
    match direction {
        Direction::Lower => "lower",
        Direction::Upper => "upper",
    }
}

pub fn cmd_curve(
    cfg: &RunConfig,
    direction: Direction,
    kappa_flag: Option<f64>,
) -> Result<(), CliError> {
    if cfg.estimands.is_empty() {
        return Err(CliError::validation(
            "`bound-curve` needs at least one estimand clause",
        ));
    }
    let ks: Vec<usize> = if cfg.k_sweep.is_empty() {
        vec![cfg.k]
    } else {
        cfg.k_sweep.clone()
    };
    prepare_output(cfg)?;

    for &k in &ks {
        let fitted = fit_at(cfg, k)?;
        let kappas = match kappa_flag {
            Some(v) => vec![v],
            None => {
                // The curve spans the projected criterion value up to well
                // past the calibrated region, so it needs the bootstrap's
                // upper tail even when κ̂ itself comes from elsewhere.
                let boot = bootstrap_jopt(
                    &fitted.fit,
                    &fitted.a,
                    fitted.n(),
                    cfg.bootstrap_b,
                    cfg.seed,
                )?;
                let q99 = callbound::kappa_quantile(&boot, 0.01)?;
                default_kappa_grid(fitted.fit.j_opt(), q99)
            }
        };

        for spec in &cfg.estimands {
            let estimand = spec.build(&fitted.grid, &fitted.design)?;
            let label = estimand.label().to_owned();
            let query = BoundQuery::new(
                estimand,
                direction,
                BoundConstraint::Slack {
                    kappa: kappas[0],
                    fbar: fitted.fbar.clone(),
                    w: fitted.w.clone(),
                    n: fitted.n(),
                },
            )?;
            let curve = bound_curve(&query, &fitted.a, &kappas)?;

            let mut rows: Vec<(f64, String, String)> = curve
                .kappas()
                .iter()
                .zip(curve.values())
                .zip(curve.statuses())
                .map(|((&kappa, value), status)| {
                    // An empty constraint set is a verdict about the row,
                    // not a solver defect, so it shows in the status cell.
                    let status = if matches!(value, BoundValue::Infeasible) {
                        "infeasible".to_owned()
                    } else {
                        status.to_string()
                    };
                    (kappa, fmt_bound(value), status)
                })
                .collect();
            rows.extend(
                curve
                    .failed_kappas()
                    .iter()
                    .map(|&kappa| (kappa, String::new(), "failed".to_owned())),
            );
            rows.sort_by(|x, y| x.0.total_cmp(&y.0));

            let mut csv = String::from("kappa,value,status\n");
            for (kappa, value, status) in &rows {
                let _ = writeln!(csv, "{},{value},{status}", fmt_f64(*kappa));
            }
            let path = cfg
                .output_dir
                .join(format!("curve_{}_k{k}.csv", file_stem(&label)));
            write_text(&path, &csv)?;

            println!(
                "curve: {label} K={k} points={} failed={} max_monotonicity_violation={} -> {}",
                curve.kappas().len(),
                curve.failed_kappas().len(),
                fmt_f64(curve.max_monotonicity_violation()),
                path.display()
            );
        }
    }
    Ok(())
}

pub fn cmd_ci(cfg: &RunConfig, sides: IntervalSides) -> Result<(), CliError> {
    if cfg.estimands.is_empty() {
        return Err(CliError::validation(
            "`ci` needs at least one estimand clause",
        ));
    }
    let fitted = fit_at(cfg, cfg.k)?;
    let (floc, _) = localize(cfg, &fitted)?;
    let family: Vec<CiRequest> = cfg
        .estimands
        .iter()
        .map(|spec| {
            Ok(CiRequest::new(
                spec.build(&fitted.grid, &fitted.design)?,
                sides,
            ))
        })
        .collect::<Result<_, CliError>>()?;
    prepare_output(cfg)?;
    let ci_path = cfg.output_dir.join("ci.json");

    let outcomes = match confidence_interval(
        &floc,
        &family,
        &fitted.a,
        &fitted.fbar,
        &fitted.w,
        fitted.n(),
    ) {
        Ok(outcomes) => outcomes,
        Err(Error::SpecificationTest(msg)) => {
            // The rejection is a statement about the whole model, so every
            // estimand gets the same verdict in the artifact.
            let records: Vec<CiRecord> = family
                .iter()
                .map(|req| CiRecord::Rejected {
                    estimand: req.estimand().label().to_owned(),
                    alpha: floc.alpha(),
                    kappa_hat: floc.kappa_hat(),
                    kappa_provenance: floc.provenance(),
                    specification_test: "rejected",
                })
                .collect();
            write_json(&ci_path, &records)?;
            return Err(CliError::Rejection(format!(
                "specification test rejected: {msg}"
            )));
        }
        Err(other) => return Err(other.into()),
    };

    let mut records = Vec::with_capacity(outcomes.len());
    let mut worst: Option<CliError> = None;
    for (req, outcome) in family.iter().zip(outcomes) {
        match outcome {
            Ok(interval) => {
                println!(
                    "ci: {} [{}, {}]",
                    interval.estimand(),
                    fmt_extended(interval.lower()),
                    fmt_extended(interval.upper())
                );
                records.push(CiRecord::Interval {
                    interval,
                    kappa_hat: floc.kappa_hat(),
                    kappa_provenance: floc.provenance(),
                    specification_test: "passed",
                });
            }
            Err(e) => {
                let cli = CliError::from(e);
                println!("ci: {} failed: {cli}", req.estimand().label());
                if worst
                    .as_ref()
                    .is_none_or(|w| cli.exit_code() > w.exit_code())
                {
                    worst = Some(CliError::from_class(&cli, req.estimand().label()));
                }
                records.push(CiRecord::Failed {
                    estimand: req.estimand().label().to_owned(),
                    error: cli.to_string(),
                });
            }
        }
    }
    write_json(&ci_path, &records)?;
    println!(
        "ci: alpha={} kappa_hat={} -> {}",
        fmt_f64(floc.alpha()),
        fmt_f64(floc.kappa_hat()),
        ci_path.display()
    );
    match worst {
        None => Ok(()),
        Some(e) => Err(e),
    }
}

impl CliError {
    /// Re-labels an entry-level failure with the estimand it belongs to,
    /// keeping the class (and so the exit code).
    fn from_class(err: &CliError, estimand: &str) -> CliError {
        let msg = format!("estimand {estimand}: {err}");
        match err {
            CliError::Validation(_) => CliError::Validation(msg),
            CliError::Solver(_) => CliError::Solver(msg),
            CliError::Rejection(_) => CliError::Rejection(msg),
            CliError::Io(_) => CliError::Io(msg),
        }
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.sim_atoms.is_empty() {
        return Err(CliError::validation(
            "`simulate` needs sim_atoms; each atom is `p_a,p_b:weight`",
        ));
    }
    let design = ExperimentDesign::new(cfg.l)?;
    let grid = build_grid(cfg.k)?;

    let mut weights = vec![0.0; grid.len()];
    for atom in &cfg.sim_atoms {
        let index = grid
            .points()
            .iter()
            .position(|&(p_a, p_b)| {
                (p_a - atom.p_a).abs() <= 1e-9 && (p_b - atom.p_b).abs() <= 1e-9
            })
            .ok_or_else(|| {
                CliError::validation(format!(
                    "sim atom ({}, {}) is not a point of the K={} grid; axis values are i/(K-1)",
                    atom.p_a, atom.p_b, cfg.k
                ))
            })?;
        weights[index] += atom.weight;
    }
    let pi = MixtureWeights::new(weights)?;

    let data = simulate(&pi, &grid, &design, cfg.sim_n, cfg.seed)?;
    prepare_output(cfg)?;
    let path = cfg.output_dir.join("simulated.csv");
    write_csv(&data, &path).map_err(|e| CliError::from(e).prefixed(&path.display().to_string()))?;

    println!(
        "simulate: n={} seed={} -> {}",
        cfg.sim_n,
        cfg.seed,
        path.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_become_safe_file_stems() {
        assert_eq!(file_stem("discr(4,0)"), "discr_4_0");
        assert_eq!(file_stem("odds(1,0),Lprime=64"), "odds_1_0_lprime_64");
        assert_eq!(file_stem("discr_share"), "discr_share");
    }
}
