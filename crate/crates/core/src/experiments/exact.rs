//! Deterministic experiments: every value comes from the pgf engine.

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::pgf::{self, Partition, Transforms};

use super::report::{max_increment, ExperimentReport, Relation, Row};
use super::{build_env, require_critical};

/// Points of the y-grid used for the grid supremum of the MRCA-time CDF.
pub const Y_GRID_POINTS: usize = 10_001;

pub fn run_decomposition_check(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let env = build_env(cfg)?;
    let mut report = ExperimentReport::new("decomposition", env.label(), cfg.seed);
    let tol = cfg.tolerances.decomposition;
    for n in cfg.horizons_or(&[1, 10, 100, 200]) {
        for &lambda in &cfg.lambda_grid {
            let t = Transforms::new(&env, n, lambda)?;
            let lhs = t.zddot()?;
            let rhs = t.two_spine_rhs()?;
            let rel = (lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE);
            report.push(Row::check(Some(n), format!("relative_gap@lambda={lambda}"), rel, Relation::AtMost, tol));
        }
    }
    Ok(report)
}

pub fn run_kolmogorov(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let env = build_env(cfg)?;
    let horizons = cfg.horizons_or(&[100, 500, 2000]);
    require_critical(&env, cfg, *horizons.last().expect("validated"))?;
    let mut report = ExperimentReport::new("kolmogorov", env.label(), cfg.seed);
    let mut gaps = Vec::new();
    for (i, &n) in horizons.iter().enumerate() {
        let ratio = pgf::kolmogorov_ratio(&env, n)?;
        let gap = (ratio - 1.0).abs();
        report.push(Row::info(Some(n), "ratio", ratio));
        report.push(if i + 1 == horizons.len() {
            Row::check(Some(n), "gap", gap, Relation::Below, cfg.tolerances.kolmogorov)
        } else {
            Row::info(Some(n), "gap", gap)
        });
        gaps.push(gap);
    }
    if gaps.len() > 1 {
        report.push(Row::check(None, "gap_increment_max", max_increment(&gaps), Relation::Below, 0.0));
    }
    Ok(report)
}

pub fn run_uniform_limit(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let env = build_env(cfg)?;
    let horizons = cfg.horizons_or(&[10, 100, 1000]);
    require_critical(&env, cfg, *horizons.last().expect("validated"))?;
    let mut report = ExperimentReport::new("uniform-limit", env.label(), cfg.seed);
    let (mut sups, mut norms) = (Vec::new(), Vec::new());
    for (i, &n) in horizons.iter().enumerate() {
        let part = Partition::new(&env, n)?;
        let (sup, norm) = (part.sup_gap(), part.norm());
        let grid_sup = (0..Y_GRID_POINTS)
            .map(|j| {
                let y = j as f64 / (Y_GRID_POINTS - 1) as f64;
                (part.cdf(y) - y).abs()
            })
            .fold(0.0, f64::max);
        report.push(Row::info(Some(n), "partition_norm", norm));
        report.push(Row::check(Some(n), "sup_gap", sup, Relation::AtMost, norm));
        report.push(if i + 1 == horizons.len() {
            Row::check(Some(n), "grid_sup_gap", grid_sup, Relation::Below, cfg.tolerances.uniform)
        } else {
            Row::info(Some(n), "grid_sup_gap", grid_sup)
        });
        sups.push(sup);
        norms.push(norm);
    }
    if horizons.len() > 1 {
        report.push(Row::check(None, "sup_gap_increment_max", max_increment(&sups), Relation::Below, 0.0));
        report.push(Row::check(None, "partition_norm_increment_max", max_increment(&norms), Relation::Below, 0.0));
    }
    Ok(report)
}

/// `sup_{m < n} sup_s (1 - g(n, m, s / a_n))` with the count of generations skipped
/// for lack of a pair-biased law, and the largest `|1 - g|` seen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GSup {
    pub d: f64,
    pub max_abs: f64,
    pub min: f64,
    pub skipped: usize,
}

pub fn g_sup(env: &crate::Environment, n: usize, s_grid: &[f64]) -> Result<GSup> {
    let a_n = env.a_n(n);
    let mut out = GSup { d: 0.0, max_abs: 0.0, min: f64::INFINITY, skipped: 0 };
    for (j, &s) in s_grid.iter().enumerate() {
        let t = Transforms::new(env, n, s / a_n)?;
        for m in 0..n {
            match t.g_ratio(m) {
                Ok(g) => {
                    let gap = 1.0 - g;
                    out.d = out.d.max(gap);
                    out.min = out.min.min(gap);
                    out.max_abs = out.max_abs.max(gap.abs());
                }
                Err(Error::NoPairBiasedLaw) => {
                    if j == 0 {
                        out.skipped += 1;
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

pub fn run_g_convergence(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let env = build_env(cfg)?;
    let horizons = cfg.horizons_or(&[10, 100, 1000]);
    if horizons.len() < 2 {
        return Err(Error::Config("horizons: the g-convergence trend needs at least two horizons".into()));
    }
    require_critical(&env, cfg, *horizons.last().expect("validated"))?;
    let mut report = ExperimentReport::new("g-convergence", env.label(), cfg.seed);
    let diag = env.classify(*horizons.last().expect("validated"), 1e-6);
    match diag.sup_condition_a_ratio {
        Some(r) => report.push(Row::info(None, "sup_condition_a_ratio", r)),
        None if cfg.allow_noncritical => {}
        None => return Err(Error::Config("condition (A) ratio undefined over the horizon".into())),
    }
    let mut ds = Vec::new();
    for (i, &n) in horizons.iter().enumerate() {
        let g = g_sup(&env, n, &cfg.s_grid)?;
        report.push(if i + 1 == horizons.len() {
            Row::check(Some(n), "d", g.d, Relation::Below, cfg.tolerances.g_sup)
        } else {
            Row::info(Some(n), "d", g.d)
        });
        report.push(Row::info(Some(n), "max_abs_one_minus_g", g.max_abs));
        report.push(Row::info(Some(n), "min_one_minus_g", g.min));
        report.push(Row::info(Some(n), "skipped_generations", g.skipped as f64));
        ds.push(g.d);
    }
    report.push(Row::check(None, "d_increment_max", max_increment(&ds), Relation::Below, 0.0));
    Ok(report)
}

/// `1/(1+lambda)^3` against `(1+lambda)^{-2} * int_0^1 (1+u lambda)^{-2} du`, the
/// Laplace-side form of "pair-biased exponential = size-biased + uniform fraction
/// of an independent size-biased copy".
pub fn exponential_closed_form_rows(cfg: &ExperimentConfig, report: &mut ExperimentReport) {
    for &lambda in &cfg.lambda_grid {
        let lhs = (1.0 + lambda).powi(-3);
        let integral = crate::stats::simpson(|u| (1.0 + u * lambda).powi(-2), 0.0, 1.0, 10_000);
        let rhs = (1.0 + lambda).powi(-2) * integral;
        report.push(Row::check(
            None,
            format!("closed_form_gap@lambda={lambda}"),
            (lhs - rhs).abs(),
            Relation::AtMost,
            cfg.tolerances.closed_form,
        ));
    }
}
