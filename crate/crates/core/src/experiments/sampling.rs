//! Monte Carlo experiments and the raw simulation runs behind `simulate`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::config::ExperimentConfig;
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::montecarlo::Driver;
use crate::oracle::{self, ExactPmf, Weighting, DEFAULT_TAIL_BUDGET};
use crate::pgf::{self, Transforms};
use crate::spines::{self, LabeledTree, SpineMark, SpinePlan};
use crate::stats;
use crate::streams::ReplicateStreams;

use super::exact::exponential_closed_form_rows;
use super::report::{max_increment, ExperimentReport, Relation, Row};
use super::{build_env, driver, require_critical, streams};

/// Cap on plain replicates spent chasing `min_survivors` in the Yaglom experiment.
pub const YAGLOM_MAX_REPLICATES: u64 = 1_000_000_000;
/// Above this horizon the spine samplers track populations instead of full trees.
pub const FULL_TREE_MAX_N: usize = 50;
/// Largest horizon at which `simulate` compares against the exact law.
pub const SIMULATE_ORACLE_MAX_N: usize = 12;
/// Panels of the Simpson rule in the size-biased quadrature check.
pub const QUADRATURE_PANELS: usize = 10_000;

const TAG_ONE_SPINE: u64 = 1;
const TAG_TWO_SPINE: u64 = 2;
const TAG_YAGLOM: u64 = 3;
const TAG_EXPONENTIAL: u64 = 4;
const TAG_GW: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationKind {
    Gw,
    OneSpine,
    TwoSpine,
    Yaglom,
}

impl SimulationKind {
    pub fn name(self) -> &'static str {
        match self {
            SimulationKind::Gw => "gw",
            SimulationKind::OneSpine => "one-spine",
            SimulationKind::TwoSpine => "two-spine",
            SimulationKind::Yaglom => "yaglom",
        }
    }

    fn tag(self) -> u64 {
        match self {
            SimulationKind::Gw => TAG_GW,
            SimulationKind::OneSpine => TAG_ONE_SPINE,
            SimulationKind::TwoSpine => TAG_TWO_SPINE,
            SimulationKind::Yaglom => TAG_YAGLOM,
        }
    }
}

impl fmt::Display for SimulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimulationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SimulationKind::Gw, SimulationKind::OneSpine, SimulationKind::TwoSpine, SimulationKind::Yaglom]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown simulation kind `{s}`")))
    }
}

fn bump(v: &mut Vec<u64>, k: usize) {
    if k >= v.len() {
        v.resize(k + 1, 0);
    }
    v[k] += 1;
}

fn add_counts(a: &mut Vec<u64>, b: &[u64]) {
    if b.len() > a.len() {
        a.resize(b.len(), 0);
    }
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

/// Per-block state of a histogram run. The tree is scratch space reused across
/// replicates of a block.
#[derive(Default)]
struct Tally {
    counts: Vec<u64>,
    branch: Vec<u64>,
    mismatches: u64,
    aborted: u64,
    error: Option<Error>,
    tree: LabeledTree,
}

impl Tally {
    fn accept<T>(&mut self, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(Error::NodeBudget { .. }) => {
                self.aborted += 1;
                None
            }
            Err(e) => {
                self.error.get_or_insert(e);
                None
            }
        }
    }

    fn merge(&mut self, other: Tally) {
        add_counts(&mut self.counts, &other.counts);
        add_counts(&mut self.branch, &other.branch);
        self.mismatches += other.mismatches;
        self.aborted += other.aborted;
        if self.error.is_none() {
            self.error = other.error;
        }
    }

    fn into_result(mut self) -> Result<Tally> {
        match self.error.take() {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }

    fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Histogram of `X_n` under the chosen sampler. For the two-spine sampler `branch`
/// counts the generation of the most recent common ancestor of the two spine
/// vertices at generation `n` (full trees) or the sampled branching time
/// (population mode); `mismatches` counts trees whose MRCA disagrees with the
/// sampled branching time.
fn histogram(
    kind: SimulationKind,
    plan: &SpinePlan,
    full_trees: bool,
    driver: &Driver,
    streams: &ReplicateStreams,
    replicates: u64,
) -> Result<Tally> {
    let n = plan.horizon();
    let step = |t: &mut Tally, i: u64| {
        let mut rng = streams.stream(i);
        let mut tree = std::mem::take(&mut t.tree);
        let drawn: Option<(u64, Option<usize>)> = match (kind, full_trees) {
            (SimulationKind::OneSpine, true) => t
                .accept(spines::sample_one_spine(plan, &mut tree, &mut rng))
                .map(|_| (tree.population(n) as u64, None)),
            (SimulationKind::OneSpine, false) => {
                t.accept(spines::sample_one_spine_population(plan, &mut rng)).map(|z| (z, None))
            }
            (SimulationKind::TwoSpine, true) => t.accept(spines::sample_two_spine(plan, &mut tree, &mut rng)).map(|k| {
                let u = tree.spine_node(n, SpineMark::Spine1).expect("spine reaches generation n");
                let v = tree.spine_node(n, SpineMark::Spine2).expect("spine reaches generation n");
                let mrca = tree.mrca_generation(u, v);
                if mrca != k {
                    t.mismatches += 1;
                }
                (tree.population(n) as u64, Some(mrca))
            }),
            (SimulationKind::TwoSpine, false) => {
                t.accept(spines::sample_two_spine_population(plan, &mut rng)).map(|(z, k)| (z, Some(k)))
            }
            (_, true) => t.accept(spines::sample_gw_tree(plan, &mut tree, &mut rng)).map(|_| (tree.population(n) as u64, None)),
            (_, false) => t.accept(spines::sample_gw_population(plan, &mut rng)).map(|z| (z, None)),
        };
        t.tree = tree;
        if let Some((z, k)) = drawn {
            bump(&mut t.counts, z as usize);
            if let Some(k) = k {
                bump(&mut t.branch, k);
            }
        }
    };
    driver.fold(0..replicates, Tally::default, step, Tally::merge).into_result()
}

fn oracle_law(env: &Environment, n: usize, kind: SimulationKind) -> Result<ExactPmf> {
    let p = oracle::exact_pmf_auto(env, n, DEFAULT_TAIL_BUDGET);
    match kind {
        SimulationKind::OneSpine => p.transform(Weighting::SizeBiased),
        SimulationKind::TwoSpine => p.transform(Weighting::PairBiased),
        _ => Ok(p),
    }
}

fn tv_row(n: usize, statistic: &str, counts: &[u64], law: &ExactPmf, tol: f64) -> Row {
    let tv = ExactPmf::from_counts(counts, 0).tv_distance(law);
    if law.within_budget(DEFAULT_TAIL_BUDGET) {
        Row::check(Some(n), statistic, tv, Relation::Below, tol)
    } else {
        Row::insufficient(Some(n), statistic, tv, Relation::Below, tol)
    }
}

fn branch_test(env: &Environment, n: usize, branch: &[u64]) -> Result<stats::ChiSquareTest> {
    let probs = pgf::kn_pmf_all(env, n)?;
    let mut counts = branch.to_vec();
    counts.resize(probs.len().max(counts.len()), 0);
    let mut probs = probs;
    probs.resize(counts.len(), 0.0);
    stats::chi_square_gof(&counts, &probs)
}

/// Largest `|closed form - oracle|` over the grid; `valid` drops when some oracle
/// law exceeded its tail budget.
struct GapTracker {
    max: f64,
    valid: bool,
}

impl GapTracker {
    fn new() -> Self {
        Self { max: 0.0, valid: true }
    }

    fn add(&mut self, formula: f64, law: &ExactPmf, lambda: f64) {
        let est = law.laplace(lambda, DEFAULT_TAIL_BUDGET);
        self.valid &= est.within_budget;
        self.max = self.max.max((formula - est.value).abs());
    }

    fn row(&self, n: usize, statistic: &str, tol: f64) -> Row {
        if self.valid {
            Row::check(Some(n), statistic, self.max, Relation::Below, tol)
        } else {
            Row::insufficient(Some(n), statistic, self.max, Relation::Below, tol)
        }
    }
}

/// Closed-form transforms against oracle Laplace transforms at horizon `n`, then the
/// size-biased quadrature identity.
pub fn transform_rows(env: &Environment, n: usize, cfg: &ExperimentConfig, report: &mut ExperimentReport) -> Result<()> {
    let tol = cfg.tolerances.transforms;
    let p = oracle::exact_pmf_auto(env, n, DEFAULT_TAIL_BUDGET);
    let dot = p.transform(Weighting::SizeBiased)?;
    let ddot = p.transform(Weighting::PairBiased)?;
    let shifted: Vec<ExactPmf> = (0..n)
        .map(|m| oracle::exact_pmf_auto(&env.shift(m + 1), n - m - 1, DEFAULT_TAIL_BUDGET).transform(Weighting::SizeBiased))
        .collect::<Result<_>>()?;
    let hanging = |kind| (0..n).map(|m| oracle::hanging_pmf(env, n, m, kind, DEFAULT_TAIL_BUDGET)).collect::<Result<Vec<_>>>();
    let (hang_dot, hang_ddot) = (hanging(Weighting::SizeBiased)?, hanging(Weighting::PairBiased)?);

    let mut gaps: [GapTracker; 6] = std::array::from_fn(|_| GapTracker::new());
    for &lambda in &cfg.lambda_grid {
        let t = Transforms::new(env, n, lambda)?;
        gaps[0].add(t.z(), &p, lambda);
        gaps[1].add(t.zdot(), &dot, lambda);
        gaps[2].add(t.zddot()?, &ddot, lambda);
        for m in 0..n {
            gaps[3].add(t.zdot_shifted(m)?, &shifted[m], lambda);
            gaps[4].add(t.hanging_qdot(m)?, &hang_dot[m], lambda);
            gaps[5].add(t.hanging_qddot(m)?, &hang_ddot[m], lambda);
        }
    }
    let names = ["lt_gap_z", "lt_gap_zdot", "lt_gap_zddot", "lt_gap_zdot_shifted", "lt_gap_hanging_qdot", "lt_gap_hanging_qddot"];
    for (g, name) in gaps.iter().zip(names) {
        report.push(g.row(n, name, tol));
    }

    // E[1 - e^{-lambda Z} | Z > 0] = (mu_n / P(Z > 0)) int_0^lambda E[e^{-u Zdot}] du
    let survival = pgf::survival_prob(env, n);
    let mu = env.mu(n);
    let mut worst = 0.0_f64;
    for &lambda in &cfg.lambda_grid {
        let lhs = Transforms::new(env, n, lambda)?.z_complement() / survival;
        let integral = stats::simpson(
            |u| Transforms::new(env, n, u).map(|t| t.zdot()).unwrap_or(f64::NAN),
            0.0,
            lambda,
            QUADRATURE_PANELS,
        );
        let gap = (lhs - mu * integral / survival).abs();
        worst = if gap.is_nan() { f64::NAN } else { worst.max(gap) };
    }
    report.push(Row::check(Some(n), "quadrature_gap", worst, Relation::Below, cfg.tolerances.quadrature));
    Ok(())
}

/// Spine samplers against exact transformed laws, closed-form transforms against
/// oracle Laplace transforms, and the size-biased quadrature identity.
pub fn run_transform_identities(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let env = build_env(cfg)?;
    let horizons = cfg.horizons_or(&[1, 2, 3, 4, 5, 6]);
    let replicates = cfg.replicates_or(1_000_000);
    let driver = driver(cfg)?;
    let mut report = ExperimentReport::new("identities", env.label(), cfg.seed);
    let tol = cfg.tolerances;
    for &n in &horizons {
        transform_rows(&env, n, cfg, &mut report)?;

        let plan = SpinePlan::new(&env, n)?.with_node_budget(cfg.node_budget);
        let full = n <= FULL_TREE_MAX_N;
        let one = histogram(SimulationKind::OneSpine, &plan, full, &driver, &streams(cfg, TAG_ONE_SPINE, n), replicates)?;
        let two = histogram(SimulationKind::TwoSpine, &plan, full, &driver, &streams(cfg, TAG_TWO_SPINE, n), replicates)?;
        report.replicates += 2 * replicates;
        report.aborted += one.aborted + two.aborted;

        report.push(tv_row(n, "tv_one_spine", &one.counts, &oracle_law(&env, n, SimulationKind::OneSpine)?, tol.tv));
        report.push(tv_row(n, "tv_two_spine", &two.counts, &oracle_law(&env, n, SimulationKind::TwoSpine)?, tol.tv));
        let chi = branch_test(&env, n, &two.branch)?;
        report.push(Row::info(Some(n), "branch_chi_square", chi.statistic));
        report.push(Row::check(Some(n), "branch_chi_square_p", chi.p_value, Relation::Above, tol.chi_square_p));
        if full {
            report.push(Row::check(Some(n), "branch_mrca_mismatches", two.mismatches as f64, Relation::AtMost, 0.0));
        }
    }
    push_abort_row(&mut report, tol.abort_fraction);
    Ok(report)
}

fn push_abort_row(report: &mut ExperimentReport, tol: f64) {
    report.push(Row::info(None, "replicates", report.replicates as f64));
    report.push(Row::info(None, "aborted", report.aborted as f64));
    report.push(Row::check(None, "abort_fraction", report.abort_fraction(), Relation::AtMost, tol));
}

#[derive(Default)]
struct Survivors {
    samples: Vec<f64>,
    aborted: u64,
    error: Option<Error>,
}

impl Survivors {
    fn merge(&mut self, other: Survivors) {
        self.samples.extend(other.samples);
        self.aborted += other.aborted;
        if self.error.is_none() {
            self.error = other.error;
        }
    }
}

/// Plain replicates until `min_survivors` are alive at generation `n` (or the cap is
/// hit); returns `Z_n / a_n` of the survivors, the replicates used and aborts.
fn yaglom_samples(
    plan: &SpinePlan,
    scale: f64,
    driver: &Driver,
    streams: &ReplicateStreams,
    min_survivors: u64,
    max_replicates: u64,
) -> Result<(Vec<f64>, u64, u64)> {
    let step = |acc: &mut Survivors, i: u64| {
        let mut rng = streams.stream(i);
        match spines::sample_gw_population(plan, &mut rng) {
            Ok(0) => {}
            Ok(z) => acc.samples.push(z as f64 / scale),
            Err(Error::NodeBudget { .. }) => acc.aborted += 1,
            Err(e) => {
                acc.error.get_or_insert(e);
            }
        }
    };
    let (acc, used) = driver.fold_until(max_replicates, Survivors::default, step, Survivors::merge, |acc| {
        acc.samples.len() as u64 >= min_survivors || acc.error.is_some()
    });
    if let Some(e) = acc.error {
        return Err(e);
    }
    Ok((acc.samples, used, acc.aborted))
}

/// Largest `|E[e^{-s Z_n / a_n} | Z_n > 0] - 1/(1+s)|` over `s_grid`.
pub fn laplace_curve_gap(env: &Environment, n: usize, s_grid: &[f64]) -> Result<f64> {
    let a_n = env.a_n(n);
    let mut worst = 0.0_f64;
    for &s in s_grid {
        let v = pgf::conditional_laplace_z(env, n, s / a_n)?;
        worst = worst.max((v - 1.0 / (1.0 + s)).abs());
    }
    Ok(worst)
}

pub fn run_yaglom(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let env = build_env(cfg)?;
    let horizons = cfg.horizons_or(&[50, 200, 500]);
    let last = *horizons.last().expect("validated");
    require_critical(&env, cfg, last.max(cfg.curve_horizon))?;
    let driver = driver(cfg)?;
    let max_replicates = cfg.replicates_or(YAGLOM_MAX_REPLICATES);
    let tol = cfg.tolerances;
    let mut report = ExperimentReport::new("yaglom", env.label(), cfg.seed);
    let mut ks_values = Vec::new();
    for &n in &horizons {
        let plan = SpinePlan::new(&env, n)?.with_node_budget(cfg.node_budget);
        let (samples, used, aborted) =
            yaglom_samples(&plan, env.a_n(n), &driver, &streams(cfg, TAG_YAGLOM, n), cfg.min_survivors, max_replicates)?;
        report.replicates += used;
        report.aborted += aborted;
        let survivors = samples.len() as u64;
        report.push(Row::info(Some(n), "survivors", survivors as f64));
        report.push(Row::info(Some(n), "survival_empirical", survivors as f64 / used.max(1) as f64));
        report.push(Row::info(Some(n), "survival_exact", pgf::survival_prob(&env, n)));
        report.push(Row::info(Some(n), "laplace_curve_gap", laplace_curve_gap(&env, n, &cfg.s_grid)?));
        if survivors == 0 {
            report.push(Row::insufficient(Some(n), "ks_exp1", f64::NAN, Relation::Below, tol.ks));
            ks_values.push(f64::NAN);
            continue;
        }
        let ks = stats::ks_statistic(&samples, stats::exp_cdf)?;
        ks_values.push(ks);
        report.push(match (n == last, survivors >= cfg.min_survivors) {
            (true, true) => Row::check(Some(n), "ks_exp1", ks, Relation::Below, tol.ks),
            (true, false) => Row::insufficient(Some(n), "ks_exp1", ks, Relation::Below, tol.ks),
            (false, _) => Row::info(Some(n), "ks_exp1", ks),
        });
    }
    if ks_values.len() > 1 {
        report.push(Row::check(None, "ks_increment_max", max_increment(&ks_values), Relation::Below, 0.0));
    }
    let curve = laplace_curve_gap(&env, cfg.curve_horizon, &cfg.s_grid)?;
    report.push(Row::check(Some(cfg.curve_horizon), "laplace_curve_gap_limit", curve, Relation::Below, tol.yaglom_curve));
    push_abort_row(&mut report, tol.abort_fraction);
    Ok(report)
}

/// Closed-form check of the pair-biased exponential decomposition, then two-spine
/// populations `Zddot_n / a_n` against the density `x^2 e^{-x} / 2`.
pub fn run_exponential_characterization(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let env = build_env(cfg)?;
    let horizons = cfg.horizons_or(&[500]);
    let last = *horizons.last().expect("validated");
    let replicates = cfg.replicates_or(100_000);
    let driver = driver(cfg)?;
    let mut report = ExperimentReport::new("exponential", env.label(), cfg.seed);
    exponential_closed_form_rows(cfg, &mut report);
    for &n in &horizons {
        let plan = SpinePlan::new(&env, n)?.with_node_budget(cfg.node_budget);
        let scale = env.a_n(n);
        let s = streams(cfg, TAG_EXPONENTIAL, n);
        let step = |acc: &mut Survivors, i: u64| {
            let mut rng = s.stream(i);
            match spines::sample_two_spine_population(&plan, &mut rng) {
                Ok((z, _)) => acc.samples.push(z as f64 / scale),
                Err(Error::NodeBudget { .. }) => acc.aborted += 1,
                Err(e) => {
                    acc.error.get_or_insert(e);
                }
            }
        };
        let acc = driver.fold(0..replicates, Survivors::default, step, Survivors::merge);
        if let Some(e) = acc.error {
            return Err(e);
        }
        report.replicates += replicates;
        report.aborted += acc.aborted;
        let ks = stats::ks_statistic(&acc.samples, stats::gamma3_cdf)?;
        report.push(if n == last {
            Row::check(Some(n), "ks_gamma3", ks, Relation::Below, cfg.tolerances.ks)
        } else {
            Row::info(Some(n), "ks_gamma3", ks)
        });
    }
    push_abort_row(&mut report, cfg.tolerances.abort_fraction);
    Ok(report)
}

/// Output of `simulate`: a histogram of `X_n` (or Yaglom samples) and summary rows.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub kind: SimulationKind,
    pub n: usize,
    pub counts: Vec<u64>,
    pub branch_counts: Vec<u64>,
    pub samples: Vec<f64>,
    pub report: ExperimentReport,
}

impl Simulation {
    pub fn write_histogram_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,count")?;
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(out, "{k},{c}")?;
        }
        Ok(())
    }

    pub fn write_branch_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "generation,count")?;
        for (k, c) in self.branch_counts.iter().enumerate() {
            writeln!(out, "{k},{c}")?;
        }
        Ok(())
    }

    pub fn write_samples_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "scaled_population")?;
        for v in &self.samples {
            writeln!(out, "{v:?}")?;
        }
        Ok(())
    }
}

/// Runs one sampler at the last configured horizon (default 3). Rows are
/// informational; the caller judges only the abort fraction.
pub fn simulate(kind: SimulationKind, cfg: &ExperimentConfig) -> Result<Simulation> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let env = build_env(cfg)?;
    let n = *cfg.horizons_or(&[3]).last().expect("validated");
    let driver = driver(cfg)?;
    let plan = SpinePlan::new(&env, n)?.with_node_budget(cfg.node_budget);
    let s = streams(cfg, kind.tag(), n);
    let mut report = ExperimentReport::new(&format!("simulate-{kind}"), env.label(), cfg.seed);
    let mut sim = Simulation { kind, n, counts: Vec::new(), branch_counts: Vec::new(), samples: Vec::new(), report: report.clone() };

    if kind == SimulationKind::Yaglom {
        let max = cfg.replicates_or(YAGLOM_MAX_REPLICATES);
        let (samples, used, aborted) = yaglom_samples(&plan, env.a_n(n), &driver, &s, cfg.min_survivors, max)?;
        report.replicates = used;
        report.aborted = aborted;
        report.push(Row::info(Some(n), "survivors", samples.len() as f64));
        report.push(Row::info(Some(n), "a_n", env.a_n(n)));
        if !samples.is_empty() {
            report.push(Row::info(Some(n), "ks_exp1", stats::ks_statistic(&samples, stats::exp_cdf)?));
        }
        sim.samples = samples;
    } else {
        let replicates = cfg.replicates_or(100_000);
        let t = histogram(kind, &plan, n <= FULL_TREE_MAX_N, &driver, &s, replicates)?;
        report.replicates = replicates;
        report.aborted = t.aborted;
        let done = t.total().max(1) as f64;
        let mean = t.counts.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum::<f64>() / done;
        report.push(Row::info(Some(n), "mean_empirical", mean));
        if kind == SimulationKind::Gw {
            let alive = 1.0 - t.counts.first().copied().unwrap_or(0) as f64 / done;
            report.push(Row::info(Some(n), "survival_empirical", alive));
            report.push(Row::info(Some(n), "survival_stderr", (alive * (1.0 - alive) / done).sqrt()));
            report.push(Row::info(Some(n), "survival_exact", pgf::survival_prob(&env, n)));
        }
        if n <= SIMULATE_ORACLE_MAX_N {
            let law = oracle_law(&env, n, kind)?;
            report.push(Row::info(Some(n), "tv_oracle", ExactPmf::from_counts(&t.counts, 0).tv_distance(&law)));
        }
        if kind == SimulationKind::TwoSpine {
            report.push(Row::info(Some(n), "branch_chi_square_p", branch_test(&env, n, &t.branch)?.p_value));
        }
        sim.counts = t.counts;
        sim.branch_counts = t.branch;
    }
    report.push(Row::info(None, "aborted", report.aborted as f64));
    report.push(Row::info(None, "abort_fraction", report.abort_fraction()));
    report.wall_time_secs = start.elapsed().as_secs_f64();
    sim.report = report;
    Ok(sim)
}
