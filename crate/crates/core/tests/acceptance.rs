//! Acceptance suite: one pass/fail line per criterion, each at its stated tolerance.
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` still run and still print FAIL when they
//! fail; they only stop short of failing the process, and the reason is printed.

use std::process::ExitCode;
use std::time::Instant;

use gwve::config::{EnvSpec, ExperimentConfig};
use gwve::experiments::{self, Experiment, ExperimentReport, SimulationKind, Status};
use gwve::pgf;
use gwve::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = fn() -> Result<Outcome>;

const KNOWN_UNATTAINABLE: &[(&str, &str)] = &[(
    "AC5",
    "for constant geometric(1/2) the law of A_{n,K_n} is uniform on {1/n, ..., 1}, so \
     sup_y |F(y) - y| = 1/n exactly (approached from the left of each atom); at n = 1000 \
     the strict bound < 1e-3 cannot hold and the computed value is 1e-3 plus rounding",
)];

fn cfg(spec: EnvSpec) -> ExperimentConfig {
    ExperimentConfig::with_environment(spec)
}

fn envs() -> [(&'static str, EnvSpec); 2] {
    [("E1", EnvSpec::e1()), ("E2", EnvSpec::e2())]
}

fn failing(report: &ExperimentReport) -> String {
    let rows: Vec<String> = report
        .failures()
        .map(|r| format!("{}@n={:?}={:?}", r.statistic, r.n, r.value))
        .collect();
    if rows.is_empty() {
        String::new()
    } else {
        format!(" failing rows: {}", rows.join(", "))
    }
}

fn max_value(report: &ExperimentReport, prefix: &str) -> f64 {
    report
        .rows
        .iter()
        .filter(|r| r.statistic.starts_with(prefix))
        .map(|r| r.value)
        .fold(0.0, f64::max)
}

fn value(report: &ExperimentReport, n: Option<usize>, statistic: &str) -> f64 {
    report.find(n, statistic).map(|r| r.value).unwrap_or(f64::NAN)
}

fn status(report: &ExperimentReport, n: Option<usize>, statistic: &str) -> Option<Status> {
    report.find(n, statistic).map(|r| r.status)
}

fn ac1() -> Result<Outcome> {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, spec) in envs() {
        let mut c = cfg(spec);
        c.horizons = Some(vec![1, 10, 100, 200]);
        c.lambda_grid = vec![0.1, 1.0, 5.0];
        let r = experiments::run_decomposition_check(&c)?;
        pass &= r.passed() && r.rows.len() == 12;
        detail.push(format!("{name} max rel gap {:e}{}", max_value(&r, "relative_gap"), failing(&r)));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 1.0;
    Ok(Outcome { pass, detail: format!("{}; runtime {secs:.3}s (< 1s)", detail.join("; ")) })
}

fn ac2() -> Result<Outcome> {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, spec) in envs() {
        let c = cfg(spec);
        let env = c.environment.build()?;
        let mut r = ExperimentReport::new("identities", env.label(), c.seed);
        for n in 1..=6 {
            experiments::transform_rows(&env, n, &c, &mut r)?;
        }
        let lt_rows = r.rows.iter().filter(|row| row.statistic.starts_with("lt_gap"));
        pass &= lt_rows.clone().count() == 36 && lt_rows.clone().all(|row| row.status == Status::Pass);
        pass &= lt_rows.clone().all(|row| row.tolerance == Some(1e-10));
        detail.push(format!("{name} max |closed form - oracle| {:e}", max_value(&r, "lt_gap")));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 10.0;
    Ok(Outcome { pass, detail: format!("{}; runtime {secs:.2}s (< 10s)", detail.join("; ")) })
}

fn ac3() -> Result<Outcome> {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, spec) in envs() {
        let mut c = cfg(spec);
        c.replicates = Some(1_000_000);
        c.horizons = Some((1..=6).collect());
        let r = experiments::run_transform_identities(&c)?;
        pass &= r.passed();
        let min_p = r
            .rows
            .iter()
            .filter(|row| row.statistic == "branch_chi_square_p")
            .map(|row| row.value)
            .fold(1.0, f64::min);
        detail.push(format!(
            "{name} max TV one-spine {:.5}, two-spine {:.5}, min K chi-square p {:.4}{}",
            max_value(&r, "tv_one_spine"),
            max_value(&r, "tv_two_spine"),
            min_p,
            failing(&r)
        ));
    }
    Ok(Outcome { pass, detail: detail.join("; ") })
}

fn ac4() -> Result<Outcome> {
    let e1 = EnvSpec::e1().build()?;
    let mut pass = true;
    let mut worst = 0.0_f64;
    for n in [9usize, 99, 999] {
        let gap = (pgf::kolmogorov_ratio(&e1, n)? - n as f64 / (n + 1) as f64).abs();
        worst = worst.max(gap);
        pass &= gap <= 1e-12;
    }
    let mut c = cfg(EnvSpec::e2());
    c.horizons = Some(vec![100, 500, 2000]);
    let r = experiments::run_kolmogorov(&c)?;
    pass &= r.passed();
    Ok(Outcome {
        pass,
        detail: format!(
            "E1 max |ratio - n/(n+1)| {worst:e}; E2 |ratio - 1| at 100, 500, 2000: {:.6}, {:.6}, {:.6}{}",
            value(&r, Some(100), "gap"),
            value(&r, Some(500), "gap"),
            value(&r, Some(2000), "gap"),
            failing(&r)
        ),
    })
}

fn ac5() -> Result<Outcome> {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, spec) in envs() {
        let mut c = cfg(spec);
        c.horizons = Some(vec![10, 100, 1000]);
        let r = experiments::run_uniform_limit(&c)?;
        let bounded = r.rows.iter().filter(|row| row.statistic == "sup_gap").all(|row| row.status == Status::Pass);
        pass &= bounded;
        let sups: Vec<f64> = [10, 100, 1000].iter().map(|&n| value(&r, Some(n), "sup_gap")).collect();
        if name == "E1" {
            let strict = sups[2] < 1e-3;
            pass &= strict;
            detail.push(format!("E1 sup <= norm: {bounded}; sup at n=1000 {:?} < 1e-3: {strict}", sups[2]));
        } else {
            let decreasing = status(&r, None, "sup_gap_increment_max") == Some(Status::Pass);
            pass &= decreasing;
            detail.push(format!("E2 sup <= norm: {bounded}; sups {sups:?} decreasing: {decreasing}"));
        }
    }
    Ok(Outcome { pass, detail: detail.join("; ") })
}

fn ac6() -> Result<Outcome> {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, spec) in envs() {
        let mut c = cfg(spec);
        c.horizons = Some(vec![10, 100, 1000]);
        c.s_grid = (0..=20).map(|i| i as f64 * 0.25).collect();
        c.tolerances.g_sup = 0.05;
        let r = experiments::run_g_convergence(&c)?;
        pass &= r.passed();
        let ds: Vec<f64> = [10, 100, 1000].iter().map(|&n| value(&r, Some(n), "d")).collect();
        detail.push(format!("{name} D(10, 100, 1000) = {:.5}, {:.5}, {:.5}{}", ds[0], ds[1], ds[2], failing(&r)));
    }
    Ok(Outcome { pass, detail: detail.join("; ") })
}

fn ac7() -> Result<Outcome> {
    let s_grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.25).collect();
    let g1 = experiments::laplace_curve_gap(&EnvSpec::e1().build()?, 1000, &s_grid)?;
    let g2 = experiments::laplace_curve_gap(&EnvSpec::e2().build()?, 1000, &s_grid)?;
    let mut pass = g1 < 5e-3 && g2 < 2e-2;

    let mut c = cfg(EnvSpec::e1());
    c.horizons = Some(vec![50, 200, 500]);
    c.min_survivors = 100_000;
    c.tolerances.ks = 0.02;
    let r = experiments::run_yaglom(&c)?;
    let ks_ok = status(&r, Some(500), "ks_exp1") == Some(Status::Pass);
    let survivors = value(&r, Some(500), "survivors");
    let trend_ok = status(&r, None, "ks_increment_max") == Some(Status::Pass);
    pass &= ks_ok && trend_ok && survivors >= 1e5;
    let ks: Vec<f64> = [50, 200, 500].iter().map(|&n| value(&r, Some(n), "ks_exp1")).collect();
    Ok(Outcome {
        pass,
        detail: format!(
            "curve gap n=1000 E1 {g1:.2e} (< 5e-3), E2 {g2:.2e} (< 2e-2); E1 KS at 50, 200, 500: {:.4}, {:.4}, {:.4} \
             with {survivors} survivors at n=500",
            ks[0], ks[1], ks[2]
        ),
    })
}

fn ac8() -> Result<Outcome> {
    let mut c = cfg(EnvSpec::e1());
    c.horizons = Some(vec![500]);
    c.replicates = Some(100_000);
    let r = experiments::run_exponential_characterization(&c)?;
    Ok(Outcome {
        pass: r.passed(),
        detail: format!(
            "max closed-form gap {:e}; KS(Zddot/a_n, Gamma(3)) at n=500 {:.4}{}",
            max_value(&r, "closed_form_gap"),
            value(&r, Some(500), "ks_gamma3"),
            failing(&r)
        ),
    })
}

fn small_config(e: Experiment, threads: usize) -> ExperimentConfig {
    let mut c = cfg(EnvSpec::e2());
    c.threads = threads;
    c.seed = 77;
    match e {
        Experiment::Identities => {
            c.horizons = Some(vec![1, 2, 3]);
            c.replicates = Some(20_000);
        }
        Experiment::Yaglom => {
            c.horizons = Some(vec![20, 50]);
            c.min_survivors = 3_000;
            c.curve_horizon = 100;
        }
        Experiment::Exponential => {
            c.horizons = Some(vec![100]);
            c.replicates = Some(5_000);
        }
        _ => {}
    }
    c
}

fn ac9() -> Result<Outcome> {
    let mut pass = true;
    let mut checked = Vec::new();
    for e in Experiment::ALL {
        let a = e.run(&small_config(e, 1))?.csv();
        let b = e.run(&small_config(e, 4))?.csv();
        let c = e.run(&small_config(e, 1))?.csv();
        let same = a == b && a == c;
        pass &= same;
        checked.push(format!("{e}:{}", if same { "identical" } else { "DIFFERENT" }));
    }
    for kind in [SimulationKind::Gw, SimulationKind::TwoSpine, SimulationKind::Yaglom] {
        let run = |threads| -> Result<String> {
            let mut c = small_config(Experiment::Identities, threads);
            c.min_survivors = 2_000;
            let sim = experiments::simulate(kind, &c)?;
            let mut buf = Vec::new();
            sim.write_histogram_csv(&mut buf)?;
            sim.write_samples_csv(&mut buf)?;
            sim.report.write_csv(&mut buf, true)?;
            Ok(String::from_utf8(buf).expect("ascii"))
        };
        let same = run(1)? == run(3)?;
        pass &= same;
        checked.push(format!("simulate {kind}:{}", if same { "identical" } else { "DIFFERENT" }));
    }
    Ok(Outcome { pass, detail: format!("threads 1 vs 4 (3 for simulate): {}", checked.join(", ")) })
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, Criterion); 9] = [
        ("AC1", "exact two-spine decomposition identity", ac1),
        ("AC2", "closed-form transforms vs brute-force laws", ac2),
        ("AC3", "spine samplers vs exact transformed laws", ac3),
        ("AC4", "Kolmogorov-type survival limit", ac4),
        ("AC5", "uniform limit of the MRCA time ratio", ac5),
        ("AC6", "hanging-subtree ratio g converges to 1", ac6),
        ("AC7", "Yaglom exponential limit", ac7),
        ("AC8", "pair-biased exponential characterization", ac8),
        ("AC9", "seed and thread-count reproducibility", ac9),
    ];
    let mut blocking = Vec::new();
    let mut passed = 0;
    for (id, title, run) in criteria {
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Outcome { pass: false, detail: format!("error: {e}") });
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id} {title} ({:.1}s): {}", start.elapsed().as_secs_f64(), outcome.detail);
        if outcome.pass {
            passed += 1;
        } else if let Some((_, why)) = KNOWN_UNATTAINABLE.iter().find(|(k, _)| *k == id) {
            println!("       known unattainable: {why}");
        } else {
            blocking.push(id);
        }
    }
    println!("acceptance: {passed}/9 criteria pass");
    if blocking.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {}", blocking.join(", "));
        ExitCode::FAILURE
    }
}
