//! Varying environments `Q = (q_1, q_2, ...)` and their Kersting constants.
//!
//! The environment caches `log mu_n` and `S_n = sum_{k<n} nu_{k+1} / mu_k`
//! incrementally. `mu_n` lives in log space because it under- or overflows for
//! non-critical environments; `S_n` is accumulated with Neumaier compensation.

use std::fmt;
use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;
use crate::summation::NeumaierSum;

pub type Law = Arc<OffspringDistribution>;

#[derive(Debug, Clone)]
pub enum Rule {
    Constant(Law),
    Periodic(Vec<Law>),
    Explicit { head: Vec<Law>, tail: Law },
}

impl Rule {
    fn at(&self, n: usize) -> &Law {
        match self {
            Rule::Constant(d) => d,
            Rule::Periodic(cycle) => &cycle[(n - 1) % cycle.len()],
            Rule::Explicit { head, tail } => head.get(n - 1).unwrap_or(tail),
        }
    }
}

#[derive(Debug, Default)]
struct Cache {
    /// `log_mu[n] = log mu_n`, `log_mu[0] = 0`.
    log_mu: Vec<f64>,
    log_mu_acc: NeumaierSum,
    /// `cum[n] = S_n`, `cum[0] = 0`.
    cum: Vec<f64>,
    cum_acc: NeumaierSum,
    /// `terms[k] = nu_{k+1} / mu_k`.
    terms: Vec<f64>,
    /// `log_cum[n] = log S_n`, finite where `S_n` itself overflows.
    log_cum: Vec<f64>,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

#[derive(Clone)]
pub struct Environment {
    rule: Arc<Rule>,
    /// Laws placed in front of the rule (generations `1..=prefix.len()`).
    prefix: Vec<Law>,
    /// Generations of the rule skipped by shifting.
    offset: usize,
    cache: Arc<RwLock<Cache>>,
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Environment").field("label", &self.label()).finish()
    }
}

fn check_law(d: &OffspringDistribution) -> Result<()> {
    if d.mean() > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!("{} has zero mean; every generation needs f'(1) > 0", d.label())))
    }
}

impl Environment {
    fn from_rule(rule: Rule) -> Self {
        Self { rule: Arc::new(rule), prefix: Vec::new(), offset: 0, cache: Arc::default() }
    }

    pub fn constant(d: OffspringDistribution) -> Result<Self> {
        check_law(&d)?;
        Ok(Self::from_rule(Rule::Constant(Arc::new(d))))
    }

    pub fn periodic(cycle: Vec<OffspringDistribution>) -> Result<Self> {
        if cycle.is_empty() {
            return Err(Error::Config("periodic environment needs a nonempty cycle".into()));
        }
        cycle.iter().try_for_each(check_law)?;
        Ok(Self::from_rule(Rule::Periodic(cycle.into_iter().map(Arc::new).collect())))
    }

    pub fn explicit(head: Vec<OffspringDistribution>, tail: OffspringDistribution) -> Result<Self> {
        head.iter().try_for_each(check_law)?;
        check_law(&tail)?;
        Ok(Self::from_rule(Rule::Explicit { head: head.into_iter().map(Arc::new).collect(), tail: Arc::new(tail) }))
    }

    pub fn label(&self) -> String {
        let base = match &*self.rule {
            Rule::Constant(d) => format!("constant({})", d.label()),
            Rule::Periodic(c) => {
                format!("periodic({})", c.iter().map(|d| d.label()).collect::<Vec<_>>().join(";"))
            }
            Rule::Explicit { head, tail } => format!("explicit(head={},tail={})", head.len(), tail.label()),
        };
        let mut out = base;
        if self.offset > 0 {
            out = format!("shift({out},{})", self.offset);
        }
        for d in self.prefix.iter().rev() {
            out = format!("{}+{out}", d.label());
        }
        out
    }

    /// Offspring law of generation `n >= 1`.
    pub fn dist_at(&self, n: usize) -> &Law {
        assert!(n >= 1, "generations are numbered from 1");
        if n <= self.prefix.len() {
            &self.prefix[n - 1]
        } else {
            self.rule.at(self.offset + n - self.prefix.len())
        }
    }

    /// `Q_m = (q_{m+1}, q_{m+2}, ...)`.
    pub fn shift(&self, m: usize) -> Environment {
        let (prefix, offset) = if m <= self.prefix.len() {
            (self.prefix[m..].to_vec(), self.offset)
        } else {
            (Vec::new(), self.offset + m - self.prefix.len())
        };
        Self { rule: self.rule.clone(), prefix, offset, cache: Arc::default() }
    }

    /// `d (+) Q = (d, q_1, q_2, ...)`.
    pub fn prepend(&self, d: OffspringDistribution) -> Result<Environment> {
        check_law(&d)?;
        let mut prefix = Vec::with_capacity(self.prefix.len() + 1);
        prefix.push(Arc::new(d));
        prefix.extend(self.prefix.iter().cloned());
        Ok(Self { rule: self.rule.clone(), prefix, offset: self.offset, cache: Arc::default() })
    }

    fn ensure(&self, n: usize) {
        if self.cache.read().expect("cache lock").log_mu.len() > n {
            return;
        }
        let mut c = self.cache.write().expect("cache lock");
        if c.log_mu.is_empty() {
            c.log_mu.push(0.0);
            c.cum.push(0.0);
            c.log_cum.push(f64::NEG_INFINITY);
        }
        while c.log_mu.len() <= n {
            let k = c.log_mu.len() - 1;
            let d = self.dist_at(k + 1);
            let nu = d.nu().expect("validated mean");
            let term = nu * (-c.log_mu[k]).exp();
            let log_cum = log_add_exp(c.log_cum[k], nu.ln() - c.log_mu[k]);
            c.log_cum.push(log_cum);
            c.terms.push(term);
            c.cum_acc.add(term);
            let s = c.cum_acc.value();
            c.cum.push(s);
            c.log_mu_acc.add(d.mean().ln());
            let lm = c.log_mu_acc.value();
            c.log_mu.push(lm);
        }
    }

    pub fn log_mu(&self, n: usize) -> f64 {
        self.ensure(n);
        self.cache.read().expect("cache lock").log_mu[n]
    }

    /// `mu_n = f_1'(1) ... f_n'(1)`; may be `inf` or `0` when out of range, see [`Self::mu_checked`].
    pub fn mu(&self, n: usize) -> f64 {
        self.log_mu(n).exp()
    }

    pub fn mu_checked(&self, n: usize) -> Result<f64> {
        let lm = self.log_mu(n);
        let mu = lm.exp();
        if mu.is_infinite() {
            Err(Error::MuOverflow { n, positive: true })
        } else if mu == 0.0 {
            Err(Error::MuOverflow { n, positive: false })
        } else {
            Ok(mu)
        }
    }

    /// `nu_n = f_n''(1) / f_n'(1)^2`.
    pub fn nu(&self, n: usize) -> f64 {
        self.dist_at(n).nu().expect("validated mean")
    }

    /// `nu_{k+1} / mu_k`.
    pub fn nu_over_mu(&self, k: usize) -> f64 {
        self.ensure(k + 1);
        self.cache.read().expect("cache lock").terms[k]
    }

    /// `S_n = sum_{k=0}^{n-1} nu_{k+1} / mu_k` (zero for `n = 0`).
    pub fn cum_nu_over_mu(&self, n: usize) -> f64 {
        self.ensure(n);
        self.cache.read().expect("cache lock").cum[n]
    }

    /// `log S_n`, usable when `S_n` overflows in a subcritical environment.
    pub fn log_cum_nu_over_mu(&self, n: usize) -> f64 {
        self.ensure(n);
        self.cache.read().expect("cache lock").log_cum[n]
    }

    /// `log (mu_n S_n)`.
    pub fn log_a_scale(&self, n: usize) -> f64 {
        self.log_mu(n) + self.log_cum_nu_over_mu(n)
    }

    /// Terms `nu_{k+1} / mu_k` for `k = 0..n`.
    pub fn terms(&self, n: usize) -> Vec<f64> {
        self.ensure(n);
        self.cache.read().expect("cache lock").terms[..n].to_vec()
    }

    /// `a_0 = 1`, `a_n = (mu_n / 2) S_n`.
    pub fn a_n(&self, n: usize) -> f64 {
        if n == 0 {
            return 1.0;
        }
        0.5 * self.mu(n) * self.cum_nu_over_mu(n)
    }

    /// Distinct laws among generations `1..=horizon`.
    pub fn distinct_laws(&self, horizon: usize) -> Vec<Law> {
        let mut out: Vec<Law> = Vec::new();
        let mut push = |d: &Law| {
            if !out.iter().any(|e| Arc::ptr_eq(e, d)) {
                out.push(d.clone());
            }
        };
        match &*self.rule {
            Rule::Constant(_) | Rule::Periodic(_) => {
                self.prefix.iter().take(horizon).for_each(&mut push);
                let cycle_len = if let Rule::Periodic(c) = &*self.rule { c.len() } else { 1 };
                let start = self.prefix.len() + 1;
                for n in start..=horizon.min(self.prefix.len() + cycle_len) {
                    push(self.dist_at(n));
                }
            }
            Rule::Explicit { .. } => (1..=horizon).for_each(|n| push(self.dist_at(n))),
        }
        out
    }

    /// Regime diagnostics over a finite horizon.
    pub fn classify(&self, horizon: usize, tol: f64) -> RegimeDiagnostics {
        let horizon = horizon.max(10);
        let half = horizon / 2;
        let mu_h = self.mu(horizon);
        let mu_half = self.mu(half);
        let s_h = self.cum_nu_over_mu(horizon);
        let s_half = self.cum_nu_over_mu(half);
        let mut min_log_mu = f64::INFINITY;
        let mut min_log_mu_s = f64::INFINITY;
        for n in half..=horizon {
            min_log_mu = min_log_mu.min(self.log_mu(n));
            min_log_mu_s = min_log_mu_s.min(self.log_a_scale(n));
        }

        let laws = self.distinct_laws(horizon);
        let sup = |f: &dyn Fn(&OffspringDistribution) -> Result<f64>| {
            laws.iter().filter_map(|d| f(d).ok()).fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        };
        let mut diagnostics = RegimeDiagnostics {
            horizon,
            tol,
            exact: false,
            mu_half,
            mu_horizon: mu_h,
            s_half,
            s_horizon: s_h,
            mu_s_half: self.log_a_scale(half).exp(),
            mu_s_horizon: self.log_a_scale(horizon).exp(),
            window_min_mu: min_log_mu.exp(),
            window_min_mu_s: min_log_mu_s.exp(),
            regime: Regime::Inconclusive,
            sup_regularity_ratio: sup(&|d| d.regularity_ratio()),
            sup_condition_a_ratio: sup(&|d| d.condition_a_ratio()),
        };
        match self.cycle() {
            Some(cycle) => {
                diagnostics.regime = exact_regime(&cycle);
                diagnostics.exact = true;
            }
            None => diagnostics.regime = trend_regime(&self.trend_inputs(half, horizon, min_log_mu), tol),
        }
        diagnostics
    }

    fn trend_inputs(&self, half: usize, horizon: usize, min_log_mu: f64) -> TrendInputs {
        TrendInputs {
            s_half: self.cum_nu_over_mu(half),
            s_horizon: self.cum_nu_over_mu(horizon),
            log_mu_half: self.log_mu(half),
            log_mu_horizon: self.log_mu(horizon),
            log_mu_s_half: self.log_a_scale(half),
            log_mu_s_horizon: self.log_a_scale(horizon),
            min_log_mu,
        }
    }

    /// The repeating cycle of a constant or periodic rule.
    fn cycle(&self) -> Option<Vec<Law>> {
        match &*self.rule {
            Rule::Constant(d) => Some(vec![d.clone()]),
            Rule::Periodic(c) => Some(c.clone()),
            Rule::Explicit { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Supercritical,
    AsymptoticallyDegenerate,
    Critical,
    Subcritical,
    Inconclusive,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::Supercritical => "supercritical",
            Regime::AsymptoticallyDegenerate => "asymptotically-degenerate",
            Regime::Critical => "critical",
            Regime::Subcritical => "subcritical",
            Regime::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// Finite-horizon evidence for the regime of an environment.
///
/// `window_min_mu` and `window_min_mu_s` are minima over generations
/// `horizon/2..=horizon`; they stand in for the liminf of the subcritical clause,
/// which no finite computation can certify.
#[derive(Debug, Clone, Serialize)]
pub struct RegimeDiagnostics {
    pub horizon: usize,
    pub tol: f64,
    /// Label derived from per-cycle products rather than trends.
    pub exact: bool,
    pub mu_half: f64,
    pub mu_horizon: f64,
    pub s_half: f64,
    pub s_horizon: f64,
    pub mu_s_half: f64,
    pub mu_s_horizon: f64,
    pub window_min_mu: f64,
    pub window_min_mu_s: f64,
    pub regime: Regime,
    pub sup_regularity_ratio: Option<f64>,
    pub sup_condition_a_ratio: Option<f64>,
}

const CYCLE_PRODUCT_TOL: f64 = 1e-12;

fn exact_regime(cycle: &[Law]) -> Regime {
    let log_product: f64 = crate::summation::sum(cycle.iter().map(|d| d.mean().ln()));
    let any_pairs = cycle.iter().any(|d| d.factorial_moments()[1] > 0.0);
    if log_product.abs() <= CYCLE_PRODUCT_TOL {
        // mu_n is periodic; S_n grows linearly iff some generation branches
        if any_pairs {
            Regime::Critical
        } else {
            Regime::Inconclusive
        }
    } else if log_product > 0.0 {
        Regime::Supercritical
    } else {
        Regime::Subcritical
    }
}

struct TrendInputs {
    s_half: f64,
    s_horizon: f64,
    log_mu_half: f64,
    log_mu_horizon: f64,
    log_mu_s_half: f64,
    log_mu_s_horizon: f64,
    min_log_mu: f64,
}

fn trend_regime(t: &TrendInputs, tol: f64) -> Regime {
    let s_diverges = t.s_horizon > t.s_half + tol;
    let log_tol = tol.ln();
    let mu_s_grows = t.log_mu_s_horizon > t.log_mu_s_half + tol;
    if s_diverges && mu_s_grows && t.min_log_mu >= log_tol {
        Regime::Critical
    } else if !s_diverges && t.log_mu_horizon > t.log_mu_half + tol {
        Regime::Supercritical
    } else if !s_diverges && (t.log_mu_horizon - t.log_mu_half).abs() <= tol && t.log_mu_horizon.abs() < -log_tol {
        Regime::AsymptoticallyDegenerate
    } else if t.min_log_mu < log_tol && !mu_s_grows {
        Regime::Subcritical
    } else {
        Regime::Inconclusive
    }
}
