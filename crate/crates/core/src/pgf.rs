//! Composed generating functions `f_{m,n} = f_{m+1} o ... o f_n`, their first two
//! derivatives, and the Laplace transforms, spine-time laws and ratios built on them.
//!
//! Every quantity for a fixed `(n, s)` is read off one backward pass
//! ([`CompositionTrace`]), so a whole family of transforms costs `O(n)`.

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::summation::NeumaierSum;

/// Survival probabilities at or below this are treated as extinction.
pub const EXTINCTION_FLOOR: f64 = 1e-300;
/// Relative agreement demanded between the two routes to `g(n, m, lambda)`.
pub const G_AGREEMENT_TOL: f64 = 1e-12;

/// The backward sequence `v_l = f_{l,n}(s)`, `l = n, ..., 0`.
///
/// Alongside the values it keeps the complements `1 - v_l` computed without
/// cancellation, the suffix log-products `log f'_{l,n}(s)`, and the normalized
/// second-derivative sums `f''_{l,n}(s) / f'_{l,n}(s)`.
#[derive(Debug, Clone)]
pub struct CompositionTrace<'a> {
    env: &'a Environment,
    n: usize,
    values: Vec<f64>,
    complements: Vec<f64>,
    /// `log f'_{l,n}(s)`; `-inf` when some factor vanishes.
    log_d1: Vec<f64>,
    /// `f''_{l,n}(s) / f'_{l,n}(s) = sum_{j=l+1}^{n} f'_{j,n}(s) f_j''(v_j) / f_j'(v_j)`.
    d2_over_d1: Vec<f64>,
}

fn check_unit(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("s = {s} outside [0, 1]")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("lambda = {lambda} must be nonnegative")))
    }
}

fn check_before(m: usize, n: usize) -> Result<()> {
    if m < n {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("need m < n, got m = {m}, n = {n}")))
    }
}

impl<'a> CompositionTrace<'a> {
    pub fn new(env: &'a Environment, n: usize, s: f64) -> Result<Self> {
        check_unit(s)?;
        Ok(Self::build(env, n, s, 1.0 - s))
    }

    /// Trace at `s = e^{-lambda}`.
    pub fn at_lambda(env: &'a Environment, n: usize, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self::build(env, n, (-lambda).exp(), -(-lambda).exp_m1()))
    }

    fn build(env: &'a Environment, n: usize, s: f64, c: f64) -> Self {
        let mut values = vec![0.0; n + 1];
        let mut complements = vec![0.0; n + 1];
        let mut log_d1 = vec![0.0_f64; n + 1];
        let mut d2_over_d1 = vec![0.0; n + 1];
        values[n] = s;
        complements[n] = c;
        let mut log_acc = NeumaierSum::new();
        let mut ratio_acc = NeumaierSum::new();
        for l in (1..=n).rev() {
            let d = env.dist_at(l);
            let v = values[l];
            let slope = d.d1(v);
            // f'_{l,n}(s) multiplies the term of generation l
            let outer = log_d1[l].exp();
            ratio_acc.add(outer * d.d2(v) / slope);
            log_acc.add(slope.ln());
            values[l - 1] = d.pgf(v);
            complements[l - 1] = d.complement(complements[l]);
            log_d1[l - 1] = if slope > 0.0 && log_d1[l] > f64::NEG_INFINITY { log_acc.value() } else { f64::NEG_INFINITY };
            d2_over_d1[l - 1] = ratio_acc.value();
        }
        Self { env, n, values, complements, log_d1, d2_over_d1 }
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn environment(&self) -> &'a Environment {
        self.env
    }

    /// `f_{l,n}(s)`.
    pub fn value(&self, l: usize) -> f64 {
        self.values[l]
    }

    /// `1 - f_{l,n}(s)`.
    pub fn complement(&self, l: usize) -> f64 {
        self.complements[l]
    }

    pub fn log_d1(&self, l: usize) -> f64 {
        self.log_d1[l]
    }

    /// `f'_{l,n}(s)`.
    pub fn d1(&self, l: usize) -> f64 {
        self.log_d1[l].exp()
    }

    /// `f''_{l,n}(s)`.
    pub fn d2(&self, l: usize) -> f64 {
        if self.log_d1[l] > f64::NEG_INFINITY {
            self.d1(l) * self.d2_over_d1[l]
        } else {
            self.d2_linear(l)
        }
    }

    /// Second derivative by the forward chain rule, for traces where some
    /// `f_j'(v_j)` vanishes and the normalized sum is undefined.
    fn d2_linear(&self, l: usize) -> f64 {
        let (mut d1, mut d2) = (1.0, 0.0);
        for j in (l + 1..=self.n).rev() {
            let dist = self.env.dist_at(j);
            let v = self.values[j];
            d2 = dist.d2(v) * d1 * d1 + dist.d1(v) * d2;
            d1 *= dist.d1(v);
        }
        d2
    }

    /// `f''_{l,n}(s) / mu_n^2`.
    fn d2_scaled(&self, l: usize) -> f64 {
        let log_mu_n = self.env.log_mu(self.n);
        if self.log_d1[l] == f64::NEG_INFINITY {
            return self.d2_linear(l) * (-2.0 * log_mu_n).exp();
        }
        (self.log_d1[l] - 2.0 * log_mu_n).exp() * self.d2_over_d1[l]
    }
}

/// `f_{m,n}(s)`.
pub fn compose(env: &Environment, m: usize, n: usize, s: f64) -> Result<f64> {
    check_order(m, n)?;
    Ok(CompositionTrace::new(env, n, s)?.value(m))
}

/// `f'_{m,n}(s)`.
pub fn d1_compose(env: &Environment, m: usize, n: usize, s: f64) -> Result<f64> {
    check_order(m, n)?;
    Ok(CompositionTrace::new(env, n, s)?.d1(m))
}

/// `f''_{m,n}(s)`.
pub fn d2_compose(env: &Environment, m: usize, n: usize, s: f64) -> Result<f64> {
    check_order(m, n)?;
    Ok(CompositionTrace::new(env, n, s)?.d2(m))
}

fn check_order(m: usize, n: usize) -> Result<()> {
    if m <= n {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("need m <= n, got m = {m}, n = {n}")))
    }
}

/// `P(Z_n > 0) = 1 - f_{0,n}(0)`.
pub fn survival_prob(env: &Environment, n: usize) -> f64 {
    CompositionTrace::build(env, n, 0.0, 1.0).complement(0)
}

/// Transforms that share one trace at `s = e^{-lambda}`.
#[derive(Debug, Clone)]
pub struct Transforms<'a> {
    trace: CompositionTrace<'a>,
    lambda: f64,
}

impl<'a> Transforms<'a> {
    pub fn new(env: &'a Environment, n: usize, lambda: f64) -> Result<Self> {
        Ok(Self { trace: CompositionTrace::at_lambda(env, n, lambda)?, lambda })
    }

    pub fn trace(&self) -> &CompositionTrace<'a> {
        &self.trace
    }

    fn env(&self) -> &'a Environment {
        self.trace.env
    }

    fn n(&self) -> usize {
        self.trace.n
    }

    /// `E[e^{-lambda Z_n}] = f_{0,n}(e^{-lambda})`.
    pub fn z(&self) -> f64 {
        self.trace.value(0)
    }

    /// `1 - E[e^{-lambda Z_n}]`.
    pub fn z_complement(&self) -> f64 {
        self.trace.complement(0)
    }

    /// Size-biased population: `f'_{0,n}(e^{-lambda}) e^{-lambda} / mu_n`.
    pub fn zdot(&self) -> f64 {
        (self.trace.log_d1(0) - self.env().log_mu(self.n()) - self.lambda).exp()
    }

    /// Size-biased population of the shifted environment `Q_{m+1}` after `n - m - 1` steps:
    /// `(mu_{m+1} / mu_n) f'_{m+1,n}(e^{-lambda}) e^{-lambda}`.
    pub fn zdot_shifted(&self, m: usize) -> Result<f64> {
        check_before(m, self.n())?;
        let env = self.env();
        Ok((env.log_mu(m + 1) - env.log_mu(self.n()) + self.trace.log_d1(m + 1) - self.lambda).exp())
    }

    /// Pair-biased population: `f''_{0,n}(e^{-lambda}) e^{-2 lambda} / (mu_n^2 S_n)`.
    pub fn zddot(&self) -> Result<f64> {
        let n = self.n();
        if n == 0 {
            return Err(Error::OutOfRange("pair-biased transform needs n >= 1".into()));
        }
        let s_n = self.env().cum_nu_over_mu(n);
        if s_n <= 0.0 {
            return Err(Error::NoPairBiasedLaw);
        }
        Ok(self.trace.d2_scaled(0) * (-2.0 * self.lambda).exp() / s_n)
    }

    /// Subtree hanging off a size-biased spine vertex of generation `m`:
    /// `f'_{m+1}(x) / f'_{m+1}(1)`, `x = f_{m+1,n}(e^{-lambda})`.
    pub fn hanging_qdot(&self, m: usize) -> Result<f64> {
        check_before(m, self.n())?;
        let d = self.env().dist_at(m + 1);
        Ok(d.d1(self.trace.value(m + 1)) / d.mean())
    }

    /// Subtree hanging off the branching vertex of generation `m`:
    /// `f''_{m+1}(x) / f''_{m+1}(1)`.
    pub fn hanging_qddot(&self, m: usize) -> Result<f64> {
        check_before(m, self.n())?;
        let d = self.env().dist_at(m + 1);
        let f2 = d.factorial_moments()[1];
        if f2 <= 0.0 {
            return Err(Error::NoPairBiasedLaw);
        }
        Ok(d.d2(self.trace.value(m + 1)) / f2)
    }

    /// `g(n, m, lambda)`: the quotient of the two hanging transforms, checked against
    /// the rearranged product `f'(1)/f'(x) * f''(x)/f''(1)`.
    pub fn g_ratio(&self, m: usize) -> Result<f64> {
        let quotient = self.hanging_qddot(m)? / self.hanging_qdot(m)?;
        let d = self.env().dist_at(m + 1);
        let x = self.trace.value(m + 1);
        let closed = (d.mean() / d.d1(x)) * (d.d2(x) / d.factorial_moments()[1]);
        if (quotient - closed).abs() > G_AGREEMENT_TOL * quotient.abs().max(closed.abs()) {
            return Err(Error::Inconsistent(format!(
                "g({}, {m}, {}): quotient {quotient:e} vs closed form {closed:e}",
                self.n(),
                self.lambda
            )));
        }
        Ok(closed)
    }

    /// Right-hand side of the two-spine decomposition of the pair-biased transform:
    /// `zdot * sum_m P(K_n = m) zdot_shifted(m) g(n, m, lambda)`.
    pub fn two_spine_rhs(&self) -> Result<f64> {
        let n = self.n();
        let pmf = kn_pmf_all(self.env(), n)?;
        let mut acc = NeumaierSum::new();
        for (m, &w) in pmf.iter().enumerate() {
            if w > 0.0 {
                acc.add(w * self.zdot_shifted(m)? * self.g_ratio(m)?);
            }
        }
        Ok(self.zdot() * acc.value())
    }
}

pub fn laplace_z(env: &Environment, n: usize, lambda: f64) -> Result<f64> {
    Ok(Transforms::new(env, n, lambda)?.z())
}

pub fn laplace_zdot(env: &Environment, n: usize, lambda: f64) -> Result<f64> {
    Ok(Transforms::new(env, n, lambda)?.zdot())
}

pub fn laplace_zddot(env: &Environment, n: usize, lambda: f64) -> Result<f64> {
    Transforms::new(env, n, lambda)?.zddot()
}

pub fn laplace_zdot_shifted(env: &Environment, n: usize, m: usize, lambda: f64) -> Result<f64> {
    check_before(m, n)?;
    Transforms::new(env, n, lambda)?.zdot_shifted(m)
}

pub fn laplace_hanging_qdot(env: &Environment, n: usize, m: usize, lambda: f64) -> Result<f64> {
    check_before(m, n)?;
    Transforms::new(env, n, lambda)?.hanging_qdot(m)
}

pub fn laplace_hanging_qddot(env: &Environment, n: usize, m: usize, lambda: f64) -> Result<f64> {
    check_before(m, n)?;
    Transforms::new(env, n, lambda)?.hanging_qddot(m)
}

pub fn g_ratio(env: &Environment, n: usize, m: usize, lambda: f64) -> Result<f64> {
    check_before(m, n)?;
    Transforms::new(env, n, lambda)?.g_ratio(m)
}

pub fn two_spine_decomposition_rhs(env: &Environment, n: usize, lambda: f64) -> Result<f64> {
    Transforms::new(env, n, lambda)?.two_spine_rhs()
}

/// `E[e^{-lambda Z_n} | Z_n > 0] = 1 - (1 - f_{0,n}(e^{-lambda})) / (1 - f_{0,n}(0))`.
pub fn conditional_laplace_z(env: &Environment, n: usize, lambda: f64) -> Result<f64> {
    let survival = survival_prob(env, n);
    if survival <= EXTINCTION_FLOOR {
        return Err(Error::Extinct(n));
    }
    Ok(1.0 - Transforms::new(env, n, lambda)?.z_complement() / survival)
}

/// `(a_n / mu_n) P(Z_n > 0) = (S_n / 2) P(Z_n > 0)`.
pub fn kolmogorov_ratio(env: &Environment, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::OutOfRange("Kolmogorov ratio needs n >= 1".into()));
    }
    Ok(0.5 * env.cum_nu_over_mu(n) * survival_prob(env, n))
}

/// Law of the branching time `K_n`: `P(K_n = r) = (nu_{r+1} / mu_r) / S_n`, `r < n`.
pub fn kn_pmf_all(env: &Environment, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::OutOfRange("K_n needs n >= 1".into()));
    }
    let s_n = env.cum_nu_over_mu(n);
    if s_n <= 0.0 {
        return Err(Error::NoPairBiasedLaw);
    }
    Ok(env.terms(n).into_iter().map(|t| t / s_n).collect())
}

pub fn kn_pmf(env: &Environment, n: usize, r: usize) -> Result<f64> {
    check_before(r, n)?;
    let s_n = env.cum_nu_over_mu(n);
    if s_n <= 0.0 {
        return Err(Error::NoPairBiasedLaw);
    }
    Ok(env.nu_over_mu(r) / s_n)
}

/// `A_{n,m} = (sum_{j=m+1}^{n-1} nu_{j+1} / mu_j) / S_n` for `m = 0..n`.
pub fn a_ratios(env: &Environment, n: usize) -> Result<Vec<f64>> {
    let pmf = kn_pmf_all(env, n)?;
    let mut out = vec![0.0; n];
    let mut acc = NeumaierSum::new();
    for m in (0..n).rev() {
        out[m] = acc.value();
        acc.add(pmf[m]);
    }
    Ok(out)
}

pub fn a_ratio(env: &Environment, n: usize, m: usize) -> Result<f64> {
    check_before(m, n)?;
    let s_n = env.cum_nu_over_mu(n);
    if s_n <= 0.0 {
        return Err(Error::NoPairBiasedLaw);
    }
    let tail = crate::summation::sum(env.terms(n)[m + 1..].iter().copied());
    Ok(tail / s_n)
}

/// The partition `0 = P_0 <= P_1 <= ... <= P_{n-1} <= P_n = 1` with `P_k = A_{n,n-k-1}`,
/// and the step CDF of `A_{n,K_n}` through it.
#[derive(Debug, Clone)]
pub struct Partition {
    points: Vec<f64>,
    /// `cdf[k] = P(A_{n,K_n} <= P_k)`.
    cdf: Vec<f64>,
}

impl Partition {
    pub fn new(env: &Environment, n: usize) -> Result<Self> {
        let pmf = kn_pmf_all(env, n)?;
        let ratios = a_ratios(env, n)?;
        let mut points: Vec<f64> = (0..n).map(|k| ratios[n - k - 1]).collect();
        points.push(1.0);
        let mut cdf = Vec::with_capacity(n);
        let mut acc = NeumaierSum::new();
        for k in 0..n {
            acc.add(pmf[n - k - 1]);
            cdf.push(acc.value().min(1.0));
        }
        Ok(Self { points, cdf })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `P(A_{n,K_n} <= y)`.
    pub fn cdf(&self, y: f64) -> f64 {
        let below = self.points[..self.cdf.len()].partition_point(|&p| p <= y);
        if below == 0 {
            0.0
        } else {
            self.cdf[below - 1]
        }
    }

    /// Largest gap `P_{k+1} - P_k`, equal to `max_m P(K_n = m)`.
    pub fn norm(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// `sup_{y in [0,1]} |P(A_{n,K_n} <= y) - y|`, exactly.
    pub fn sup_gap(&self) -> f64 {
        let mut gap = 0.0_f64;
        for (k, &f) in self.cdf.iter().enumerate() {
            gap = gap.max((f - self.points[k]).abs()).max((f - self.points[k + 1]).abs());
        }
        gap
    }
}

pub fn a_kn_cdf(env: &Environment, n: usize, y: f64) -> Result<f64> {
    Ok(Partition::new(env, n)?.cdf(y))
}

/// `max_m P(K_n = m)`.
pub fn partition_norm(env: &Environment, n: usize) -> Result<f64> {
    Ok(kn_pmf_all(env, n)?.into_iter().fold(0.0, f64::max))
}
