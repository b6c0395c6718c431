//! Offspring laws on the nonnegative integers.
//!
//! An [`OffspringDistribution`] evaluates its pmf and its generating function
//! `f(s) = E[s^X]` together with the first three derivatives, and carries the
//! factorial moments `f'(1)`, `f''(1)`, `f'''(1)` in closed form. The size-biased
//! (`k q(k) / f'(1)`) and pair-biased (`k(k-1) q(k) / f''(1)`) transforms and the
//! downward shift `[q - r](i) = q(i + r)` are the building blocks of the spine
//! constructions.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{Error, Result};
use crate::summation::NeumaierSum;

/// Tolerance on the total mass of a user-supplied table.
pub const TABLE_MASS_TOL: f64 = 1e-12;
/// Mass left out when an infinite-support transform is materialized as a table.
pub const TRANSFORM_TRUNCATION: f64 = 1e-12;

const MAX_MATERIALIZED: usize = 1 << 24;
const SUM_BY_LOOP: u64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Explicit pmf over `0..=K`.
    Table(Vec<f64>),
    /// `q(k) = p (1-p)^k`.
    Geometric { p: f64 },
    Poisson { lambda: f64 },
    Binomial { trials: u64, p: f64 },
    /// `by + X` with `X` distributed as `base`.
    Shifted { base: Box<Family>, by: u32 },
}

#[derive(Debug, Clone)]
enum Sampler {
    Point(u64),
    Table { cdf: Vec<f64> },
    Geometric(rand_distr::Geometric),
    Poisson(rand_distr::Poisson<f64>),
    Binomial(rand_distr::Binomial),
    Shifted { inner: Box<Sampler>, by: u64 },
}

#[derive(Debug, Clone)]
pub struct OffspringDistribution {
    family: Family,
    /// `[f'(1), f''(1), f'''(1)]`
    moments: [f64; 3],
    /// `P(X > i)` for finite tables, used by the complement evaluation.
    tails: Vec<f64>,
    sampler: Sampler,
}

impl PartialEq for OffspringDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
    }
}

impl OffspringDistribution {
    /// Finite table, validated and renormalized once.
    pub fn table(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidDistribution("table pmf is empty".into()));
        }
        if let Some((k, v)) = pmf.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDistribution(format!("table pmf[{k}] = {v} is not a probability")));
        }
        let total = crate::summation::sum(pmf.iter().copied());
        if (total - 1.0).abs() > TABLE_MASS_TOL {
            return Err(Error::InvalidDistribution(format!(
                "table pmf sums to {total}, expected 1 within {TABLE_MASS_TOL:e}"
            )));
        }
        Ok(Self::build(Family::Table(normalize_table(pmf, total))))
    }

    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidDistribution(format!("geometric p = {p} must lie in (0, 1]")));
        }
        Ok(Self::build(Family::Geometric { p }))
    }

    pub fn poisson(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidDistribution(format!("poisson lambda = {lambda} must be finite and >= 0")));
        }
        Ok(Self::build(Family::Poisson { lambda }))
    }

    pub fn binomial(trials: u64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidDistribution(format!("binomial p = {p} must lie in [0, 1]")));
        }
        Ok(Self::build(Family::Binomial { trials, p }))
    }

    /// Point mass at `k`.
    pub fn point(k: usize) -> Self {
        let mut pmf = vec![0.0; k + 1];
        pmf[k] = 1.0;
        Self::build(Family::Table(pmf))
    }

    fn shifted(base: Family, by: u32) -> Self {
        if by == 0 {
            return Self::build(base);
        }
        match base {
            Family::Shifted { base, by: inner } => Self::build(Family::Shifted { base, by: inner + by }),
            base => Self::build(Family::Shifted { base: Box::new(base), by }),
        }
    }

    /// Table from nonnegative weights with a positive total; used for internal transforms.
    fn from_weights(weights: Vec<f64>) -> Self {
        let total = crate::summation::sum(weights.iter().copied());
        Self::build(Family::Table(normalize_table(weights, total)))
    }

    fn build(family: Family) -> Self {
        let mut d = Self { family, moments: [0.0; 3], tails: Vec::new(), sampler: Sampler::Point(0) };
        d.moments = [d.derivative(1, 1.0), d.derivative(2, 1.0), d.derivative(3, 1.0)];
        if let Family::Table(pmf) = &d.family {
            let mut tails = vec![0.0; pmf.len()];
            let mut acc = 0.0;
            for i in (0..pmf.len()).rev() {
                tails[i] = acc;
                acc += pmf[i];
            }
            d.tails = tails;
        }
        d.sampler = make_sampler(&d.family);
        d
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn label(&self) -> String {
        family_label(&self.family)
    }

    /// Largest point of the support, if finite.
    pub fn support_max(&self) -> Option<usize> {
        support_max(&self.family)
    }

    pub fn pmf(&self, k: usize) -> f64 {
        family_pmf(&self.family, k)
    }

    pub fn mean(&self) -> f64 {
        self.moments[0]
    }

    /// `f'(1)`, `f''(1)`, `f'''(1)`.
    pub fn factorial_moments(&self) -> [f64; 3] {
        self.moments
    }

    /// `f(s)` or one of its first three derivatives.
    pub fn pgf_eval(&self, s: f64, order: u32) -> Result<f64> {
        if order > 3 {
            return Err(Error::UnsupportedOrder(order));
        }
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::OutOfRange(format!("pgf argument s = {s} outside [0, 1]")));
        }
        Ok(self.derivative(order as usize, s))
    }

    #[inline]
    pub fn pgf(&self, s: f64) -> f64 {
        self.derivative(0, s)
    }

    #[inline]
    pub fn d1(&self, s: f64) -> f64 {
        self.derivative(1, s)
    }

    #[inline]
    pub fn d2(&self, s: f64) -> f64 {
        self.derivative(2, s)
    }

    #[inline]
    pub fn d3(&self, s: f64) -> f64 {
        self.derivative(3, s)
    }

    fn derivative(&self, order: usize, s: f64) -> f64 {
        family_derivative(&self.family, order, s)
    }

    /// `1 - f(1 - c)`, evaluated without cancellation for small `c`.
    pub fn complement(&self, c: f64) -> f64 {
        match &self.family {
            Family::Table(_) => {
                let s = 1.0 - c;
                let mut acc = 0.0;
                for t in self.tails.iter().rev() {
                    acc = acc * s + t;
                }
                c * acc
            }
            other => family_complement(other, c),
        }
    }

    /// `nu = f''(1) / f'(1)^2`.
    pub fn nu(&self) -> Result<f64> {
        let [m1, m2, _] = self.moments;
        if m1 <= 0.0 {
            return Err(Error::DegenerateMean);
        }
        Ok(m2 / (m1 * m1))
    }

    /// Size-biased law `k q(k) / f'(1)`.
    pub fn size_biased(&self) -> Result<Self> {
        if self.mean() <= 0.0 {
            return Err(Error::NoSizeBiasedLaw);
        }
        match &self.family {
            Family::Poisson { lambda } => Ok(Self::shifted(Family::Poisson { lambda: *lambda }, 1)),
            Family::Binomial { trials, p } => Ok(Self::shifted(Family::Binomial { trials: trials - 1, p: *p }, 1)),
            _ => Ok(self.reweighted(|k| k as f64, self.moments[0])),
        }
    }

    /// Pair-biased law `k(k-1) q(k) / (nu f'(1)^2)`.
    pub fn pair_biased(&self) -> Result<Self> {
        if self.moments[1] <= 0.0 {
            return Err(Error::NoPairBiasedLaw);
        }
        match &self.family {
            Family::Poisson { lambda } => Ok(Self::shifted(Family::Poisson { lambda: *lambda }, 2)),
            Family::Binomial { trials, p } => Ok(Self::shifted(Family::Binomial { trials: trials - 2, p: *p }, 2)),
            _ => Ok(self.reweighted(|k| (k * k.saturating_sub(1)) as f64, self.moments[1])),
        }
    }

    /// Reweight the pmf by `w(k)` and materialize the result as a table; `total` is
    /// `sum_k w(k) q(k)`, the matching factorial moment.
    fn reweighted(&self, w: impl Fn(usize) -> f64, total: f64) -> Self {
        let weights = match self.support_max() {
            Some(max) => (0..=max).map(|k| w(k) * self.pmf(k)).collect(),
            None => {
                let mut weights = Vec::new();
                let mut acc = NeumaierSum::new();
                for k in 0..MAX_MATERIALIZED {
                    let x = w(k) * self.pmf(k);
                    weights.push(x);
                    acc.add(x);
                    if k > 0 && acc.value() >= total * (1.0 - TRANSFORM_TRUNCATION) {
                        break;
                    }
                }
                weights
            }
        };
        Self::from_weights(trim_trailing_zeros(weights))
    }

    /// The law `[q - r](i) = q(i + r)`.
    pub fn shift_down(&self, r: usize) -> Result<Self> {
        if r == 0 {
            return Ok(self.clone());
        }
        if let Family::Shifted { base, by } = &self.family {
            let by = *by as usize;
            if r <= by {
                return Ok(Self::shifted((**base).clone(), (by - r) as u32));
            }
            let inner = Self::build((**base).clone());
            return inner.shift_down(r - by);
        }
        if (0..r).any(|k| self.pmf(k) > 0.0) {
            return Err(Error::ShiftPrecondition(r));
        }
        match &self.family {
            Family::Table(pmf) => Ok(Self::build(Family::Table(pmf[r.min(pmf.len())..].to_vec())).non_empty()),
            // parametric laws with no mass below r are degenerate (p = 1 binomial)
            Family::Binomial { trials, .. } => Ok(Self::point(*trials as usize - r)),
            _ => Err(Error::ShiftPrecondition(r)),
        }
    }

    fn non_empty(self) -> Self {
        match &self.family {
            Family::Table(pmf) if pmf.is_empty() => Self::point(0),
            _ => self,
        }
    }

    /// Smallest `c` with `E[X^2 1{X>=2}] <= c E[X 1{X>=2}] E[X | X>=1]`.
    pub fn regularity_ratio(&self) -> Result<f64> {
        let [m1, m2, _] = self.moments;
        let p1 = self.pmf(1);
        // E[X^2; X >= 2] and E[X; X >= 2] from the factorial moments
        let sq_ge2 = m2 + m1 - p1;
        let lin = m1 - p1;
        let p_ge1 = 1.0 - self.pmf(0);
        if lin <= 0.0 || p_ge1 <= 0.0 {
            return Err(Error::RatioUndefined("no mass on {2, 3, ...} or on {1, 2, ...}"));
        }
        Ok(sq_ge2 / (lin * (m1 / p_ge1)))
    }

    /// `f'''(1) / (f''(1) (1 + f'(1)))`, the tight Condition-(A) constant.
    pub fn condition_a_ratio(&self) -> Result<f64> {
        let [m1, m2, m3] = self.moments;
        if m2 <= 0.0 {
            return Err(Error::RatioUndefined("f''(1) = 0"));
        }
        Ok(m3 / (m2 * (1.0 + m1)))
    }

    /// Pmf prefix `q(0..=k_max)` where `k_max` is the support end or the point past which
    /// less than `tail` mass remains. The result is not renormalized.
    pub fn truncated_pmf(&self, tail: f64) -> Vec<f64> {
        if let Some(max) = self.support_max() {
            return (0..=max).map(|k| self.pmf(k)).collect();
        }
        let mut out = Vec::new();
        let mut acc = NeumaierSum::new();
        for k in 0..MAX_MATERIALIZED {
            let q = self.pmf(k);
            out.push(q);
            acc.add(q);
            if 1.0 - acc.value() < tail {
                break;
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        sample_with(&self.sampler, rng)
    }

    /// Sum of `copies` independent draws, in O(1) or O(support) draws for large counts.
    pub fn sample_sum<R: Rng + ?Sized>(&self, copies: u64, rng: &mut R) -> u64 {
        if copies <= SUM_BY_LOOP {
            return (0..copies).map(|_| self.sample(rng)).sum();
        }
        family_sample_sum(&self.family, copies, rng)
    }
}

fn normalize_table(mut pmf: Vec<f64>, total: f64) -> Vec<f64> {
    for v in pmf.iter_mut() {
        *v /= total;
    }
    pmf
}

fn trim_trailing_zeros(mut v: Vec<f64>) -> Vec<f64> {
    while v.len() > 1 && *v.last().unwrap() == 0.0 {
        v.pop();
    }
    v
}

fn family_label(f: &Family) -> String {
    match f {
        Family::Table(pmf) => {
            let body: Vec<String> = pmf.iter().map(|v| v.to_string()).collect();
            format!("table[{}]", body.join(","))
        }
        Family::Geometric { p } => format!("geometric({p})"),
        Family::Poisson { lambda } => format!("poisson({lambda})"),
        Family::Binomial { trials, p } => format!("binomial({trials},{p})"),
        Family::Shifted { base, by } => format!("{by}+{}", family_label(base)),
    }
}

fn support_max(f: &Family) -> Option<usize> {
    match f {
        Family::Table(pmf) => Some(pmf.len() - 1),
        Family::Geometric { p } if *p == 1.0 => Some(0),
        Family::Poisson { lambda } if *lambda == 0.0 => Some(0),
        Family::Binomial { trials, .. } => Some(*trials as usize),
        Family::Shifted { base, by } => support_max(base).map(|m| m + *by as usize),
        _ => None,
    }
}

fn family_pmf(f: &Family, k: usize) -> f64 {
    match f {
        Family::Table(pmf) => pmf.get(k).copied().unwrap_or(0.0),
        Family::Geometric { p } => {
            let q = 1.0 - p;
            if k == 0 {
                *p
            } else if q == 0.0 {
                0.0
            } else {
                p * (k as f64 * q.ln()).exp()
            }
        }
        Family::Poisson { lambda } => {
            if *lambda == 0.0 {
                return if k == 0 { 1.0 } else { 0.0 };
            }
            (k as f64 * lambda.ln() - lambda - ln_factorial(k as u64)).exp()
        }
        Family::Binomial { trials, p } => {
            let n = *trials;
            let k = k as u64;
            if k > n {
                return 0.0;
            }
            if *p == 0.0 {
                return if k == 0 { 1.0 } else { 0.0 };
            }
            if *p == 1.0 {
                return if k == n { 1.0 } else { 0.0 };
            }
            (ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
        }
        Family::Shifted { base, by } => {
            let by = *by as usize;
            if k < by {
                0.0
            } else {
                family_pmf(base, k - by)
            }
        }
    }
}

/// Falling factorial `k (k-1) ... (k-j+1)`.
fn falling(k: u64, j: usize) -> f64 {
    (0..j as u64).map(|i| k.saturating_sub(i) as f64).product()
}

fn family_derivative(f: &Family, order: usize, s: f64) -> f64 {
    match f {
        Family::Table(pmf) => {
            if order >= pmf.len() {
                return 0.0;
            }
            let mut acc = 0.0;
            for k in (order..pmf.len()).rev() {
                acc = acc * s + pmf[k] * falling(k as u64, order);
            }
            acc
        }
        Family::Geometric { p } => {
            let q = 1.0 - p;
            let denom = 1.0 - q * s;
            let j = order as i32;
            p * falling(order as u64, order) * q.powi(j) / denom.powi(j + 1)
        }
        Family::Poisson { lambda } => lambda.powi(order as i32) * (lambda * (s - 1.0)).exp(),
        Family::Binomial { trials, p } => {
            let n = *trials;
            if order as u64 > n {
                return 0.0;
            }
            let base = 1.0 - p + p * s;
            falling(n, order) * p.powi(order as i32) * base.powi((n - order as u64) as i32)
        }
        Family::Shifted { base, by } => {
            // Leibniz rule on s^by * g(s)
            let r = *by as u64;
            let mut acc = 0.0;
            let mut binom = 1.0;
            for i in 0..=order {
                if i > 0 {
                    binom = binom * (order - i + 1) as f64 / i as f64;
                }
                if (i as u64) > r {
                    break;
                }
                let pow_term = falling(r, i) * s.powi((r - i as u64) as i32);
                acc += binom * pow_term * family_derivative(base, order - i, s);
            }
            acc
        }
    }
}

fn family_complement(f: &Family, c: f64) -> f64 {
    match f {
        Family::Table(pmf) => {
            // c * sum_i P(X > i) (1 - c)^i
            let mut tail = 0.0;
            let mut acc = 0.0;
            let s = 1.0 - c;
            for i in (0..pmf.len()).rev() {
                acc = acc * s + tail;
                tail += pmf[i];
            }
            c * acc
        }
        Family::Geometric { p } => {
            let q = 1.0 - p;
            q * c / (p + q * c)
        }
        Family::Poisson { lambda } => -(-lambda * c).exp_m1(),
        Family::Binomial { trials, p } => {
            let x = p * c;
            if x >= 1.0 {
                return 1.0;
            }
            -(*trials as f64 * (-x).ln_1p()).exp_m1()
        }
        Family::Shifted { base, by } => {
            let s_pow = (*by as f64 * (-c).ln_1p()).exp();
            let lead = if c >= 1.0 { 1.0 } else { -(*by as f64 * (-c).ln_1p()).exp_m1() };
            lead + s_pow * family_complement(base, c)
        }
    }
}

fn make_sampler(f: &Family) -> Sampler {
    match f {
        Family::Table(pmf) => {
            let positive: Vec<usize> = (0..pmf.len()).filter(|&k| pmf[k] > 0.0).collect();
            if positive.len() == 1 {
                return Sampler::Point(positive[0] as u64);
            }
            let mut cdf = Vec::with_capacity(pmf.len());
            let mut acc = 0.0;
            for v in pmf {
                acc += v;
                cdf.push(acc);
            }
            let last = *positive.last().unwrap();
            for c in cdf.iter_mut().skip(last) {
                *c = 1.0;
            }
            Sampler::Table { cdf }
        }
        Family::Geometric { p } if *p == 1.0 => Sampler::Point(0),
        Family::Geometric { p } => Sampler::Geometric(rand_distr::Geometric::new(*p).expect("validated p")),
        Family::Poisson { lambda } if *lambda == 0.0 => Sampler::Point(0),
        Family::Poisson { lambda } => Sampler::Poisson(rand_distr::Poisson::new(*lambda).expect("validated lambda")),
        Family::Binomial { trials, p } => {
            Sampler::Binomial(rand_distr::Binomial::new(*trials, *p).expect("validated binomial"))
        }
        Family::Shifted { base, by } => Sampler::Shifted { inner: Box::new(make_sampler(base)), by: *by as u64 },
    }
}

fn sample_with<R: Rng + ?Sized>(s: &Sampler, rng: &mut R) -> u64 {
    match s {
        Sampler::Point(k) => *k,
        Sampler::Table { cdf } => {
            let u: f64 = rng.random();
            cdf.partition_point(|&c| c <= u) as u64
        }
        Sampler::Geometric(g) => g.sample(rng),
        Sampler::Poisson(p) => p.sample(rng) as u64,
        Sampler::Binomial(b) => b.sample(rng),
        Sampler::Shifted { inner, by } => by + sample_with(inner, rng),
    }
}

fn family_sample_sum<R: Rng + ?Sized>(f: &Family, copies: u64, rng: &mut R) -> u64 {
    match f {
        Family::Table(pmf) => {
            // multinomial counts by sequential conditional binomials
            let mut remaining = copies;
            let mut rest_mass = 1.0;
            let mut total = 0u64;
            for (k, &q) in pmf.iter().enumerate() {
                if remaining == 0 {
                    break;
                }
                if q <= 0.0 {
                    continue;
                }
                let prob = (q / rest_mass).clamp(0.0, 1.0);
                let count = if prob >= 1.0 {
                    remaining
                } else {
                    rand_distr::Binomial::new(remaining, prob).expect("probability in [0,1]").sample(rng)
                };
                total += k as u64 * count;
                remaining -= count;
                rest_mass -= q;
            }
            if remaining > 0 {
                // rounding left a sliver of mass: assign to the top of the support
                total += remaining * (pmf.len() as u64 - 1);
            }
            total
        }
        Family::Geometric { p } => {
            if *p == 1.0 {
                return 0;
            }
            // negative binomial as a gamma-mixed Poisson
            let scale = (1.0 - p) / p;
            let g: f64 = Gamma::new(copies as f64, scale).expect("positive gamma").sample(rng);
            poisson_draw(g, rng)
        }
        Family::Poisson { lambda } => poisson_draw(lambda * copies as f64, rng),
        Family::Binomial { trials, p } => {
            rand_distr::Binomial::new(trials * copies, *p).expect("validated binomial").sample(rng)
        }
        Family::Shifted { base, by } => copies * *by as u64 + family_sample_sum(base, copies, rng),
    }
}

fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    rand_distr::Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::ReplicateStreams;
    use proptest::prelude::*;

    fn geo() -> OffspringDistribution {
        OffspringDistribution::geometric(0.5).unwrap()
    }

    fn tab() -> OffspringDistribution {
        OffspringDistribution::table(vec![0.25, 0.5, 0.25]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(geo().pmf(0), 0.5);
        assert!(close(geo().pmf(3), 1.0 / 16.0, 1e-16));
        assert_eq!(tab().pmf(2), 0.25);
        assert_eq!(tab().pmf(7), 0.0);
    }

    #[test]
    fn pgf_examples() {
        assert!(close(geo().pgf_eval(1.0, 2).unwrap(), 2.0, 1e-14));
        assert!(close(tab().pgf_eval(1.0, 1).unwrap(), 1.0, 1e-15));
        for d in [geo(), tab(), OffspringDistribution::poisson(1.3).unwrap(), OffspringDistribution::binomial(4, 0.3).unwrap()] {
            assert!(close(d.pgf_eval(1.0, 0).unwrap(), 1.0, 1e-15));
        }
        assert_eq!(geo().pgf_eval(0.5, 4), Err(Error::UnsupportedOrder(4)));
    }

    #[test]
    fn nu_examples() {
        assert!(close(geo().nu().unwrap(), 2.0, 1e-15));
        assert!(close(tab().nu().unwrap(), 0.5, 1e-15));
        assert!(close(OffspringDistribution::poisson(1.0).unwrap().nu().unwrap(), 1.0, 1e-15));
        assert_eq!(OffspringDistribution::point(0).nu(), Err(Error::DegenerateMean));
    }

    #[test]
    fn size_biased_examples() {
        let sb = geo().size_biased().unwrap();
        assert!(close(sb.pmf(0), 0.0, 0.0));
        assert!(close(sb.pmf(1), 0.25, 1e-12));
        assert!(close(sb.pmf(2), 0.25, 1e-12));
        assert!(close(sb.pmf(3), 3.0 / 16.0, 1e-12));

        let sb = tab().size_biased().unwrap();
        assert_eq!(sb.family(), &Family::Table(vec![0.0, 0.5, 0.5]));

        let sb = OffspringDistribution::poisson(1.0).unwrap().size_biased().unwrap();
        assert_eq!(
            sb.family(),
            &Family::Shifted { base: Box::new(Family::Poisson { lambda: 1.0 }), by: 1 }
        );
        assert_eq!(OffspringDistribution::point(0).size_biased(), Err(Error::NoSizeBiasedLaw));
    }

    #[test]
    fn pair_biased_examples() {
        let pb = geo().pair_biased().unwrap();
        assert!(close(pb.pmf(2), 1.0 / 8.0, 1e-12));
        assert!(close(pb.pmf(3), 3.0 / 16.0, 1e-12));
        let total: f64 = (0..=pb.support_max().unwrap()).map(|k| pb.pmf(k)).sum();
        assert!(close(total, 1.0, 1e-12));

        let pb = tab().pair_biased().unwrap();
        assert_eq!(pb.family(), &Family::Table(vec![0.0, 0.0, 1.0]));
        assert_eq!(OffspringDistribution::table(vec![0.5, 0.5]).unwrap().pair_biased(), Err(Error::NoPairBiasedLaw));
    }

    #[test]
    fn shift_down_examples() {
        let s = geo().size_biased().unwrap().shift_down(1).unwrap();
        for k in 0..20 {
            let expected = (k + 1) as f64 * 0.5f64.powi(k as i32 + 2);
            assert!(close(s.pmf(k), expected, 1e-12), "k={k}");
        }
        let s = tab().pair_biased().unwrap().shift_down(2).unwrap();
        assert_eq!(s.pmf(0), 1.0);
        assert_eq!(tab().shift_down(1), Err(Error::ShiftPrecondition(1)));
        assert_eq!(geo().shift_down(1), Err(Error::ShiftPrecondition(1)));

        let p = OffspringDistribution::poisson(2.0).unwrap().pair_biased().unwrap().shift_down(2).unwrap();
        assert_eq!(p.family(), &Family::Poisson { lambda: 2.0 });
    }

    #[test]
    fn biased_tables_stop_at_truncation() {
        let sb = geo().size_biased().unwrap();
        let pb = geo().pair_biased().unwrap();
        assert!(sb.support_max().unwrap() < 64);
        assert!(pb.support_max().unwrap() < 64);
        assert!((sb.pmf(3) - 3.0 / 16.0).abs() < 1e-11);
    }

    #[test]
    fn regularity_examples() {
        assert!(close(tab().regularity_ratio().unwrap(), 1.5, 1e-14));
        assert!(OffspringDistribution::point(1).regularity_ratio().is_err());
        // geometric(1/2): E[X^2 1{X>=2}] = 3 - 1/4, E[X 1{X>=2}] = 1 - 1/4, E[X | X>=1] = 2
        let expected = (3.0 - 0.25) / (0.75 * 2.0);
        let direct: f64 = (2..200).map(|k| (k * k) as f64 * geo().pmf(k)).sum();
        assert!(close(direct, 2.75, 1e-13));
        assert!(close(geo().regularity_ratio().unwrap(), expected, 1e-12));
    }

    #[test]
    fn condition_a_examples() {
        assert!(close(geo().condition_a_ratio().unwrap(), 1.5, 1e-14));
        assert!(close(OffspringDistribution::poisson(1.0).unwrap().condition_a_ratio().unwrap(), 0.5, 1e-14));
        assert_eq!(tab().condition_a_ratio().unwrap(), 0.0);
    }

    #[test]
    fn table_validation() {
        assert!(OffspringDistribution::table(vec![0.5, 0.6]).is_err());
        assert!(OffspringDistribution::table(vec![-0.1, 1.1]).is_err());
        assert!(OffspringDistribution::table(vec![]).is_err());
        assert!(OffspringDistribution::geometric(0.0).is_err());
        assert!(OffspringDistribution::poisson(-1.0).is_err());
        assert!(OffspringDistribution::binomial(2, 1.5).is_err());
    }

    #[test]
    fn complement_matches_direct() {
        let laws = [
            geo(),
            tab(),
            OffspringDistribution::poisson(1.7).unwrap(),
            OffspringDistribution::binomial(5, 0.35).unwrap(),
            OffspringDistribution::poisson(0.9).unwrap().size_biased().unwrap(),
        ];
        for d in &laws {
            for i in 0..=20 {
                let c = i as f64 / 20.0;
                assert!(close(d.complement(c), 1.0 - d.pgf(1.0 - c), 1e-14), "{} at c={c}", d.label());
            }
            // relative accuracy for tiny c: 1 - f(1 - c) ~ f'(1) c
            let c = 1e-12;
            assert!((d.complement(c) / (d.mean() * c) - 1.0).abs() < 1e-9, "{}", d.label());
        }
    }

    #[test]
    fn sample_point_mass() {
        let mut rng = ReplicateStreams::new(1).stream(0);
        let d = OffspringDistribution::point(2);
        assert!((0..100).all(|_| d.sample(&mut rng) == 2));
        assert_eq!(d.sample_sum(1000, &mut rng), 2000);
    }

    #[test]
    fn sample_moments_and_pmf() {
        let streams = ReplicateStreams::new(7);
        let mut rng = streams.stream(0);
        let draws = 1_000_000;
        let t = tab();
        let mean = (0..draws).map(|_| t.sample(&mut rng) as f64).sum::<f64>() / draws as f64;
        let sigma = 0.5f64.sqrt() / 1000.0;
        assert!((mean - 1.0).abs() < 3.0 * sigma, "mean {mean}");

        let g = geo();
        let zeros = (0..draws).filter(|_| g.sample(&mut rng) == 0).count() as f64 / draws as f64;
        assert!((zeros - 0.5).abs() < 3.0 * 0.5 / 1000.0, "p0 {zeros}");
    }

    #[test]
    fn sample_tv_small_supports() {
        let streams = ReplicateStreams::new(11);
        let mut rng = streams.stream(3);
        let laws = [tab(), OffspringDistribution::binomial(6, 0.4).unwrap(), geo().pair_biased().unwrap()];
        for d in &laws {
            let mut counts = [0u64; 21];
            let draws = 1_000_000;
            for _ in 0..draws {
                let k = d.sample(&mut rng) as usize;
                counts[k.min(20)] += 1;
            }
            let tv: f64 = 0.5
                * (0..=20)
                    .map(|k| {
                        let p = if k == 20 { 1.0 - (0..20).map(|j| d.pmf(j)).sum::<f64>() } else { d.pmf(k) };
                        (counts[k] as f64 / draws as f64 - p).abs()
                    })
                    .sum::<f64>();
            assert!(tv < 0.005, "{} tv {tv}", d.label());
        }
    }

    #[test]
    fn sample_sum_matches_mean_and_variance() {
        let streams = ReplicateStreams::new(5);
        let mut rng = streams.stream(0);
        let laws = [geo(), tab(), OffspringDistribution::poisson(1.2).unwrap(), OffspringDistribution::binomial(3, 0.4).unwrap()];
        for d in &laws {
            let copies = 200u64;
            let reps = 20_000;
            let xs: Vec<f64> = (0..reps).map(|_| d.sample_sum(copies, &mut rng) as f64).collect();
            let m = xs.iter().sum::<f64>() / reps as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
            let [m1, m2, _] = d.factorial_moments();
            let var1 = m2 + m1 - m1 * m1;
            let exp_m = copies as f64 * m1;
            let exp_v = copies as f64 * var1;
            assert!((m - exp_m).abs() < 4.0 * (exp_v / reps as f64).sqrt(), "{} mean {m} vs {exp_m}", d.label());
            assert!((v / exp_v - 1.0).abs() < 0.05, "{} var {v} vs {exp_v}", d.label());
        }
    }

    fn arb_table() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 2..12).prop_filter_map("positive mass", |w| {
            let total: f64 = w.iter().sum();
            (total > 1e-3).then(|| w.iter().map(|x| x / total).collect())
        })
    }

    proptest! {
        #[test]
        fn moments_match_direct_summation(w in arb_table()) {
            let d = OffspringDistribution::from_weights(w);
            let Family::Table(pmf) = d.family().clone() else { unreachable!() };
            for order in 1..=3usize {
                let direct: f64 = pmf.iter().enumerate().map(|(k, q)| falling(k as u64, order) * q).sum();
                let got = d.pgf_eval(1.0, order as u32).unwrap();
                prop_assert!((got - direct).abs() < 1e-12 * direct.max(1.0));
            }
        }

        #[test]
        fn size_biased_mean_identity(w in arb_table()) {
            let d = OffspringDistribution::from_weights(w);
            prop_assume!(d.mean() > 1e-6);
            let sb = d.size_biased().unwrap();
            let [m1, m2, _] = d.factorial_moments();
            prop_assert!((sb.mean() - (1.0 + m2 / m1)).abs() < 1e-10 * (1.0 + m2 / m1));
        }

        #[test]
        fn pair_biased_normalized(w in arb_table()) {
            let d = OffspringDistribution::from_weights(w);
            prop_assume!(d.factorial_moments()[1] > 1e-6);
            let pb = d.pair_biased().unwrap();
            let total: f64 = (0..=pb.support_max().unwrap()).map(|k| pb.pmf(k)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert_eq!(pb.pmf(0) + pb.pmf(1), 0.0);
        }

        #[test]
        fn shifted_size_biased_pgf_is_normalized_derivative(w in arb_table()) {
            let d = OffspringDistribution::from_weights(w);
            prop_assume!(d.mean() > 1e-6);
            let g = d.size_biased().unwrap().shift_down(1).unwrap();
            for i in 0..=50 {
                let s = i as f64 / 50.0;
                prop_assert!((g.pgf(s) - d.d1(s) / d.mean()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parametric_transforms_match_pgf_derivative() {
        for d in [geo(), OffspringDistribution::geometric(0.3).unwrap(), OffspringDistribution::poisson(2.5).unwrap(), OffspringDistribution::binomial(7, 0.6).unwrap()] {
            let g = d.size_biased().unwrap().shift_down(1).unwrap();
            let h = d.pair_biased().unwrap().shift_down(2).unwrap();
            let [m1, m2, _] = d.factorial_moments();
            for i in 0..=50 {
                let s = i as f64 / 50.0;
                assert!((g.pgf(s) - d.d1(s) / m1).abs() < 1e-11, "{} s={s}", d.label());
                assert!((h.pgf(s) - d.d2(s) / m2).abs() < 1e-11, "{} s={s}", d.label());
            }
        }
    }
}
