//! Brute-force laws of small-horizon populations by dynamic programming on the
//! population size. Independent of the pgf engine; used as ground truth for it and
//! for the samplers.

use std::io::Write;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;
use crate::summation::{sum, NeumaierSum};

/// Tail mass dropped when reading an infinite-support offspring law.
pub const OFFSPRING_TRUNCATION: f64 = 1e-14;
/// Trailing mass folded into the tail per generation.
pub const TRIM_MASS: f64 = 1e-17;
pub const DEFAULT_CAP: usize = 4096;
pub const DEFAULT_TAIL_BUDGET: f64 = 1e-10;
const MAX_CAP: usize = 1 << 22;

/// Law on `{0, ..., cap}` with the remaining probability collected in `tail`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPmf {
    probs: Vec<f64>,
    tail: f64,
    cap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    SizeBiased,
    PairBiased,
}

/// Laplace transform of an [`ExactPmf`] with a bound on the unseen tail contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceEstimate {
    pub value: f64,
    pub error_bar: f64,
    pub within_budget: bool,
}

impl ExactPmf {
    pub fn point(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Self { probs, tail: 0.0, cap: k }
    }

    /// Normalized histogram of `counts` (index = value); `overflow` counts samples above the range.
    pub fn from_counts(counts: &[u64], overflow: u64) -> Self {
        let total = counts.iter().sum::<u64>() + overflow;
        let t = total.max(1) as f64;
        Self {
            probs: counts.iter().map(|&c| c as f64 / t).collect(),
            tail: overflow as f64 / t,
            cap: counts.len().saturating_sub(1),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn within_budget(&self, budget: f64) -> bool {
        self.tail <= budget
    }

    pub fn mean(&self) -> f64 {
        sum(self.probs.iter().enumerate().map(|(k, p)| k as f64 * p))
    }

    /// `E[Z (Z - 1)]` over the captured entries.
    pub fn second_factorial_moment(&self) -> f64 {
        sum(self.probs.iter().enumerate().map(|(k, p)| (k * k.saturating_sub(1)) as f64 * p))
    }

    /// Size- or pair-biased law: weights `k p_k` or `k (k - 1) p_k`, normalized over the
    /// captured entries; the tail mass is carried over unchanged.
    pub fn transform(&self, kind: Weighting) -> Result<ExactPmf> {
        let weight = |k: usize| match kind {
            Weighting::SizeBiased => k as f64,
            Weighting::PairBiased => (k * k.saturating_sub(1)) as f64,
        };
        let weighted: Vec<f64> = self.probs.iter().enumerate().map(|(k, p)| weight(k) * p).collect();
        let total = sum(weighted.iter().copied());
        if total <= 0.0 {
            return Err(Error::ZeroWeightedMass(match kind {
                Weighting::SizeBiased => "size-biased",
                Weighting::PairBiased => "pair-biased",
            }));
        }
        let scale = (1.0 - self.tail) / total;
        Ok(ExactPmf { probs: weighted.into_iter().map(|w| w * scale).collect(), tail: self.tail, cap: self.cap })
    }

    /// `sum_k e^{-lambda k} p_k`, with the unseen tail bounded by `tail e^{-lambda (cap + 1)}`.
    pub fn laplace(&self, lambda: f64, budget: f64) -> LaplaceEstimate {
        let q = (-lambda).exp();
        let mut acc = NeumaierSum::new();
        let mut w = 1.0;
        for &p in &self.probs {
            acc.add(w * p);
            w *= q;
        }
        LaplaceEstimate {
            value: acc.value(),
            error_bar: self.tail * (-lambda * (self.cap as f64 + 1.0)).exp(),
            within_budget: self.within_budget(budget),
        }
    }

    /// `(1/2) sum_k |p_k - q_k| + (1/2) |tail_p - tail_q|`.
    pub fn tv_distance(&self, other: &ExactPmf) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        let body = sum((0..len).map(|k| (self.prob(k) - other.prob(k)).abs()));
        0.5 * body + 0.5 * (self.tail - other.tail).abs()
    }

    /// CSV rows `k,probability` followed by `tail,<mass>`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,probability")?;
        for (k, p) in self.probs.iter().enumerate() {
            writeln!(out, "{k},{p}")?;
        }
        writeln!(out, "tail,{}", self.tail)?;
        Ok(())
    }
}

/// Convolution `a * b` truncated to `len` entries; exact on the retained entries since
/// both supports start at zero.
fn convolve_truncated(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let out_len = (a.len() + b.len() - 1).min(len);
    let mut out = vec![0.0; out_len];
    for (i, &x) in a.iter().enumerate().take(out_len) {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

/// Drops trailing entries whose combined mass is at most `threshold`.
fn trim(probs: &mut Vec<f64>, threshold: f64) {
    let mut dropped = 0.0;
    while probs.len() > 1 {
        let last = *probs.last().expect("nonempty");
        if dropped + last > threshold {
            break;
        }
        dropped += last;
        probs.pop();
    }
}

fn offspring_pmf(d: &OffspringDistribution) -> Vec<f64> {
    d.truncated_pmf(OFFSPRING_TRUNCATION)
}

/// One generation: `sum_j p_j q^{*j}` by Horner's scheme in the convolution algebra.
fn step(prev: &[f64], q: &[f64], cap: usize) -> Vec<f64> {
    let len = cap + 1;
    // every intermediate trim loses at most this much of the final mass
    let threshold = TRIM_MASS / prev.len() as f64;
    let mut acc = vec![prev[prev.len() - 1]];
    for &p in prev[..prev.len() - 1].iter().rev() {
        acc = convolve_truncated(&acc, q, len);
        acc[0] += p;
        trim(&mut acc, threshold);
    }
    acc
}

/// Law of `Z_n` started from one individual, truncated at `cap`.
///
/// Mass of populations above `cap` is moved to the tail; since such populations can
/// still shrink later, retained entries are lower bounds whose deficit is the tail.
pub fn exact_pmf(env: &Environment, n: usize, cap: usize) -> ExactPmf {
    evolve(env, vec![0.0, 1.0], 1..=n, cap)
}

fn evolve(env: &Environment, mut probs: Vec<f64>, generations: std::ops::RangeInclusive<usize>, cap: usize) -> ExactPmf {
    let cap = cap.max(1);
    probs.truncate(cap + 1);
    for gen in generations {
        let q = offspring_pmf(env.dist_at(gen));
        probs = step(&probs, &q, cap);
    }
    let tail = (1.0 - sum(probs.iter().copied())).max(0.0);
    ExactPmf { probs, tail, cap }
}

fn with_cap_doubling(budget: f64, build: impl Fn(usize) -> ExactPmf) -> ExactPmf {
    let mut cap = DEFAULT_CAP;
    loop {
        let pmf = build(cap);
        if pmf.within_budget(budget) || cap >= MAX_CAP {
            return pmf;
        }
        cap *= 2;
    }
}

/// [`exact_pmf`] from [`DEFAULT_CAP`], doubling the cap until the tail is within `budget`.
pub fn exact_pmf_auto(env: &Environment, n: usize, budget: f64) -> ExactPmf {
    with_cap_doubling(budget, |cap| exact_pmf(env, n, cap))
}

pub fn transform_pmf(p: &ExactPmf, kind: Weighting) -> Result<ExactPmf> {
    p.transform(kind)
}

pub fn laplace_from_pmf(p: &ExactPmf, lambda: f64) -> LaplaceEstimate {
    p.laplace(lambda, DEFAULT_TAIL_BUDGET)
}

pub fn tv_distance(p: &ExactPmf, q: &ExactPmf) -> f64 {
    p.tv_distance(q)
}

/// Exact law of the subtree population `Z^{[q' - r] (+) Q_{m+1}}_{n-m}` hanging off a
/// spine vertex of generation `m`, where `q'` is the size-biased (`r = 1`) or pair-biased
/// (`r = 2`) version of `q_{m+1}`.
pub fn hanging_pmf(env: &Environment, n: usize, m: usize, kind: Weighting, budget: f64) -> Result<ExactPmf> {
    if m >= n {
        return Err(Error::OutOfRange(format!("need m < n, got m = {m}, n = {n}")));
    }
    let d = env.dist_at(m + 1);
    let first = match kind {
        Weighting::SizeBiased => d.size_biased()?.shift_down(1)?,
        Weighting::PairBiased => d.pair_biased()?.shift_down(2)?,
    };
    let start = offspring_pmf(&first);
    Ok(with_cap_doubling(budget, |cap| evolve(env, start.clone(), m + 2..=n, cap)))
}
