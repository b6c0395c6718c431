//! Plain, one-spine and two-spine Galton-Watson trees in a varying environment.
//!
//! Trees live in an arena in breadth-first order, so each generation is a
//! contiguous index range and the children of a node are contiguous in the next
//! generation. For large horizons the `*_population` samplers skip the arena and
//! track generation sizes only.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use rand::Rng;

use crate::environment::{Environment, Law};
use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;

pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;
const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpineMark {
    #[default]
    None,
    Spine1,
    Spine2,
    /// Both spines pass through this node (generations up to the branching time).
    Both,
}

impl SpineMark {
    fn code(self) -> &'static str {
        match self {
            SpineMark::None => "-",
            SpineMark::Spine1 => "1",
            SpineMark::Spine2 => "2",
            SpineMark::Both => "12",
        }
    }

    pub fn is_spine(self) -> bool {
        self != SpineMark::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Node {
    pub parent: u32,
    pub generation: u32,
    pub child_count: u32,
    /// Arena index of the first child, meaningful when `child_count > 0`.
    pub first_child: u32,
    pub mark: SpineMark,
}

impl Node {
    pub fn parent(&self) -> Option<usize> {
        (self.parent != NO_PARENT).then_some(self.parent as usize)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LabeledTree {
    nodes: Vec<Node>,
    /// `levels[k]..levels[k + 1]` are the nodes of generation `k`.
    levels: Vec<usize>,
}

impl LabeledTree {
    fn reset(&mut self) {
        self.nodes.clear();
        self.levels.clear();
        self.nodes.push(Node { parent: NO_PARENT, generation: 0, child_count: 0, first_child: 0, mark: SpineMark::None });
        self.levels.extend([0, 1]);
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of generations built after the root.
    pub fn height(&self) -> usize {
        self.levels.len() - 2
    }

    pub fn generation(&self, k: usize) -> Range<usize> {
        if k + 1 < self.levels.len() {
            self.levels[k]..self.levels[k + 1]
        } else {
            0..0
        }
    }

    /// `X_k(t)`: number of nodes at depth `k` (zero beyond the height).
    pub fn population(&self, k: usize) -> usize {
        self.generation(k).len()
    }

    pub fn children(&self, i: usize) -> Range<usize> {
        let n = &self.nodes[i];
        let start = n.first_child as usize;
        start..start + n.child_count as usize
    }

    /// Nodes of generation `k` carrying `mark` (or `Both`).
    pub fn spine_node(&self, k: usize, mark: SpineMark) -> Option<usize> {
        self.generation(k).find(|&i| {
            let m = self.nodes[i].mark;
            m == mark || (m == SpineMark::Both && mark != SpineMark::None)
        })
    }

    /// Depth of the deepest common ancestor of `u` and `v`.
    pub fn mrca_generation(&self, mut u: usize, mut v: usize) -> usize {
        while self.nodes[u].generation > self.nodes[v].generation {
            u = self.nodes[u].parent as usize;
        }
        while self.nodes[v].generation > self.nodes[u].generation {
            v = self.nodes[v].parent as usize;
        }
        while u != v {
            u = self.nodes[u].parent as usize;
            v = self.nodes[v].parent as usize;
        }
        self.nodes[u].generation as usize
    }

    /// Descendants of every node in the last generation.
    fn leaf_counts(&self) -> Vec<usize> {
        let height = self.height();
        let mut counts = vec![0usize; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            counts[i] = if self.nodes[i].generation as usize == height {
                1
            } else {
                self.children(i).map(|c| counts[c]).sum()
            };
        }
        counts
    }

    /// Sum over spine nodes of the last-generation populations of their unmarked
    /// child subtrees, plus the spine leaves themselves.
    pub fn hanging_subtree_total(&self) -> usize {
        let counts = self.leaf_counts();
        let height = self.height();
        let mut total = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.mark.is_spine() {
                continue;
            }
            if node.generation as usize == height {
                total += 1;
                continue;
            }
            total += self.children(i).filter(|&c| !self.nodes[c].mark.is_spine()).map(|c| counts[c]).sum::<usize>();
        }
        total
    }

    /// Structural invariants of the arena; returns a description of the first violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        for k in 0..=self.height() {
            for i in self.generation(k) {
                let node = &self.nodes[i];
                if node.generation as usize != k {
                    return Err(format!("node {i} stored in generation {k} has depth {}", node.generation));
                }
                for c in self.children(i) {
                    if self.nodes.get(c).map(|n| n.parent as usize) != Some(i) {
                        return Err(format!("child {c} of node {i} does not point back"));
                    }
                }
            }
        }
        let next_level_children: usize = self.generation(self.height()).map(|i| self.nodes[i].child_count as usize).sum();
        if next_level_children != 0 {
            return Err("last generation has children".into());
        }
        Ok(())
    }

    /// One line per node: `id parent generation child_count mark`.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            match n.parent() {
                Some(p) => writeln!(out, "{i} {p} {} {} {}", n.generation, n.child_count, n.mark.code())?,
                None => writeln!(out, "{i} - {} {} {}", n.generation, n.child_count, n.mark.code())?,
            }
        }
        Ok(())
    }
}

impl fmt::Display for LabeledTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = Vec::new();
        self.dump(&mut buf).map_err(|_| fmt::Error)?;
        f.write_str(&String::from_utf8_lossy(&buf))
    }
}

/// Per-generation laws needed by the samplers for a fixed horizon `n`: `q_k`, the
/// size-biased `q'_k`, the pair-biased `q''_k`, and the law of the branching time.
#[derive(Debug, Clone)]
pub struct SpinePlan {
    n: usize,
    plain: Vec<Law>,
    size_biased: Vec<Arc<OffspringDistribution>>,
    pair_biased: Vec<Option<Arc<OffspringDistribution>>>,
    /// Cumulative `P(K_n <= r)`; `None` when `S_n = 0`.
    branch_cdf: Option<Vec<f64>>,
    node_budget: u64,
}

impl SpinePlan {
    pub fn new(env: &Environment, n: usize) -> Result<Self> {
        let plain: Vec<Law> = (1..=n).map(|k| env.dist_at(k).clone()).collect();
        let mut size_biased = Vec::with_capacity(n);
        let mut pair_biased = Vec::with_capacity(n);
        // one transform per distinct law
        let mut seen: Vec<(Law, Arc<OffspringDistribution>, Option<Arc<OffspringDistribution>>)> = Vec::new();
        for law in &plain {
            let idx = match seen.iter().position(|(l, _, _)| Arc::ptr_eq(l, law)) {
                Some(i) => i,
                None => {
                    let dot = Arc::new(law.size_biased()?);
                    let ddot = law.pair_biased().ok().map(Arc::new);
                    seen.push((law.clone(), dot, ddot));
                    seen.len() - 1
                }
            };
            size_biased.push(seen[idx].1.clone());
            pair_biased.push(seen[idx].2.clone());
        }
        let branch_cdf = if n >= 1 && env.cum_nu_over_mu(n) > 0.0 {
            let pmf = crate::pgf::kn_pmf_all(env, n)?;
            let mut cdf = Vec::with_capacity(n);
            let mut acc = 0.0;
            for &p in &pmf {
                acc += p;
                cdf.push(acc);
            }
            // the last index with positive weight absorbs rounding at the top
            let last = pmf.iter().rposition(|&p| p > 0.0).expect("S_n > 0");
            cdf[last..].iter_mut().for_each(|c| *c = f64::INFINITY);
            Some(cdf)
        } else {
            None
        };
        Ok(Self { n, plain, size_biased, pair_biased, branch_cdf, node_budget: DEFAULT_NODE_BUDGET })
    }

    pub fn with_node_budget(mut self, budget: u64) -> Self {
        self.node_budget = budget;
        self
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn node_budget(&self) -> u64 {
        self.node_budget
    }

    /// Draws `K_n` from `P(K_n = r) = (nu_{r+1} / mu_r) / S_n`.
    pub fn sample_branch_time<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let cdf = self.branch_cdf.as_ref().ok_or(Error::NoPairBiasedLaw)?;
        let u: f64 = rng.random();
        Ok(cdf.partition_point(|&c| c <= u))
    }

    fn pair_law(&self, k: usize) -> Result<&OffspringDistribution> {
        self.pair_biased[k].as_deref().ok_or(Error::NoPairBiasedLaw)
    }

    fn over_budget(&self, nodes: u64) -> Result<()> {
        if nodes > self.node_budget {
            Err(Error::NodeBudget { budget: self.node_budget })
        } else {
            Ok(())
        }
    }
}

/// Reproduction rule of a marked node in generation `k`.
#[derive(Clone, Copy)]
enum Rule {
    /// Size-biased offspring, one uniform child inherits the mark.
    Continue,
    /// Pair-biased offspring, two distinct uniform children start the two spines.
    Branch,
}

fn uniform_index<R: Rng + ?Sized>(rng: &mut R, len: u64) -> u64 {
    rng.random_range(0..len)
}

/// Two distinct uniform indices in `0..len` (`len >= 2`), by rejection.
fn distinct_pair<R: Rng + ?Sized>(rng: &mut R, len: u64) -> (u64, u64) {
    let a = uniform_index(rng, len);
    loop {
        let b = uniform_index(rng, len);
        if b != a {
            return (a, b);
        }
    }
}

fn grow<R: Rng + ?Sized>(
    plan: &SpinePlan,
    tree: &mut LabeledTree,
    branch: Option<usize>,
    rng: &mut R,
) -> Result<()> {
    for k in 0..plan.n {
        let level = tree.generation(k);
        for i in level {
            let mark = tree.nodes[i].mark;
            let rule = match (mark, branch) {
                (SpineMark::None, _) => None,
                (SpineMark::Both, Some(b)) if b == k => Some(Rule::Branch),
                _ => Some(Rule::Continue),
            };
            let count = match rule {
                None => plan.plain[k].sample(rng),
                Some(Rule::Continue) => plan.size_biased[k].sample(rng),
                Some(Rule::Branch) => plan.pair_law(k)?.sample(rng),
            };
            let first = tree.nodes.len();
            plan.over_budget((first as u64).saturating_add(count))?;
            tree.nodes[i].child_count = count as u32;
            tree.nodes[i].first_child = first as u32;
            tree.nodes.extend((0..count).map(|_| Node {
                parent: i as u32,
                generation: (k + 1) as u32,
                child_count: 0,
                first_child: 0,
                mark: SpineMark::None,
            }));
            match rule {
                None => {}
                Some(Rule::Continue) => {
                    let c = uniform_index(rng, count);
                    tree.nodes[first + c as usize].mark = mark;
                }
                Some(Rule::Branch) => {
                    let (a, b) = distinct_pair(rng, count);
                    tree.nodes[first + a as usize].mark = SpineMark::Spine1;
                    tree.nodes[first + b as usize].mark = SpineMark::Spine2;
                }
            }
        }
        tree.levels.push(tree.nodes.len());
    }
    Ok(())
}

/// Plain tree of height at most `n`; `X_n` has the law of `Z_n`.
pub fn sample_gw_tree<R: Rng + ?Sized>(plan: &SpinePlan, tree: &mut LabeledTree, rng: &mut R) -> Result<()> {
    tree.reset();
    grow(plan, tree, None, rng)
}

/// One-spine tree; `X_n` has the size-biased law of `Z_n`.
pub fn sample_one_spine<R: Rng + ?Sized>(plan: &SpinePlan, tree: &mut LabeledTree, rng: &mut R) -> Result<()> {
    tree.reset();
    tree.nodes[0].mark = SpineMark::Spine1;
    grow(plan, tree, None, rng)
}

/// Two-spine tree; returns the branching time `K`. `X_n` has the pair-biased law of `Z_n`.
pub fn sample_two_spine<R: Rng + ?Sized>(plan: &SpinePlan, tree: &mut LabeledTree, rng: &mut R) -> Result<usize> {
    if plan.n == 0 {
        return Err(Error::OutOfRange("two-spine tree needs n >= 1".into()));
    }
    let k = plan.sample_branch_time(rng)?;
    tree.reset();
    tree.nodes[0].mark = SpineMark::Both;
    grow(plan, tree, Some(k), rng)?;
    Ok(k)
}

/// Generation-`n` population of a plain tree without building it.
pub fn sample_gw_population<R: Rng + ?Sized>(plan: &SpinePlan, rng: &mut R) -> Result<u64> {
    let mut z = 1u64;
    let mut total = 1u64;
    for law in &plan.plain {
        if z == 0 {
            break;
        }
        z = law.sample_sum(z, rng);
        total = total.saturating_add(z);
        plan.over_budget(total)?;
    }
    Ok(z)
}

/// Generation-`n` population of a one-spine tree without building it.
pub fn sample_one_spine_population<R: Rng + ?Sized>(plan: &SpinePlan, rng: &mut R) -> Result<u64> {
    spined_population(plan, None, rng)
}

/// Generation-`n` population of a two-spine tree and its branching time.
pub fn sample_two_spine_population<R: Rng + ?Sized>(plan: &SpinePlan, rng: &mut R) -> Result<(u64, usize)> {
    if plan.n == 0 {
        return Err(Error::OutOfRange("two-spine tree needs n >= 1".into()));
    }
    let k = plan.sample_branch_time(rng)?;
    Ok((spined_population(plan, Some(k), rng)?, k))
}

fn spined_population<R: Rng + ?Sized>(plan: &SpinePlan, branch: Option<usize>, rng: &mut R) -> Result<u64> {
    let mut z = 1u64;
    let mut spines = 1u64;
    let mut total = 1u64;
    for k in 0..plan.n {
        let unmarked = z - spines;
        let mut next = plan.plain[k].sample_sum(unmarked, rng);
        if branch == Some(k) {
            next += plan.pair_law(k)?.sample(rng);
            spines = 2;
        } else {
            next += plan.size_biased[k].sample_sum(spines, rng);
        }
        z = next;
        total = total.saturating_add(z);
        plan.over_budget(total)?;
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::ReplicateStreams;

    fn geo() -> OffspringDistribution {
        OffspringDistribution::geometric(0.5).unwrap()
    }
    fn tab() -> OffspringDistribution {
        OffspringDistribution::table(vec![0.25, 0.5, 0.25]).unwrap()
    }
    fn e1() -> Environment {
        Environment::constant(geo()).unwrap()
    }
    fn e2() -> Environment {
        Environment::periodic(vec![geo(), tab()]).unwrap()
    }

    #[test]
    fn height_zero_is_root() {
        let plan = SpinePlan::new(&e1(), 0).unwrap();
        let mut tree = LabeledTree::default();
        sample_gw_tree(&plan, &mut tree, &mut ReplicateStreams::new(1).stream(0)).unwrap();
        assert_eq!(tree.len(), 1);
        assert_eq!(tree.population(0), 1);
        assert_eq!(tree.population(3), 0);
    }

    #[test]
    fn two_spine_structure() {
        let streams = ReplicateStreams::new(7);
        let mut tree = LabeledTree::default();
        for env in [e1(), e2()] {
            for n in [1usize, 2, 5, 12] {
                let plan = SpinePlan::new(&env, n).unwrap();
                for r in 0..500 {
                    let k = sample_two_spine(&plan, &mut tree, &mut streams.stream(r)).unwrap();
                    tree.check().unwrap();
                    assert_eq!(tree.height(), n);
                    let s1 = tree.spine_node(n, SpineMark::Spine1).unwrap();
                    let s2 = tree.spine_node(n, SpineMark::Spine2).unwrap();
                    assert_ne!(s1, s2);
                    assert_eq!(tree.mrca_generation(s1, s2), k);
                    assert!(tree.population(n) >= 2);
                    assert_eq!(tree.population(0), 1);
                    for g in 0..=n {
                        let marks: Vec<SpineMark> =
                            tree.generation(g).map(|i| tree.node(i).mark).filter(|m| m.is_spine()).collect();
                        if g <= k {
                            assert_eq!(marks, vec![SpineMark::Both]);
                        } else {
                            assert_eq!(marks.len(), 2);
                        }
                    }
                    let branch = tree.spine_node(k, SpineMark::Both).unwrap();
                    assert!(tree.node(branch).child_count >= 2);
                    assert_eq!(tree.hanging_subtree_total(), tree.population(n));
                }
            }
        }
    }

    #[test]
    fn one_spine_structure() {
        let streams = ReplicateStreams::new(8);
        let mut tree = LabeledTree::default();
        let plan = SpinePlan::new(&e2(), 9).unwrap();
        for r in 0..500 {
            sample_one_spine(&plan, &mut tree, &mut streams.stream(r)).unwrap();
            tree.check().unwrap();
            for g in 0..=9 {
                assert!(tree.population(g) >= 1);
                assert!(tree.spine_node(g, SpineMark::Spine1).is_some());
            }
            assert_eq!(tree.hanging_subtree_total(), tree.population(9));
        }
    }

    #[test]
    fn mrca_basics() {
        let streams = ReplicateStreams::new(9);
        let mut tree = LabeledTree::default();
        let plan = SpinePlan::new(&e1(), 6).unwrap();
        sample_one_spine(&plan, &mut tree, &mut streams.stream(0)).unwrap();
        let leaf = tree.spine_node(6, SpineMark::Spine1).unwrap();
        assert_eq!(tree.mrca_generation(0, leaf), 0);
        assert_eq!(tree.mrca_generation(leaf, leaf), 6);
    }

    #[test]
    fn dump_format() {
        let plan = SpinePlan::new(&Environment::constant(OffspringDistribution::point(2)).unwrap(), 1).unwrap();
        let mut tree = LabeledTree::default();
        let k = sample_two_spine(&plan, &mut tree, &mut ReplicateStreams::new(1).stream(0)).unwrap();
        assert_eq!(k, 0);
        let text = tree.to_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "0 - 0 2 12");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1 0 1 0 "));
    }

    #[test]
    fn node_budget_aborts() {
        let env = Environment::constant(OffspringDistribution::point(3)).unwrap();
        let plan = SpinePlan::new(&env, 12).unwrap().with_node_budget(1000);
        let mut tree = LabeledTree::default();
        let mut rng = ReplicateStreams::new(1).stream(0);
        assert_eq!(sample_gw_tree(&plan, &mut tree, &mut rng), Err(Error::NodeBudget { budget: 1000 }));
        assert_eq!(sample_gw_population(&plan, &mut rng), Err(Error::NodeBudget { budget: 1000 }));
    }

    #[test]
    fn deterministic_per_index() {
        let streams = ReplicateStreams::new(11);
        let plan = SpinePlan::new(&e2(), 8).unwrap();
        let (mut a, mut b) = (LabeledTree::default(), LabeledTree::default());
        sample_two_spine(&plan, &mut a, &mut streams.stream(5)).unwrap();
        sample_gw_tree(&plan, &mut b, &mut streams.stream(4)).unwrap();
        sample_two_spine(&plan, &mut b, &mut streams.stream(5)).unwrap();
        assert_eq!(a.nodes(), b.nodes());
    }

    #[test]
    fn plain_tree_matches_exact_law() {
        // P(X_2 = 0) = 25/64 for the table law
        let env = Environment::constant(tab()).unwrap();
        let plan = SpinePlan::new(&env, 2).unwrap();
        let streams = ReplicateStreams::new(3);
        let mut tree = LabeledTree::default();
        let reps = 200_000u64;
        let mut zeros = 0u64;
        let mut total = 0u64;
        for r in 0..reps {
            sample_gw_tree(&plan, &mut tree, &mut streams.stream(r)).unwrap();
            let x = tree.population(2) as u64;
            zeros += (x == 0) as u64;
            total += x;
        }
        let p = 25.0 / 64.0;
        let sigma = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((zeros as f64 / reps as f64 - p).abs() < 3.0 * sigma);
        // mean 1, variance sum_k mu^2 nu ... = 1 for two generations of variance 1/2
        let sigma = (1.0 / reps as f64).sqrt();
        assert!((total as f64 / reps as f64 - 1.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn population_mode_matches_tree_mode_in_law() {
        use crate::oracle::ExactPmf;
        let env = e2();
        let n = 4;
        let plan = SpinePlan::new(&env, n).unwrap();
        let streams = ReplicateStreams::new(5);
        let reps = 200_000u64;
        let cap = 64;
        let mut tree = LabeledTree::default();
        let (mut a, mut b) = (vec![0u64; cap + 1], vec![0u64; cap + 1]);
        let (mut oa, mut ob) = (0, 0);
        let bump = |h: &mut Vec<u64>, o: &mut u64, x: u64| match h.get_mut(x as usize) {
            Some(c) => *c += 1,
            None => *o += 1,
        };
        for r in 0..reps {
            sample_two_spine(&plan, &mut tree, &mut streams.stream(r)).unwrap();
            bump(&mut a, &mut oa, tree.population(n) as u64);
            let (x, _) = sample_two_spine_population(&plan, &mut streams.substreams(1).stream(r)).unwrap();
            bump(&mut b, &mut ob, x);
        }
        let tv = ExactPmf::from_counts(&a, oa).tv_distance(&ExactPmf::from_counts(&b, ob));
        assert!(tv < 0.01, "tv = {tv}");
    }
}
