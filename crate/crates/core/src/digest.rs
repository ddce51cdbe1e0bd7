//! The q-digest itself: construction, sum and merge, the three compression
//! strategies, and the plain (unauthenticated) queries.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::node::{check_sigma, NodeId};
use crate::quantile::Quantile;
use crate::Count;

/// Multiset of domain values, as `value -> multiplicity`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencySet {
    entries: BTreeMap<u64, Count>,
}

impl FrequencySet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `multiplicity` copies of `value`. Zero multiplicities are ignored.
    pub fn add(&mut self, value: u64, multiplicity: Count) -> Result<()> {
        if multiplicity == 0 {
            return Ok(());
        }
        let slot = self.entries.entry(value).or_insert(0);
        *slot = slot.checked_add(multiplicity).ok_or(Error::Overflow)?;
        Ok(())
    }

    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, Count)>,
    {
        let mut set = Self::new();
        for (v, m) in pairs {
            set.add(v, m)?;
        }
        Ok(set)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, Count)> + '_ {
        self.entries.iter().map(|(&v, &m)| (v, m))
    }

    pub fn total(&self) -> Count {
        self.entries.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Largest value present, if any.
    pub fn max_value(&self) -> Option<u64> {
        self.entries.keys().next_back().copied()
    }
}

/// A q-digest over the partition tree with `sigma` leaves.
///
/// Counts are stored sparsely; a node is a bucket iff it has a positive count.
/// `leaf_width > 1` marks a coarse-grained digest whose leaves each stand for
/// `leaf_width` consecutive values of the original domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QDigest {
    sigma: u64,
    k: u64,
    leaf_width: u64,
    n: Count,
    counts: BTreeMap<NodeId, Count>,
}

impl QDigest {
    pub fn empty(sigma: u64, k: u64) -> Result<Self> {
        Self::empty_with_width(sigma, k, 1)
    }

    pub fn empty_with_width(sigma: u64, k: u64, leaf_width: u64) -> Result<Self> {
        check_sigma(sigma)?;
        if k == 0 {
            return Err(Error::InvalidParameter("k must be positive".into()));
        }
        if leaf_width == 0 || !leaf_width.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "leaf width must be a power of two, got {leaf_width}"
            )));
        }
        sigma
            .checked_mul(leaf_width)
            .ok_or_else(|| Error::InvalidParameter("sigma * leaf width overflows".into()))?;
        Ok(QDigest {
            sigma,
            k,
            leaf_width,
            n: 0,
            counts: BTreeMap::new(),
        })
    }

    /// Builds a digest from explicit `(index, count)` pairs without any
    /// compression. Zero counts are dropped; repeated indices accumulate.
    pub fn from_buckets<I>(sigma: u64, k: u64, leaf_width: u64, buckets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, Count)>,
    {
        let mut q = Self::empty_with_width(sigma, k, leaf_width)?;
        for (idx, c) in buckets {
            let node = NodeId::new(idx, sigma)?;
            q.add_to(node, c)?;
        }
        Ok(q)
    }

    fn add_to(&mut self, node: NodeId, c: Count) -> Result<()> {
        if c == 0 {
            return Ok(());
        }
        self.n = self.n.checked_add(c).ok_or(Error::Overflow)?;
        let slot = self.counts.entry(node).or_insert(0);
        *slot += c;
        Ok(())
    }

    /// Leaf-only digest holding `freqs` exactly, before any compression.
    pub fn from_frequencies_uncompressed(freqs: &FrequencySet, k: u64, sigma: u64) -> Result<Self> {
        let mut q = Self::empty(sigma, k)?;
        for (v, m) in freqs.iter() {
            q.add_to(NodeId::leaf_for_value(v, sigma)?, m)?;
        }
        Ok(q)
    }

    /// Builds a compressed digest from a frequency set. The result satisfies
    /// both count properties and has no bucket with a bucket child.
    pub fn build(freqs: &FrequencySet, k: u64, sigma: u64) -> Result<Self> {
        Ok(Self::from_frequencies_uncompressed(freqs, k, sigma)?.iterative_compress())
    }

    /// Coarse-grained build: the bottom `levels` levels of the tree are cut
    /// off, so leaves cover `2^levels` consecutive values each.
    pub fn build_coarse(freqs: &FrequencySet, k: u64, sigma: u64, levels: u32) -> Result<Self> {
        check_sigma(sigma)?;
        let width = 1u64
            .checked_shl(levels)
            .filter(|w| *w <= sigma)
            .ok_or_else(|| {
                Error::InvalidParameter(format!("cannot cut {levels} levels from sigma={sigma}"))
            })?;
        let coarse_sigma = sigma / width;
        let mut q = Self::empty_with_width(coarse_sigma, k, width)?;
        for (v, m) in freqs.iter() {
            if v == 0 || v > sigma {
                return Err(Error::Domain(format!("value {v} outside [1, {sigma}]")));
            }
            q.add_to(NodeId::from_raw(coarse_sigma + v.div_ceil(width) - 1), m)?;
        }
        Ok(q.iterative_compress())
    }

    pub fn sigma(&self) -> u64 {
        self.sigma
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn leaf_width(&self) -> u64 {
        self.leaf_width
    }

    /// Size of the original value domain, `sigma * leaf_width`.
    pub fn domain_size(&self) -> u64 {
        self.sigma * self.leaf_width
    }

    pub fn n(&self) -> Count {
        self.n
    }

    /// Number of buckets, `|Q|`.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `floor(n / k)`, the merge threshold.
    pub fn threshold(&self) -> Count {
        self.n / self.k as Count
    }

    pub fn count(&self, node: NodeId) -> Count {
        self.counts.get(&node).copied().unwrap_or(0)
    }

    /// Buckets in ascending index order.
    pub fn buckets(&self) -> impl Iterator<Item = (NodeId, Count)> + '_ {
        self.counts.iter().map(|(&n, &c)| (n, c))
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.counts.contains_key(&node)
    }

    /// Buckets sorted by post-order rank.
    pub fn buckets_post_order(&self) -> Vec<(NodeId, Count)> {
        let mut v: Vec<_> = self.buckets().collect();
        v.sort_by_key(|(n, _)| n.post_order_rank(self.sigma));
        v
    }

    /// Value range of a node in the original domain (scaled by leaf width).
    pub fn value_range(&self, node: NodeId) -> (u64, u64) {
        let (lo, hi) = node.range(self.sigma);
        ((lo - 1) * self.leaf_width + 1, hi * self.leaf_width)
    }

    /// Own count plus parent and sibling counts; the root's own count alone.
    pub fn nabla(&self, b: NodeId) -> Count {
        match (b.parent(), b.sibling()) {
            (Some(p), Some(s)) => self.count(b) + self.count(p) + self.count(s),
            _ => self.count(b),
        }
    }

    /// Mean level of the buckets (root = 0), or `None` for an empty digest.
    pub fn mean_bucket_depth(&self) -> Option<f64> {
        if self.counts.is_empty() {
            return None;
        }
        let total: u64 = self.counts.keys().map(|n| n.level() as u64).sum();
        Some(total as f64 / self.counts.len() as f64)
    }

    /// Errors unless both digests share `sigma`, `k` and leaf width.
    pub fn check_compatible(&self, other: &QDigest) -> Result<()> {
        if self.sigma != other.sigma || self.k != other.k || self.leaf_width != other.leaf_width {
            return Err(Error::Incompatible(format!(
                "(sigma={}, k={}, leafwidth={}) vs (sigma={}, k={}, leafwidth={})",
                self.sigma, self.k, self.leaf_width, other.sigma, other.k, other.leaf_width
            )));
        }
        Ok(())
    }

    /// Pointwise sum of two digests. The result keeps the per-bucket upper
    /// bound but may break the neighbourhood lower bound.
    pub fn sum(&self, other: &QDigest) -> Result<QDigest> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (node, c) in other.buckets() {
            let slot = out.counts.entry(node).or_insert(0);
            *slot = slot.checked_add(c).ok_or(Error::Overflow)?;
        }
        out.n = self.n.checked_add(other.n).ok_or(Error::Overflow)?;
        Ok(out)
    }

    /// `compress(sum(a, b))` using the fixpoint compression, so the result is
    /// always a valid digest.
    pub fn merge(&self, other: &QDigest) -> Result<QDigest> {
        Ok(self.sum(other)?.iterative_compress())
    }

    /// One bottom-up sweep of the classic compression. Kept because it can
    /// leave neighbourhood violations behind after a sum.
    pub fn compress_one_pass(&self) -> QDigest {
        let mut out = self.clone();
        let threshold = out.threshold();
        one_pass(&mut out.counts, self.sigma, threshold);
        out
    }

    /// Repeats the one-pass sweep until a sweep performs no merge.
    pub fn iterative_compress(&self) -> QDigest {
        self.iterative_compress_counted().0
    }

    /// Like [`QDigest::iterative_compress`], also returning the number of
    /// sweeps executed (including the final merge-free one).
    pub fn iterative_compress_counted(&self) -> (QDigest, usize) {
        let mut out = self.clone();
        let threshold = out.threshold();
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            if one_pass(&mut out.counts, self.sigma, threshold) == 0 {
                break;
            }
        }
        (out, sweeps)
    }

    /// Compresses both child subtrees, merges the children into a node when
    /// its family total fits, and re-compresses the children after a merge.
    pub fn recursive_compress(&self) -> QDigest {
        let mut out = self.clone();
        let threshold = out.threshold();
        recursive(&mut out.counts, NodeId::ROOT, self.sigma, threshold);
        out
    }

    /// Re-targets the digest to a smaller compression parameter.
    pub fn recompress(&self, k_new: u64) -> Result<QDigest> {
        if k_new == 0 || k_new >= self.k {
            return Err(Error::UnsupportedRecompress {
                old: self.k,
                new: k_new,
            });
        }
        let mut out = self.clone();
        out.k = k_new;
        Ok(out.iterative_compress())
    }

    /// Bucket at which a post-order accumulation first reaches `q * n`.
    pub fn quantile_stop(&self, q: Quantile) -> Result<(NodeId, usize)> {
        if self.n == 0 {
            return Err(Error::EmptyDigest);
        }
        let ordered = self.buckets_post_order();
        let mut acc: Count = 0;
        for (pos, (node, c)) in ordered.iter().enumerate() {
            acc += c;
            if q.reached(acc, self.n) {
                return Ok((*node, pos));
            }
        }
        // acc == n here, and q <= 1 always reaches n.
        unreachable!("post-order accumulation ends at n")
    }

    /// Maximum of the stop bucket's range.
    pub fn quantile(&self, q: Quantile) -> Result<u64> {
        let (node, _) = self.quantile_stop(q)?;
        Ok(self.value_range(node).1)
    }

    fn check_value(&self, x: u64) -> Result<()> {
        if x == 0 || x > self.domain_size() {
            return Err(Error::Domain(format!(
                "value {x} outside [1, {}]",
                self.domain_size()
            )));
        }
        Ok(())
    }

    /// Total count of buckets lying entirely below `x`.
    pub fn rank(&self, x: u64) -> Result<Count> {
        if self.n == 0 {
            return Err(Error::EmptyDigest);
        }
        self.check_value(x)?;
        Ok(self
            .buckets()
            .filter(|(node, _)| self.value_range(*node).1 < x)
            .map(|(_, c)| c)
            .sum())
    }

    /// Estimated number of values in `[l, r]`.
    pub fn range_count(&self, l: u64, r: u64) -> Result<Count> {
        if l > r {
            return Err(Error::InvalidParameter(format!(
                "inverted range [{l}, {r}]"
            )));
        }
        self.check_value(l)?;
        self.check_value(r)?;
        let upper = if r == self.domain_size() {
            if self.n == 0 {
                return Err(Error::EmptyDigest);
            }
            self.n
        } else {
            self.rank(r + 1)?
        };
        Ok(upper - self.rank(l)?)
    }

    /// Copy with one node's count replaced (zero removes the bucket).
    /// Used by tests and adversarial responders; no validity is implied.
    pub fn with_count(&self, node: NodeId, count: Count) -> Result<QDigest> {
        if node.index() == 0 || node.index() > 2 * self.sigma - 1 {
            return Err(Error::Domain(format!("node {node} outside tree")));
        }
        let mut out = self.clone();
        let old = out.counts.remove(&node).unwrap_or(0);
        out.n -= old;
        out.add_to(node, count)?;
        Ok(out)
    }
}

fn get(counts: &BTreeMap<NodeId, Count>, node: NodeId) -> Count {
    counts.get(&node).copied().unwrap_or(0)
}

/// Moves the children's counts into `parent`.
fn merge_family(counts: &mut BTreeMap<NodeId, Count>, parent: NodeId, total: Count) {
    counts.remove(&parent.left());
    counts.remove(&parent.right());
    if total > 0 {
        counts.insert(parent, total);
    }
}

/// One bottom-up sweep; deepest level first, ascending index within a level.
/// Returns the number of merges that moved a positive count.
fn one_pass(counts: &mut BTreeMap<NodeId, Count>, sigma: u64, threshold: Count) -> usize {
    let height = sigma.trailing_zeros();
    let mut merges = 0;
    for level in (1..=height).rev() {
        let lo = NodeId::from_raw(1u64 << level);
        let hi = NodeId::from_raw((1u64 << (level + 1)) - 1);
        let mut parents: Vec<NodeId> = counts
            .range(lo..=hi)
            .filter_map(|(n, _)| n.parent())
            .collect();
        parents.dedup();
        for p in parents {
            let total = get(counts, p) + get(counts, p.left()) + get(counts, p.right());
            if total <= threshold {
                merge_family(counts, p, total);
                merges += 1;
            }
        }
    }
    merges
}

/// True if some bucket lies strictly below `node`.
fn has_bucket_below(counts: &BTreeMap<NodeId, Count>, node: NodeId, sigma: u64) -> bool {
    let depth_left = sigma.trailing_zeros() - node.level();
    (1..=depth_left).any(|d| {
        let lo = NodeId::from_raw(node.index() << d);
        let hi = NodeId::from_raw(((node.index() + 1) << d) - 1);
        counts.range(lo..=hi).next().is_some()
    })
}

fn recursive(counts: &mut BTreeMap<NodeId, Count>, b: NodeId, sigma: u64, threshold: Count) {
    // Subtrees with nothing below `b` are fixed points of every step below.
    if b.is_leaf(sigma) || !has_bucket_below(counts, b, sigma) {
        return;
    }
    recursive(counts, b.left(), sigma, threshold);
    recursive(counts, b.right(), sigma, threshold);
    let total = get(counts, b) + get(counts, b.left()) + get(counts, b.right());
    if total <= threshold {
        merge_family(counts, b, total);
        recursive(counts, b.left(), sigma, threshold);
        recursive(counts, b.right(), sigma, threshold);
    }
}
