//! Quantile queries authenticated with a key-value commitment.
//!
//! The responder walks its buckets in post-order until the running count
//! reaches `q * n`, returns the visited prefix, and commits every tree node
//! after the stop bucket (empty nodes at 0) as the remainder. The verifier
//! inserts every node up to and including the stop bucket, again with zeros
//! for nodes not in the prefix, and compares against the trusted commitment.
//! Committing zeros on both sides is what defeats a responder that hides
//! early buckets inside the remainder.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use crate::commitment::{commit_subtree, Commitment};
use crate::digest::QDigest;
use crate::error::{Error, Result};
use crate::node::{check_sigma, NodeId, PostOrder};
use crate::quantile::Quantile;
use crate::Count;

pub const PROOF_MAGIC: &str = "aqqproof v1";

/// Answer plus the evidence a verifier needs to check it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantileProof {
    pub q: Quantile,
    /// Total count the responder claims for the digest.
    pub n: Count,
    /// Maximum of the stop bucket's range, in the original domain.
    pub answer: u64,
    /// Buckets visited in post-order, ending with the stop bucket.
    pub counted: Vec<(NodeId, Count)>,
    /// Commitment over every node after the stop bucket in post-order.
    pub remainder: Commitment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reason {
    Ok,
    CountTooLow,
    PrefixOvershoot,
    CommitmentMismatch,
    Malformed,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reason::Ok => "ok",
            Reason::CountTooLow => "count-too-low",
            Reason::PrefixOvershoot => "prefix-overshoot",
            Reason::CommitmentMismatch => "commitment-mismatch",
            Reason::Malformed => "malformed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerificationStats {
    /// Commitment insertions performed by the verifier.
    pub insert_ops: u64,
    /// Of those, insertions of non-empty buckets.
    pub bucket_insert_ops: u64,
    pub accepted: bool,
    pub reason: Reason,
}

impl VerificationStats {
    fn reject(reason: Reason, insert_ops: u64, bucket_insert_ops: u64) -> Self {
        VerificationStats {
            insert_ops,
            bucket_insert_ops,
            accepted: false,
            reason,
        }
    }
}

/// Insertions performed by the responder while building a proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProverStats {
    pub insert_ops: u64,
    pub bucket_insert_ops: u64,
}

/// Commitment of a full subtree together with the total count below it,
/// both kept in the trusted store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubtreeAuth {
    pub commitment: Commitment,
    pub total: Count,
}

pub fn precompute_subtrees(q: &QDigest, roots: &[NodeId]) -> Result<BTreeMap<NodeId, SubtreeAuth>> {
    roots
        .iter()
        .map(|&r| {
            NodeId::new(r.index(), q.sigma())?;
            let total = q
                .buckets()
                .filter(|(b, _)| r.is_ancestor_of(*b))
                .map(|(_, c)| c)
                .sum();
            Ok((
                r,
                SubtreeAuth {
                    commitment: commit_subtree(q, r),
                    total,
                },
            ))
        })
        .collect()
}

/// Left children along the right spine: `2, 6, 14, ...`. Any prefix ending
/// on the right spine is then covered by a handful of them.
pub fn default_subtree_roots(sigma: u64) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut node = NodeId::ROOT;
    while !node.is_leaf(sigma) {
        out.push(node.left());
        node = node.right();
    }
    out
}

/// Authenticated quantile query.
pub fn aqq(q: &QDigest, quantile: Quantile) -> Result<QuantileProof> {
    Ok(aqq_with_stats(q, quantile)?.0)
}

pub fn aqq_with_stats(q: &QDigest, quantile: Quantile) -> Result<(QuantileProof, ProverStats)> {
    let (stop, pos) = q.quantile_stop(quantile)?;
    let counted = q.buckets_post_order()[..=pos].to_vec();
    let mut stats = ProverStats::default();
    let mut remainder = Commitment::initialize();
    if let Some(next) = PostOrder::successor(stop, q.sigma()) {
        for node in PostOrder::starting_at(next, q.sigma()) {
            let c = q.count(node);
            remainder = remainder.insert_pair(node, c);
            stats.insert_ops += 1;
            stats.bucket_insert_ops += (c > 0) as u64;
        }
    }
    let proof = QuantileProof {
        q: quantile,
        n: q.n(),
        answer: q.value_range(stop).1,
        counted,
        remainder,
    };
    Ok((proof, stats))
}

/// Adversarial responder: skips the `omit` buckets while accumulating and
/// hides them in the remainder as if they came after the stop bucket.
pub fn malicious_aqq_omit_left(
    q: &QDigest,
    quantile: Quantile,
    omit: &BTreeSet<NodeId>,
) -> Result<QuantileProof> {
    if q.n() == 0 {
        return Err(Error::EmptyDigest);
    }
    let sigma = q.sigma();
    let kept: Vec<(NodeId, Count)> = q
        .buckets_post_order()
        .into_iter()
        .filter(|(b, _)| !omit.contains(b))
        .collect();
    let mut acc: Count = 0;
    let mut end = kept.len();
    for (i, (_, c)) in kept.iter().enumerate() {
        acc += c;
        if quantile.reached(acc, q.n()) {
            end = i + 1;
            break;
        }
    }
    let counted = kept[..end].to_vec();
    let stop_rank = counted
        .last()
        .map(|(b, _)| b.post_order_rank(sigma))
        .unwrap_or(0);
    let mut remainder = Commitment::initialize();
    for node in crate::node::post_order(sigma) {
        let c = q.count(node);
        if node.post_order_rank(sigma) > stop_rank || (omit.contains(&node) && c > 0) {
            remainder = remainder.insert_pair(node, c);
        }
    }
    let answer = counted
        .last()
        .map(|(b, _)| q.value_range(*b).1)
        .unwrap_or(0);
    Ok(QuantileProof {
        q: quantile,
        n: q.n(),
        answer,
        counted,
        remainder,
    })
}

/// Checks shared by both verifiers. Returns the counted total on success.
fn check_proof_shape(
    proof: &QuantileProof,
    n: Count,
    sigma: u64,
    leaf_width: u64,
) -> std::result::Result<Count, Reason> {
    if proof.n != n || proof.counted.is_empty() || check_sigma(sigma).is_err() {
        return Err(Reason::Malformed);
    }
    let mut prev_rank = 0;
    let mut total: Count = 0;
    for &(node, c) in &proof.counted {
        if node.index() == 0 || node.index() > 2 * sigma - 1 || c == 0 {
            return Err(Reason::Malformed);
        }
        let rank = node.post_order_rank(sigma);
        if rank <= prev_rank {
            return Err(Reason::Malformed);
        }
        prev_rank = rank;
        total = total.checked_add(c).ok_or(Reason::Malformed)?;
    }
    let &(stop, last) = proof.counted.last().expect("non-empty");
    if !proof.q.reached(total, n) {
        return Err(Reason::CountTooLow);
    }
    // A one-bucket prefix is minimal by construction; at q = 0 the strict
    // comparison below could never hold for it.
    if proof.counted.len() > 1 && proof.q.reached(total - last, n) {
        return Err(Reason::PrefixOvershoot);
    }
    let expected_answer = stop.range(sigma).1.checked_mul(leaf_width);
    if expected_answer != Some(proof.answer) {
        return Err(Reason::Malformed);
    }
    Ok(total)
}

/// Inserts every node from the first leaf up to the stop bucket,
/// skipping whole subtrees listed in `skip` (keyed by their leftmost leaf).
fn complete_remainder(
    proof: &QuantileProof,
    sigma: u64,
    skip: &BTreeMap<NodeId, NodeId>,
) -> (Commitment, u64, u64) {
    let listed: BTreeMap<NodeId, Count> = proof.counted.iter().copied().collect();
    let stop = proof.counted.last().expect("non-empty").0;
    let mut acc = proof.remainder;
    let (mut ops, mut bucket_ops) = (0u64, 0u64);
    let mut cur = Some(NodeId::from_raw(sigma));
    while let Some(node) = cur {
        if let Some(&root) = skip.get(&node) {
            cur = PostOrder::successor(root, sigma);
            continue;
        }
        let c = listed.get(&node).copied().unwrap_or(0);
        acc = acc.insert_pair(node, c);
        ops += 1;
        bucket_ops += (c > 0) as u64;
        if node == stop {
            break;
        }
        cur = PostOrder::successor(node, sigma);
    }
    (acc, ops, bucket_ops)
}

/// Verifies a proof against the trusted commitment `c` and count `n`.
pub fn qqv(
    proof: &QuantileProof,
    c: &Commitment,
    n: Count,
    sigma: u64,
    leaf_width: u64,
) -> VerificationStats {
    if let Err(reason) = check_proof_shape(proof, n, sigma, leaf_width) {
        return VerificationStats::reject(reason, 0, 0);
    }
    let (completed, ops, bucket_ops) = complete_remainder(proof, sigma, &BTreeMap::new());
    finish(completed.ct_eq(c), ops, bucket_ops)
}

fn finish(matches: bool, insert_ops: u64, bucket_insert_ops: u64) -> VerificationStats {
    VerificationStats {
        insert_ops,
        bucket_insert_ops,
        accepted: matches,
        reason: if matches {
            Reason::Ok
        } else {
            Reason::CommitmentMismatch
        },
    }
}

/// Verifier that folds in precomputed subtree commitments instead of
/// inserting their nodes one by one, whenever a subtree lies wholly before
/// the stop bucket. The trusted subtree totals stand in for the prefix
/// counts inside those subtrees.
pub fn qqv_accelerated(
    proof: &QuantileProof,
    c: &Commitment,
    precomputed: &BTreeMap<NodeId, SubtreeAuth>,
    n: Count,
    sigma: u64,
    leaf_width: u64,
) -> VerificationStats {
    if let Err(reason) = check_proof_shape(proof, n, sigma, leaf_width) {
        return VerificationStats::reject(reason, 0, 0);
    }
    let stop = proof.counted.last().expect("non-empty").0;
    let stop_rank = stop.post_order_rank(sigma);

    // Usable subtrees, largest first, keeping only maximal disjoint ones.
    let mut usable: Vec<NodeId> = precomputed
        .keys()
        .copied()
        .filter(|r| r.index() >= 1 && r.index() < 2 * sigma && r.post_order_rank(sigma) < stop_rank)
        .collect();
    usable.sort_by_key(|r| (r.level(), r.index()));
    let mut chosen: Vec<NodeId> = Vec::new();
    for r in usable {
        if !chosen.iter().any(|c| c.is_ancestor_of(r)) {
            chosen.push(r);
        }
    }

    for root in &chosen {
        let inside: Count = proof
            .counted
            .iter()
            .filter(|(b, _)| root.is_ancestor_of(*b))
            .map(|(_, c)| c)
            .sum();
        if inside != precomputed[root].total {
            return VerificationStats::reject(Reason::CommitmentMismatch, 0, 0);
        }
    }

    let height = sigma.trailing_zeros();
    let skip: BTreeMap<NodeId, NodeId> = chosen
        .iter()
        .map(|r| (NodeId::from_raw(r.index() << (height - r.level())), *r))
        .collect();
    let (mut completed, ops, bucket_ops) = complete_remainder(proof, sigma, &skip);
    for root in &chosen {
        completed = completed.combine(&precomputed[root].commitment);
    }
    finish(completed.ct_eq(c), ops, bucket_ops)
}

impl fmt::Display for QuantileProof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{PROOF_MAGIC} q={} n={} answer={}",
            self.q, self.n, self.answer
        );
        for (node, c) in &self.counted {
            let _ = writeln!(out, "{node}:{c}");
        }
        let _ = writeln!(out, "remainder={}", self.remainder);
        f.write_str(&out)
    }
}

impl std::str::FromStr for QuantileProof {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse(1, "empty proof"))?;
        let rest = header
            .strip_prefix(PROOF_MAGIC)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| Error::parse(1, format!("header must start with `{PROOF_MAGIC}`")))?;
        let mut toks = rest.split(' ');
        let mut field = |key: &str| -> Result<&str> {
            toks.next()
                .and_then(|t| t.strip_prefix(key))
                .and_then(|t| t.strip_prefix('='))
                .ok_or_else(|| Error::parse(1, format!("missing `{key}=`")))
        };
        let q: Quantile = field("q")?.parse()?;
        let n: Count = field("n")?.parse().map_err(|_| Error::parse(1, "bad n"))?;
        let answer: u64 = field("answer")?
            .parse()
            .map_err(|_| Error::parse(1, "bad answer"))?;
        let mut counted = Vec::new();
        let mut remainder = None;
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            if remainder.is_some() {
                return Err(Error::parse(lineno, "content after remainder line"));
            }
            if let Some(c) = line.strip_prefix("remainder=") {
                remainder = Some(c.parse::<Commitment>()?);
                continue;
            }
            let (idx, c) = line
                .split_once(':')
                .ok_or_else(|| Error::parse(lineno, "expected `index:count`"))?;
            let idx: u64 = idx.parse().map_err(|_| Error::parse(lineno, "bad index"))?;
            let c: Count = c.parse().map_err(|_| Error::parse(lineno, "bad count"))?;
            counted.push((NodeId::from_raw(idx), c));
        }
        let remainder = remainder.ok_or_else(|| Error::parse(0, "missing remainder line"))?;
        Ok(QuantileProof {
            q,
            n,
            answer,
            counted,
            remainder,
        })
    }
}

pub const AUTH_MAGIC: &str = "kvcauth v1";

/// Everything the source publishes for KVC-QA: the whole-tree commitment,
/// the digest parameters and total, and per-subtree commitments for the
/// accelerated verifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvcAuthInfo {
    pub sigma: u64,
    pub k: u64,
    pub leaf_width: u64,
    pub n: Count,
    pub commitment: Commitment,
    pub subtrees: BTreeMap<NodeId, SubtreeAuth>,
}

impl KvcAuthInfo {
    pub fn publish(q: &QDigest, roots: &[NodeId]) -> Result<Self> {
        Ok(KvcAuthInfo {
            sigma: q.sigma(),
            k: q.k(),
            leaf_width: q.leaf_width(),
            n: q.n(),
            commitment: crate::commitment::commit_digest(q),
            subtrees: precompute_subtrees(q, roots)?,
        })
    }

    pub fn verify(&self, proof: &QuantileProof, accelerated: bool) -> VerificationStats {
        if accelerated {
            qqv_accelerated(
                proof,
                &self.commitment,
                &self.subtrees,
                self.n,
                self.sigma,
                self.leaf_width,
            )
        } else {
            qqv(proof, &self.commitment, self.n, self.sigma, self.leaf_width)
        }
    }
}

impl fmt::Display for KvcAuthInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{AUTH_MAGIC} sigma={} k={} leafwidth={} n={} {}",
            self.sigma, self.k, self.leaf_width, self.n, self.commitment
        )?;
        for (root, s) in &self.subtrees {
            writeln!(f, "subtree {root} total={} {}", s.total, s.commitment)?;
        }
        Ok(())
    }
}

impl std::str::FromStr for KvcAuthInfo {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty auth file"))?;
        let rest = header
            .strip_prefix(AUTH_MAGIC)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| Error::parse(1, format!("header must start with `{AUTH_MAGIC}`")))?;
        let toks: Vec<&str> = rest.split(' ').collect();
        if toks.len() != 5 {
            return Err(Error::parse(
                1,
                "expected sigma=, k=, leafwidth=, n= and a commitment",
            ));
        }
        let field = |i: usize, key: &str| -> Result<&str> {
            toks[i]
                .strip_prefix(key)
                .and_then(|t| t.strip_prefix('='))
                .ok_or_else(|| Error::parse(1, format!("missing `{key}=`")))
        };
        let num = |i: usize, key: &str| -> Result<u64> {
            field(i, key)?
                .parse()
                .map_err(|_| Error::parse(1, format!("bad {key}")))
        };
        let sigma = num(0, "sigma")?;
        check_sigma(sigma)?;
        let k = num(1, "k")?;
        let leaf_width = num(2, "leafwidth")?;
        let n: Count = field(3, "n")?
            .parse()
            .map_err(|_| Error::parse(1, "bad n"))?;
        let commitment: Commitment = toks[4].parse()?;
        let mut subtrees = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let bad = || Error::parse(lineno, "expected `subtree <index> total=<t> kvc1:<hex>`");
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 4 || parts[0] != "subtree" {
                return Err(bad());
            }
            let root: u64 = parts[1].parse().map_err(|_| bad())?;
            let root = NodeId::new(root, sigma)?;
            let total = parts[2]
                .strip_prefix("total=")
                .and_then(|t| t.parse().ok())
                .ok_or_else(bad)?;
            let commitment = parts[3].parse()?;
            if subtrees
                .insert(root, SubtreeAuth { commitment, total })
                .is_some()
            {
                return Err(Error::parse(lineno, "duplicate subtree"));
            }
        }
        Ok(KvcAuthInfo {
            sigma,
            k,
            leaf_width,
            n,
            commitment,
            subtrees,
        })
    }
}
