//! Reference key-value commitment.
//!
//! A commitment is an element of the additive group `Z_P` with
//! `P = 2^256 - 189`. Inserting `(key, value)` adds `H(tag || key || value)`
//! reduced into the group, so commitments are order-independent, combine by
//! addition, and are sensitive to multiplicity. Inserting a zero value still
//! moves the accumulator, which is what lets a verifier prove a node empty.
//!
//! This is an additive multiset hash. Its collision resistance rests on the
//! hardness of generalized birthday problems, which needs large moduli; it is
//! a reference construction, not a vetted production primitive.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::digest::QDigest;
use crate::error::{Error, Result};
use crate::node::NodeId;
use crate::Count;

/// `2^256 - 189`, the largest prime below `2^256`, as little-endian limbs.
pub const MODULUS: [u64; 4] = [u64::MAX - 188, u64::MAX, u64::MAX, u64::MAX];
const MODULUS_GAP: u64 = 189;

pub const DOMAIN_TAG: &[u8] = b"qdigest-kvc-v1\0";
pub const TEXT_PREFIX: &str = "kvc1:";

/// One `(node, count)` insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InsertionRecord {
    pub key: NodeId,
    pub value: Count,
}

impl InsertionRecord {
    pub fn new(key: NodeId, value: Count) -> Self {
        InsertionRecord { key, value }
    }
}

/// Group element, little-endian 64-bit limbs, always reduced below `P`.
#[derive(Clone, Copy)]
pub struct Commitment([u64; 4]);

impl Commitment {
    /// Group identity.
    pub const fn initialize() -> Self {
        Commitment([0; 4])
    }

    pub fn insert(&self, rec: InsertionRecord) -> Self {
        self.combine(&hash_to_group(rec))
    }

    pub fn insert_pair(&self, key: NodeId, value: Count) -> Self {
        self.insert(InsertionRecord::new(key, value))
    }

    /// Group addition: the commitment of the multiset union.
    pub fn combine(&self, other: &Commitment) -> Self {
        Commitment(add_mod(&self.0, &other.0))
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, limb) in self.0.iter().rev().enumerate() {
            out[i * 8..i * 8 + 8].copy_from_slice(&limb.to_be_bytes());
        }
        out
    }

    /// Decodes a big-endian encoding; values `>= P` are rejected.
    pub fn from_bytes(bytes: &[u8; 32]) -> Option<Self> {
        let limbs = limbs_from_be(bytes);
        (!ge_modulus(&limbs)).then_some(Commitment(limbs))
    }

    /// Equality without data-dependent early exit.
    pub fn ct_eq(&self, other: &Commitment) -> bool {
        let (a, b) = (self.to_bytes(), other.to_bytes());
        a.iter()
            .zip(b.iter())
            .fold(0u8, |acc, (x, y)| acc | (x ^ y))
            == 0
    }

    pub fn fold<I>(records: I) -> Self
    where
        I: IntoIterator<Item = InsertionRecord>,
    {
        records
            .into_iter()
            .fold(Commitment::initialize(), |c, r| c.insert(r))
    }
}

impl Default for Commitment {
    fn default() -> Self {
        Commitment::initialize()
    }
}

impl PartialEq for Commitment {
    fn eq(&self, other: &Self) -> bool {
        self.ct_eq(other)
    }
}

impl Eq for Commitment {}

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Commitment({self})")
    }
}

impl fmt::Display for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{TEXT_PREFIX}{}", hex::encode(self.to_bytes()))
    }
}

impl FromStr for Commitment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidParameter(format!("bad commitment {s:?}: {why}"));
        let hexpart = s
            .strip_prefix(TEXT_PREFIX)
            .ok_or_else(|| bad("missing kvc1: prefix"))?;
        if hexpart.len() != 64 || hexpart.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(bad("expected 64 lowercase hex digits"));
        }
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(hexpart, &mut bytes).map_err(|_| bad("not hex"))?;
        Commitment::from_bytes(&bytes).ok_or_else(|| bad("not reduced"))
    }
}

/// Membership by completion: `rec` is in the map committed by `c` iff
/// inserting it into the remainder `p` reproduces `c`.
pub fn member(c: &Commitment, p: &Commitment, rec: InsertionRecord) -> bool {
    p.insert(rec).ct_eq(c)
}

/// Commits every node of the full tree exactly once, empty nodes at 0.
pub fn commit_digest(q: &QDigest) -> Commitment {
    commit_subtree(q, NodeId::ROOT)
}

/// Commitment of every node in the full subtree under `root`, zeros included.
pub fn commit_subtree(q: &QDigest, root: NodeId) -> Commitment {
    subtree_nodes(root, q.sigma()).fold(Commitment::initialize(), |c, node| {
        c.insert_pair(node, q.count(node))
    })
}

/// Commitments of the full subtrees under each of `roots`.
pub fn subtree_commitments(
    q: &QDigest,
    roots: &[NodeId],
) -> Result<std::collections::BTreeMap<NodeId, Commitment>> {
    roots
        .iter()
        .map(|&r| {
            NodeId::new(r.index(), q.sigma())?;
            Ok((r, commit_subtree(q, r)))
        })
        .collect()
}

/// All nodes of the full subtree under `root`, level by level.
pub fn subtree_nodes(root: NodeId, sigma: u64) -> impl Iterator<Item = NodeId> {
    let depth = sigma.trailing_zeros() - root.level();
    (0..=depth).flat_map(move |d| {
        let lo = root.index() << d;
        (lo..lo + (1u64 << d)).map(NodeId::from_raw)
    })
}

fn hash_to_group(rec: InsertionRecord) -> Commitment {
    let mut h = Sha256::new();
    h.update(DOMAIN_TAG);
    h.update(rec.key.index().to_be_bytes());
    h.update(rec.value.to_be_bytes());
    let digest: [u8; 32] = h.finalize().into();
    let mut limbs = limbs_from_be(&digest);
    if ge_modulus(&limbs) {
        limbs = sub_modulus(&limbs);
    }
    Commitment(limbs)
}

fn limbs_from_be(bytes: &[u8; 32]) -> [u64; 4] {
    let mut limbs = [0u64; 4];
    for (i, limb) in limbs.iter_mut().enumerate() {
        let start = 32 - 8 * (i + 1);
        *limb = u64::from_be_bytes(bytes[start..start + 8].try_into().expect("8 bytes"));
    }
    limbs
}

fn ge_modulus(a: &[u64; 4]) -> bool {
    for i in (0..4).rev() {
        if a[i] != MODULUS[i] {
            return a[i] > MODULUS[i];
        }
    }
    true
}

fn sub_modulus(a: &[u64; 4]) -> [u64; 4] {
    let mut out = [0u64; 4];
    let mut borrow = false;
    for i in 0..4 {
        let (d, b1) = a[i].overflowing_sub(MODULUS[i]);
        let (d, b2) = d.overflowing_sub(borrow as u64);
        out[i] = d;
        borrow = b1 || b2;
    }
    out
}

fn add_mod(a: &[u64; 4], b: &[u64; 4]) -> [u64; 4] {
    let mut sum = [0u64; 4];
    let mut carry = false;
    for i in 0..4 {
        let (s, c1) = a[i].overflowing_add(b[i]);
        let (s, c2) = s.overflowing_add(carry as u64);
        sum[i] = s;
        carry = c1 || c2;
    }
    if carry {
        // a + b - P = (a + b - 2^256) + 189, which cannot carry again.
        let mut c = MODULUS_GAP;
        for limb in sum.iter_mut() {
            let (s, o) = limb.overflowing_add(c);
            *limb = s;
            c = o as u64;
        }
        sum
    } else if ge_modulus(&sum) {
        sub_modulus(&sum)
    } else {
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use proptest::prelude::*;

    fn modulus() -> BigUint {
        (BigUint::from(1u8) << 256) - BigUint::from(189u8)
    }

    fn big(c: &Commitment) -> BigUint {
        BigUint::from_bytes_be(&c.to_bytes())
    }

    fn rec(k: u64, v: Count) -> InsertionRecord {
        InsertionRecord::new(NodeId::from_raw(k), v)
    }

    #[test]
    fn modulus_limbs_match_bigint() {
        let mut bytes = [0u8; 32];
        for (i, limb) in MODULUS.iter().rev().enumerate() {
            bytes[i * 8..i * 8 + 8].copy_from_slice(&limb.to_be_bytes());
        }
        assert_eq!(BigUint::from_bytes_be(&bytes), modulus());
    }

    #[test]
    fn identity_and_non_degeneracy() {
        let id = Commitment::initialize();
        let c = id.insert(rec(1, 5));
        assert_eq!(id.combine(&c), c);
        assert_ne!(c, id);
        assert_ne!(c.insert(rec(10, 0)), c);
    }

    #[test]
    fn membership_examples() {
        let c = Commitment::fold([rec(1, 5), rec(2, 0), rec(3, 0)]);
        let p = Commitment::fold([rec(2, 0), rec(3, 0)]);
        assert!(member(&c, &p, rec(1, 5)));
        assert!(!member(&c, &p, rec(1, 4)));
        let c = Commitment::fold([rec(10, 0), rec(11, 6)]);
        let p = Commitment::fold([rec(11, 6)]);
        assert!(member(&c, &p, rec(10, 0)));
    }

    #[test]
    fn text_encoding() {
        let c = Commitment::fold([rec(1, 1)]);
        let s = c.to_string();
        assert!(s.starts_with("kvc1:"));
        assert_eq!(s.len(), 5 + 64);
        assert_eq!(s.parse::<Commitment>().unwrap(), c);
        assert_eq!(
            Commitment::initialize().to_string(),
            format!("kvc1:{}", "0".repeat(64))
        );
        assert!(format!("kvc1:{}", "f".repeat(64))
            .parse::<Commitment>()
            .is_err());
        assert!(s.to_uppercase().parse::<Commitment>().is_err());
        assert!(s[5..].parse::<Commitment>().is_err());
    }

    #[test]
    fn digest_commitment_covers_every_node() {
        let q = QDigest::from_buckets(8, 5, 1, [(1, 1), (6, 2), (7, 2), (10, 4), (11, 6)]).unwrap();
        let manual = Commitment::fold((1..=15).map(|i| rec(i, q.count(NodeId::from_raw(i)))));
        assert_eq!(commit_digest(&q), manual);
        let empty = QDigest::empty(8, 5).unwrap();
        assert_ne!(commit_digest(&empty), Commitment::initialize());
        let bumped = q.with_count(NodeId::from_raw(6), 3).unwrap();
        assert_ne!(commit_digest(&bumped), commit_digest(&q));
    }

    #[test]
    fn subtree_partition() {
        let q = QDigest::from_buckets(8, 5, 1, [(1, 1), (6, 2), (7, 2), (10, 4), (11, 6)]).unwrap();
        let left: Vec<u64> = subtree_nodes(NodeId::from_raw(2), 8)
            .map(NodeId::index)
            .collect();
        assert_eq!(left, [2, 4, 5, 8, 9, 10, 11]);
        let counts: Vec<Count> = left.iter().map(|&i| q.count(NodeId::from_raw(i))).collect();
        assert_eq!(counts, [0, 0, 0, 0, 0, 4, 6]);
        let subs = subtree_commitments(&q, &[NodeId::from_raw(2), NodeId::from_raw(3)]).unwrap();
        let whole = subs[&NodeId::from_raw(2)]
            .combine(&subs[&NodeId::from_raw(3)])
            .insert(rec(1, 1));
        assert_eq!(whole, commit_digest(&q));
        let leaf = commit_subtree(&q, NodeId::from_raw(10));
        assert_eq!(leaf, Commitment::initialize().insert(rec(10, 4)));
        assert!(subtree_commitments(&q, &[NodeId::from_raw(16)]).is_err());
    }

    proptest! {
        #[test]
        fn addition_matches_bigint(a in any::<[u8; 32]>(), b in any::<[u8; 32]>()) {
            let p = modulus();
            let ra = BigUint::from_bytes_be(&a) % &p;
            let rb = BigUint::from_bytes_be(&b) % &p;
            let to_c = |x: &BigUint| {
                let mut buf = [0u8; 32];
                let bytes = x.to_bytes_be();
                buf[32 - bytes.len()..].copy_from_slice(&bytes);
                Commitment::from_bytes(&buf).unwrap()
            };
            let sum = to_c(&ra).combine(&to_c(&rb));
            prop_assert_eq!(big(&sum), (ra + rb) % &p);
        }

        #[test]
        fn hash_output_is_reduced(k in 1u64..1 << 20, v in any::<u128>()) {
            let c = Commitment::initialize().insert(rec(k, v));
            prop_assert!(big(&c) < modulus());
        }
    }
}
