use crate::digest::QDigest;
use crate::node::NodeId;

/// Result of checking a digest against the count properties and size bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityReport {
    /// Non-root, non-leaf buckets whose count exceeds `floor(n/k)`.
    pub prop1_violations: Vec<NodeId>,
    /// Non-root buckets whose neighbourhood sum does not exceed `floor(n/k)`.
    pub prop2_violations: Vec<NodeId>,
    pub size: usize,
    /// `size <= 4k + 1`, and `size <= 2k + 1` when the construction invariant holds.
    pub size_bound_ok: bool,
    /// No bucket has a bucket child.
    pub construction_invariant_holds: bool,
}

impl ValidityReport {
    /// Both count properties hold for every bucket.
    pub fn is_qdigest(&self) -> bool {
        self.prop1_violations.is_empty() && self.prop2_violations.is_empty()
    }

    /// Count properties hold and the size is within bounds.
    pub fn is_valid(&self) -> bool {
        self.is_qdigest() && self.size_bound_ok
    }
}

pub fn size_bound(k: u64) -> u128 {
    4 * k as u128 + 1
}

pub fn construction_size_bound(k: u64) -> u128 {
    2 * k as u128 + 1
}

/// Exhaustively checks every bucket. Never fails; problems are reported.
pub fn validate(q: &QDigest) -> ValidityReport {
    let threshold = q.threshold();
    let sigma = q.sigma();
    let mut prop1 = Vec::new();
    let mut prop2 = Vec::new();
    let mut ci = true;
    for (node, count) in q.buckets() {
        // The root is exempt from both checks in the formal definition.
        if !node.is_root() {
            if !node.is_leaf(sigma) && count > threshold {
                prop1.push(node);
            }
            if q.nabla(node) <= threshold {
                prop2.push(node);
            }
        }
        if !node.is_leaf(sigma) && (q.contains(node.left()) || q.contains(node.right())) {
            ci = false;
        }
    }
    let size = q.len();
    let mut size_bound_ok = size as u128 <= size_bound(q.k());
    if ci {
        size_bound_ok &= size as u128 <= construction_size_bound(q.k());
    }
    ValidityReport {
        prop1_violations: prop1,
        prop2_violations: prop2,
        size,
        size_bound_ok,
        construction_invariant_holds: ci,
    }
}
