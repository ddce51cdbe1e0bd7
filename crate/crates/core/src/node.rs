//! Index arithmetic on the full binary partition tree over `[1, sigma]`.
//!
//! Nodes are numbered breadth-first from 1 at the root, so the children of
//! `i` are `2i` and `2i + 1` and the leaves are exactly `[sigma, 2 sigma - 1]`.
//! Leaf `sigma + v - 1` stands for domain value `v`.

use std::fmt;

use crate::error::{Error, Result};

/// Largest supported tree domain (`2^40` leaves).
pub const MAX_SIGMA: u64 = 1 << 40;

/// Breadth-first index of a node in the partition tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u64);

impl NodeId {
    pub const ROOT: NodeId = NodeId(1);

    /// Wraps `index` after checking it addresses a node of a tree with
    /// `sigma` leaves.
    pub fn new(index: u64, sigma: u64) -> Result<Self> {
        check_sigma(sigma)?;
        if index == 0 || index > 2 * sigma - 1 {
            return Err(Error::Domain(format!(
                "node index {index} outside [1, {}]",
                2 * sigma - 1
            )));
        }
        Ok(NodeId(index))
    }

    /// Wraps an index without a range check. Callers own the invariant.
    pub const fn from_raw(index: u64) -> Self {
        NodeId(index)
    }

    pub const fn index(self) -> u64 {
        self.0
    }

    pub fn is_root(self) -> bool {
        self.0 == 1
    }

    pub fn is_leaf(self, sigma: u64) -> bool {
        self.0 >= sigma
    }

    pub fn parent(self) -> Option<NodeId> {
        (self.0 > 1).then_some(NodeId(self.0 >> 1))
    }

    pub fn left(self) -> NodeId {
        NodeId(self.0 << 1)
    }

    pub fn right(self) -> NodeId {
        NodeId((self.0 << 1) | 1)
    }

    pub fn sibling(self) -> Option<NodeId> {
        (self.0 > 1).then_some(NodeId(self.0 ^ 1))
    }

    /// Depth below the root (root = 0).
    pub fn level(self) -> u32 {
        63 - self.0.leading_zeros()
    }

    /// Leaf for domain value `v` (1-based).
    pub fn leaf_for_value(v: u64, sigma: u64) -> Result<Self> {
        check_sigma(sigma)?;
        if v == 0 || v > sigma {
            return Err(Error::Domain(format!("value {v} outside [1, {sigma}]")));
        }
        Ok(NodeId(sigma + v - 1))
    }

    /// Closed value interval covered by this node.
    pub fn range(self, sigma: u64) -> (u64, u64) {
        let level = self.level();
        let width = sigma >> level;
        let offset = self.0 - (1u64 << level);
        (offset * width + 1, (offset + 1) * width)
    }

    /// True if `other` lies in the subtree rooted here (inclusive).
    pub fn is_ancestor_of(self, other: NodeId) -> bool {
        let (a, b) = (self.level(), other.level());
        b >= a && (other.0 >> (b - a)) == self.0
    }

    /// 1-based position of this node in the post-order traversal of the
    /// full tree with `sigma` leaves.
    pub fn post_order_rank(self, sigma: u64) -> u64 {
        let height = sigma.trailing_zeros();
        let level = self.level();
        let mut rank = 0;
        // Every right turn on the path from the root skips a whole left subtree.
        for depth in 1..=level {
            if (self.0 >> (level - depth)) & 1 == 1 {
                rank += subtree_size(height - depth);
            }
        }
        rank + subtree_size(height - level)
    }

    /// Number of nodes in this node's full subtree.
    pub fn subtree_len(self, sigma: u64) -> u64 {
        subtree_size(sigma.trailing_zeros() - self.level())
    }

    /// Lowest post-order rank inside this node's subtree.
    pub fn subtree_first_rank(self, sigma: u64) -> u64 {
        self.post_order_rank(sigma) + 1 - self.subtree_len(sigma)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Nodes in a full subtree whose leaves sit `height` levels below its root.
fn subtree_size(height: u32) -> u64 {
    (1u64 << (height + 1)) - 1
}

pub fn check_sigma(sigma: u64) -> Result<()> {
    if sigma == 0 || !sigma.is_power_of_two() || sigma > MAX_SIGMA {
        return Err(Error::InvalidParameter(format!(
            "sigma must be a power of two in [1, 2^40], got {sigma}"
        )));
    }
    Ok(())
}

/// Smallest power of two that is at least `domain`, for padding arbitrary
/// domains up to a full tree.
pub fn padded_sigma(domain: u64) -> u64 {
    domain.max(1).next_power_of_two()
}

/// Checked form of [`NodeId::range`].
pub fn node_range(index: u64, sigma: u64) -> Result<(u64, u64)> {
    Ok(NodeId::new(index, sigma)?.range(sigma))
}

/// Checked form of [`NodeId::post_order_rank`].
pub fn post_order_rank(index: u64, sigma: u64) -> Result<u64> {
    Ok(NodeId::new(index, sigma)?.post_order_rank(sigma))
}

/// All nodes of the full tree in post-order.
pub fn post_order(sigma: u64) -> PostOrder {
    PostOrder::starting_at(NodeId(sigma), sigma)
}

/// Iterator over the full tree in post-order, starting at an arbitrary node.
#[derive(Debug, Clone)]
pub struct PostOrder {
    next: Option<NodeId>,
    sigma: u64,
}

impl PostOrder {
    pub fn starting_at(node: NodeId, sigma: u64) -> Self {
        PostOrder {
            next: Some(node),
            sigma,
        }
    }

    /// Post-order successor of `node`, or `None` after the root.
    pub fn successor(node: NodeId, sigma: u64) -> Option<NodeId> {
        if node.is_root() {
            return None;
        }
        if node.0 & 1 == 1 {
            // Right child: the parent comes next.
            return node.parent();
        }
        // Left child: descend to the leftmost leaf of the right sibling.
        let mut n = NodeId(node.0 | 1);
        while !n.is_leaf(sigma) {
            n = n.left();
        }
        Some(n)
    }
}

impl Iterator for PostOrder {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        let cur = self.next?;
        self.next = PostOrder::successor(cur, self.sigma);
        Some(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_match_known_nodes() {
        assert_eq!(node_range(11, 8).unwrap(), (4, 4));
        assert_eq!(node_range(6, 8).unwrap(), (5, 6));
        assert_eq!(node_range(1, 8).unwrap(), (1, 8));
        assert_eq!(node_range(7, 8).unwrap(), (7, 8));
        assert!(node_range(16, 8).is_err());
        assert!(node_range(0, 8).is_err());
        assert!(node_range(1, 6).is_err());
    }

    #[test]
    fn post_order_ranks() {
        assert_eq!(post_order_rank(8, 8).unwrap(), 1);
        assert_eq!(post_order_rank(11, 8).unwrap(), 5);
        assert_eq!(post_order_rank(1, 8).unwrap(), 15);
        let expected = [8, 9, 4, 10, 11, 5, 2, 12, 13, 6, 14, 15, 7, 3, 1];
        let walked: Vec<u64> = post_order(8).map(NodeId::index).collect();
        assert_eq!(walked, expected);
        for (pos, idx) in expected.iter().enumerate() {
            assert_eq!(NodeId(*idx).post_order_rank(8), pos as u64 + 1);
        }
    }

    #[test]
    fn single_node_tree() {
        assert_eq!(node_range(1, 1).unwrap(), (1, 1));
        assert_eq!(post_order(1).count(), 1);
        assert!(NodeId::ROOT.is_leaf(1));
    }

    #[test]
    fn family_arithmetic() {
        let n = NodeId(11);
        assert_eq!(n.parent(), Some(NodeId(5)));
        assert_eq!(n.sibling(), Some(NodeId(10)));
        assert_eq!(NodeId(5).left(), NodeId(10));
        assert_eq!(NodeId::ROOT.parent(), None);
        assert_eq!(n.level(), 3);
        assert!(NodeId(2).is_ancestor_of(n));
        assert!(!NodeId(3).is_ancestor_of(n));
        assert_eq!(NodeId(2).subtree_len(8), 7);
        assert_eq!(NodeId(2).subtree_first_rank(8), 1);
        assert_eq!(NodeId(6).subtree_first_rank(8), 8);
    }

    #[test]
    fn padding() {
        assert_eq!(padded_sigma(5), 8);
        assert_eq!(padded_sigma(8), 8);
        assert_eq!(padded_sigma(0), 1);
    }
}
