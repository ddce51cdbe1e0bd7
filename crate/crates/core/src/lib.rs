//! q-digest quantile summaries over integer domains `[1, sigma]`, with
//! fixpoint compression that always yields a valid digest, and two ways to
//! authenticate answers served by an untrusted responder:
//!
//! * whole-digest authentication ([`wda`]): hash the canonical digest bytes;
//! * key-value-commitment query authentication ([`kvc_qa`]): prove a single
//!   quantile answer against a commitment over every tree node.
//!
//! ```
//! use qdigest_core::{FrequencySet, QDigest, Quantile};
//! use qdigest_core::commitment::commit_digest;
//! use qdigest_core::kvc_qa::{aqq, qqv};
//!
//! let data = FrequencySet::from_pairs([(1, 1), (2, 2), (3, 3), (4, 4)]).unwrap();
//! let q = QDigest::build(&data, 4, 8).unwrap();
//! let c = commit_digest(&q);
//! let proof = aqq(&q, Quantile::new(1, 2).unwrap()).unwrap();
//! assert!(qqv(&proof, &c, q.n(), q.sigma(), q.leaf_width()).accepted);
//! ```

pub mod commitment;
pub mod costs;
pub mod digest;
pub mod error;
pub mod format;
pub mod kvc_qa;
pub mod node;
pub mod quantile;
pub mod scenario;
pub mod validate;
pub mod wda;

/// Bucket counts and totals.
pub type Count = u128;

pub use commitment::{Commitment, InsertionRecord};
pub use digest::{FrequencySet, QDigest};
pub use error::{Error, Result};
pub use kvc_qa::{KvcAuthInfo, QuantileProof, Reason, VerificationStats};
pub use node::NodeId;
pub use quantile::Quantile;
pub use validate::{validate, ValidityReport};
pub use wda::WdaAuthInfo;
