//! Whole-digest authentication: the trusted store keeps a hash of the
//! canonical digest bytes; the user recomputes it over whatever the responder
//! sent and also checks the structure is a well-formed digest.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::digest::QDigest;
use crate::error::{Error, Result};
use crate::format::write_digest;
use crate::validate::{validate, ValidityReport};

/// Name of the hash applied to the canonical serialization.
pub const WDA_HASH: &str = "sha256";
pub const TEXT_PREFIX: &str = "wda1:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WdaAuthInfo {
    pub hash: [u8; 32],
    pub sigma: u64,
    pub k: u64,
}

pub fn digest_hash(q: &QDigest) -> [u8; 32] {
    Sha256::digest(write_digest(q).as_bytes()).into()
}

pub fn wda_authinfo(q: &QDigest) -> WdaAuthInfo {
    WdaAuthInfo {
        hash: digest_hash(q),
        sigma: q.sigma(),
        k: q.k(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WdaReject {
    ParameterMismatch,
    HashMismatch,
    InvalidStructure,
    SizeBound,
}

impl fmt::Display for WdaReject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WdaReject::ParameterMismatch => "parameter-mismatch",
            WdaReject::HashMismatch => "hash-mismatch",
            WdaReject::InvalidStructure => "invalid-structure",
            WdaReject::SizeBound => "size-bound",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WdaVerdict {
    pub rejected: Option<WdaReject>,
    pub report: ValidityReport,
}

impl WdaVerdict {
    pub fn accepted(&self) -> bool {
        self.rejected.is_none()
    }
}

/// Accepts iff parameters match, the hash matches, and the received digest
/// satisfies both count properties within the `4k + 1` size bound.
pub fn wda_verify(received: &QDigest, auth: &WdaAuthInfo) -> WdaVerdict {
    let report = validate(received);
    let rejected = if received.sigma() != auth.sigma || received.k() != auth.k {
        Some(WdaReject::ParameterMismatch)
    } else if !ct_eq(&digest_hash(received), &auth.hash) {
        Some(WdaReject::HashMismatch)
    } else if !report.is_qdigest() {
        Some(WdaReject::InvalidStructure)
    } else if report.size as u128 > crate::validate::size_bound(received.k()) {
        Some(WdaReject::SizeBound)
    } else {
        None
    };
    WdaVerdict { rejected, report }
}

fn ct_eq(a: &[u8; 32], b: &[u8; 32]) -> bool {
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

impl fmt::Display for WdaAuthInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{TEXT_PREFIX}{} sigma={} k={}",
            hex::encode(self.hash),
            self.sigma,
            self.k
        )
    }
}

impl FromStr for WdaAuthInfo {
    type Err = Error;

    /// Parses the single-line `wda1:<hex> sigma=<s> k=<k>` form; one
    /// trailing newline is tolerated.
    fn from_str(s: &str) -> Result<Self> {
        let line = s.strip_suffix('\n').unwrap_or(s);
        let bad = |why: &str| Error::parse(1, format!("bad WDA auth info: {why}"));
        let mut toks = line.split(' ');
        let hexpart = toks
            .next()
            .and_then(|t| t.strip_prefix(TEXT_PREFIX))
            .ok_or_else(|| bad("missing wda1: prefix"))?;
        if hexpart.len() != 64 || hexpart.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(bad("expected 64 lowercase hex digits"));
        }
        let mut hash = [0u8; 32];
        hex::decode_to_slice(hexpart, &mut hash).map_err(|_| bad("not hex"))?;
        let mut field = |key: &str| -> Result<u64> {
            toks.next()
                .and_then(|t| t.strip_prefix(key))
                .and_then(|t| t.strip_prefix('='))
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(&format!("missing {key}=")))
        };
        let sigma = field("sigma")?;
        let k = field("k")?;
        if toks.next().is_some() {
            return Err(bad("trailing fields"));
        }
        Ok(WdaAuthInfo { hash, sigma, k })
    }
}
