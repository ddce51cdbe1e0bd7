//! Line-oriented text formats: frequency files and canonical digest files.
//!
//! The canonical digest encoding is also the preimage hashed by whole-digest
//! authentication, so [`write_digest`] must stay byte-stable.

use std::fmt::Write as _;

use crate::digest::{FrequencySet, QDigest};
use crate::error::{Error, Result};
use crate::Count;

pub const DIGEST_MAGIC: &str = "qdigest v1";

/// Parses `value<TAB>multiplicity` lines. Blank lines and `#` comments are
/// skipped; any run of whitespace is accepted as the separator.
pub fn parse_frequencies(text: &str) -> Result<FrequencySet> {
    let mut set = FrequencySet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(v), Some(m), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(i + 1, "expected `value<TAB>multiplicity`"));
        };
        let v: u64 = v
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("bad value {v:?}")))?;
        let m: Count = m
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("bad multiplicity {m:?}")))?;
        set.add(v, m)?;
    }
    Ok(set)
}

pub fn write_frequencies(set: &FrequencySet) -> String {
    let mut out = String::new();
    for (v, m) in set.iter() {
        let _ = writeln!(out, "{v}\t{m}");
    }
    out
}

/// Canonical digest bytes: header, then `index:count` in ascending index.
pub fn write_digest(q: &QDigest) -> String {
    let mut out = String::with_capacity(48 + 16 * q.len());
    let _ = writeln!(
        out,
        "{DIGEST_MAGIC} sigma={} k={} leafwidth={}",
        q.sigma(),
        q.k(),
        q.leaf_width()
    );
    for (node, c) in q.buckets() {
        let _ = writeln!(out, "{node}:{c}");
    }
    out
}

fn header_field<'a>(tok: Option<&'a str>, key: &str) -> Result<&'a str> {
    tok.and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| Error::parse(1, format!("missing `{key}=` in header")))
}

fn parse_u64(s: &str, line: usize, what: &str) -> Result<u64> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("bad {what} {s:?}")))
}

/// Parses a digest file, accepting only its canonical encoding.
pub fn parse_digest(text: &str) -> Result<QDigest> {
    let mut lines = text.split_inclusive('\n');
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty digest file"))?;
    let header = header
        .strip_suffix('\n')
        .ok_or_else(|| Error::parse(1, "missing newline"))?;
    let rest = header
        .strip_prefix(DIGEST_MAGIC)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::parse(1, format!("header must start with `{DIGEST_MAGIC}`")))?;
    let mut toks = rest.split(' ');
    let sigma = parse_u64(header_field(toks.next(), "sigma")?, 1, "sigma")?;
    let k = parse_u64(header_field(toks.next(), "k")?, 1, "k")?;
    let width = parse_u64(header_field(toks.next(), "leafwidth")?, 1, "leaf width")?;
    if toks.next().is_some() {
        return Err(Error::parse(1, "trailing header fields"));
    }
    let mut buckets = Vec::new();
    let mut prev = 0u64;
    for (i, raw) in lines.enumerate() {
        let lineno = i + 2;
        let line = raw
            .strip_suffix('\n')
            .ok_or_else(|| Error::parse(lineno, "missing newline"))?;
        let (idx, c) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(lineno, "expected `index:count`"))?;
        let idx = parse_u64(idx, lineno, "index")?;
        let c: Count = c
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad count {c:?}")))?;
        if c == 0 {
            return Err(Error::parse(lineno, "zero counts are not stored"));
        }
        if idx <= prev {
            return Err(Error::parse(lineno, "indices must be strictly ascending"));
        }
        prev = idx;
        buckets.push((idx, c));
    }
    let q = QDigest::from_buckets(sigma, k, width, buckets)?;
    if write_digest(&q) != text {
        return Err(Error::parse(0, "digest encoding is not canonical"));
    }
    Ok(q)
}
