//! Source / responder / user simulation, plus the deployment patterns built
//! on top of plain digests: cumulative and windowed digests, and privilege
//! levels that expose differently compressed digests.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::Deserialize;

use crate::commitment::{commit_digest, Commitment};
use crate::digest::{FrequencySet, QDigest};
use crate::error::{Error, Result};
use crate::format::write_digest;
use crate::kvc_qa::{
    aqq, default_subtree_roots, malicious_aqq_omit_left, precompute_subtrees, qqv, qqv_accelerated,
};
use crate::node::NodeId;
use crate::quantile::Quantile;
use crate::wda::{wda_authinfo, wda_verify, WdaAuthInfo};
use crate::Count;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthScheme {
    Wda,
    KvcQa,
    KvcQaAccelerated,
}

impl std::str::FromStr for AuthScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wda" => Ok(AuthScheme::Wda),
            "kvc_qa" => Ok(AuthScheme::KvcQa),
            "kvc_qa_accelerated" => Ok(AuthScheme::KvcQaAccelerated),
            other => Err(Error::InvalidParameter(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponderBehavior {
    Honest,
    /// Leave these buckets out of the counted prefix (hidden in the
    /// remainder under KVC-QA, dropped from the digest under WDA).
    OmitLeft(BTreeSet<NodeId>),
    /// Serve a digest with one node's count shifted by `delta`.
    TamperCount {
        node: NodeId,
        delta: i128,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyScript {
    pub responder: ResponderBehavior,
    pub scheme: AuthScheme,
    pub queries: Vec<Quantile>,
}

/// One line of a session transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryRecord {
    pub q: Quantile,
    pub answer: u64,
    pub accepted: bool,
    pub insert_ops: u64,
    pub bytes: u64,
}

impl fmt::Display for QueryRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "query={} answer={} accepted={} insert_ops={} bytes={}",
            self.q, self.answer, self.accepted as u8, self.insert_ops, self.bytes
        )
    }
}

/// Authentication material published by the source.
#[derive(Debug, Clone)]
pub struct TrustedStore {
    pub wda: WdaAuthInfo,
    pub commitment: Commitment,
    pub n: Count,
    pub subtrees: BTreeMap<NodeId, crate::kvc_qa::SubtreeAuth>,
}

impl TrustedStore {
    pub fn publish(q: &QDigest) -> Result<Self> {
        Ok(TrustedStore {
            wda: wda_authinfo(q),
            commitment: commit_digest(q),
            n: q.n(),
            subtrees: precompute_subtrees(q, &default_subtree_roots(q.sigma()))?,
        })
    }
}

fn tampered(q: &QDigest, node: NodeId, delta: i128) -> Result<QDigest> {
    let old = q.count(node) as i128;
    let new = (old + delta).max(0) as Count;
    q.with_count(node, new)
}

fn without(q: &QDigest, omit: &BTreeSet<NodeId>) -> Result<QDigest> {
    omit.iter()
        .try_fold(q.clone(), |acc, &b| acc.with_count(b, 0))
}

/// Runs every scripted query against a digest the source built from `data`.
pub fn run_session(
    script: &PartyScript,
    data: &FrequencySet,
    k: u64,
    sigma: u64,
) -> Result<Vec<QueryRecord>> {
    run_session_on(script, &QDigest::build(data, k, sigma)?)
}

/// Runs every scripted query against an already-built source digest.
pub fn run_session_on(script: &PartyScript, source: &QDigest) -> Result<Vec<QueryRecord>> {
    if let ResponderBehavior::TamperCount { delta: 0, .. } = script.responder {
        return Err(Error::InvalidParameter(
            "tamper delta must be non-zero".into(),
        ));
    }
    let store = TrustedStore::publish(source)?;
    script
        .queries
        .iter()
        .map(|&q| match script.scheme {
            AuthScheme::Wda => wda_query(script, source, &store, q),
            AuthScheme::KvcQa | AuthScheme::KvcQaAccelerated => {
                kvc_query(script, source, &store, q)
            }
        })
        .collect()
}

fn wda_query(
    script: &PartyScript,
    source: &QDigest,
    store: &TrustedStore,
    q: Quantile,
) -> Result<QueryRecord> {
    let sent = match &script.responder {
        ResponderBehavior::Honest => source.clone(),
        ResponderBehavior::OmitLeft(omit) => without(source, omit)?,
        ResponderBehavior::TamperCount { node, delta } => tampered(source, *node, *delta)?,
    };
    let verdict = wda_verify(&sent, &store.wda);
    Ok(QueryRecord {
        q,
        answer: sent.quantile(q).unwrap_or(0),
        accepted: verdict.accepted(),
        insert_ops: 0,
        bytes: write_digest(&sent).len() as u64,
    })
}

fn kvc_query(
    script: &PartyScript,
    source: &QDigest,
    store: &TrustedStore,
    q: Quantile,
) -> Result<QueryRecord> {
    let proof = match &script.responder {
        ResponderBehavior::Honest => aqq(source, q)?,
        ResponderBehavior::OmitLeft(omit) => malicious_aqq_omit_left(source, q, omit)?,
        ResponderBehavior::TamperCount { node, delta } => {
            let forged = tampered(source, *node, *delta)?;
            let mut p = if forged.n() == 0 {
                aqq(source, q)?
            } else {
                aqq(&forged, q)?
            };
            // Claim the published total so the forgery is not trivially refused.
            p.n = store.n;
            p
        }
    };
    let (sigma, width) = (source.sigma(), source.leaf_width());
    let stats = match script.scheme {
        AuthScheme::KvcQaAccelerated => qqv_accelerated(
            &proof,
            &store.commitment,
            &store.subtrees,
            store.n,
            sigma,
            width,
        ),
        _ => qqv(&proof, &store.commitment, store.n, sigma, width),
    };
    Ok(QueryRecord {
        q,
        answer: proof.answer,
        accepted: stats.accepted,
        insert_ops: stats.insert_ops,
        bytes: proof.to_string().len() as u64,
    })
}

/// Running merge of a stream of digests, either over the whole history or
/// over a sliding window of the most recent `w` digests.
#[derive(Debug, Clone)]
pub struct CumulativeState {
    current: Option<QDigest>,
    window: Option<(usize, VecDeque<QDigest>)>,
    history_len: usize,
}

impl CumulativeState {
    pub fn full() -> Self {
        CumulativeState {
            current: None,
            window: None,
            history_len: 0,
        }
    }

    pub fn windowed(width: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidParameter(
                "window width must be positive".into(),
            ));
        }
        Ok(CumulativeState {
            current: None,
            window: Some((width, VecDeque::with_capacity(width))),
            history_len: 0,
        })
    }

    pub fn current(&self) -> Option<&QDigest> {
        self.current.as_ref()
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn window_width(&self) -> Option<usize> {
        self.window.as_ref().map(|(w, _)| *w)
    }
}

/// Folds the next digest into the cumulative state.
pub fn cumulative_update(state: &CumulativeState, next: &QDigest) -> Result<CumulativeState> {
    let mut out = state.clone();
    out.current = Some(match &mut out.window {
        None => match &state.current {
            None => next.clone(),
            Some(cur) => cur.merge(next)?,
        },
        Some((width, recent)) => {
            if let Some(first) = recent.front() {
                first.check_compatible(next)?;
            }
            recent.push_back(next.clone());
            if recent.len() > *width {
                recent.pop_front();
            }
            cumulate_range(recent.make_contiguous())?
        }
    });
    out.history_len += 1;
    Ok(out)
}

/// Cumulative digest over a fixed range of digests: the first one as is,
/// then merged left to right with the rest.
pub fn cumulate_range(digests: &[QDigest]) -> Result<QDigest> {
    let (first, rest) = digests
        .split_first()
        .ok_or_else(|| Error::InvalidParameter("no digests to cumulate".into()))?;
    rest.iter().try_fold(first.clone(), |acc, d| acc.merge(d))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivacyLevel {
    pub name: String,
    pub k: u64,
    /// Levels cut off the bottom of the tree (coarse-grained leaves).
    pub coarse_levels: u32,
}

#[derive(Debug, Clone)]
pub struct ProfileEntry {
    pub level: PrivacyLevel,
    pub digest: QDigest,
    pub wda: WdaAuthInfo,
    pub commitment: Commitment,
}

/// One digest per privilege level, most privileged first.
#[derive(Debug, Clone)]
pub struct PrivacyProfile {
    pub entries: Vec<ProfileEntry>,
}

impl PrivacyProfile {
    pub fn get(&self, name: &str) -> Option<&ProfileEntry> {
        self.entries.iter().find(|e| e.level.name == name)
    }
}

/// Builds a digest and its authentication info for every privilege level.
/// `k` must strictly decrease and the coarse cut must not decrease from the
/// most to the least privileged level.
pub fn build_privacy_profile(
    data: &FrequencySet,
    sigma: u64,
    levels: &[PrivacyLevel],
) -> Result<PrivacyProfile> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("no privilege levels".into()));
    }
    for pair in levels.windows(2) {
        if pair[1].k >= pair[0].k {
            return Err(Error::InvalidParameter(format!(
                "k must strictly decrease with privilege: {} then {}",
                pair[0].k, pair[1].k
            )));
        }
        if pair[1].coarse_levels < pair[0].coarse_levels {
            return Err(Error::InvalidParameter(
                "coarse cut must not decrease with privilege".into(),
            ));
        }
    }
    let mut names = BTreeSet::new();
    let entries = levels
        .iter()
        .map(|level| {
            if !names.insert(level.name.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate level {:?}",
                    level.name
                )));
            }
            let digest = QDigest::build_coarse(data, level.k, sigma, level.coarse_levels)?;
            Ok(ProfileEntry {
                level: level.clone(),
                wda: wda_authinfo(&digest),
                commitment: commit_digest(&digest),
                digest,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrivacyProfile { entries })
}

/// Parses `name:k[:coarse],...`, e.g. `p1:64,p2:8:1,p3:1:2`.
pub fn parse_levels(spec: &str) -> Result<Vec<PrivacyLevel>> {
    spec.split(',')
        .map(|item| {
            let bad =
                || Error::InvalidParameter(format!("bad level {item:?}, expected name:k[:coarse]"));
            let mut parts = item.trim().split(':');
            let name = parts.next().filter(|s| !s.is_empty()).ok_or_else(bad)?;
            let k = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let coarse_levels = match parts.next() {
                Some(s) => s.parse().map_err(|_| bad())?,
                None => 0,
            };
            if parts.next().is_some() {
                return Err(bad());
            }
            Ok(PrivacyLevel {
                name: name.to_string(),
                k,
                coarse_levels,
            })
        })
        .collect()
}

/// Scenario file contents (TOML).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scheme: String,
    pub sigma: u64,
    pub k: u64,
    pub queries: Vec<String>,
    #[serde(default)]
    pub behavior: Option<BehaviorSpec>,
    #[serde(default)]
    pub data: Vec<(u64, u64)>,
    #[serde(default)]
    pub batches: Vec<Vec<(u64, u64)>>,
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub levels: Vec<LevelSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorSpec {
    pub kind: String,
    #[serde(default)]
    pub nodes: Vec<u64>,
    #[serde(default)]
    pub node: Option<u64>,
    #[serde(default)]
    pub delta: Option<i64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub name: String,
    pub k: u64,
    #[serde(default)]
    pub coarse: u32,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(0, e.to_string()))
    }

    pub fn script(&self) -> Result<PartyScript> {
        let queries = self
            .queries
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<Quantile>>>()?;
        let check = |i: u64| NodeId::new(i, self.sigma);
        let responder = match &self.behavior {
            None => ResponderBehavior::Honest,
            Some(b) => match b.kind.as_str() {
                "honest" => ResponderBehavior::Honest,
                "omit_left" => ResponderBehavior::OmitLeft(
                    b.nodes.iter().map(|&i| check(i)).collect::<Result<_>>()?,
                ),
                "tamper_count" => {
                    let node = b.node.ok_or_else(|| {
                        Error::InvalidParameter("tamper_count needs `node`".into())
                    })?;
                    let delta = b.delta.ok_or_else(|| {
                        Error::InvalidParameter("tamper_count needs `delta`".into())
                    })?;
                    ResponderBehavior::TamperCount {
                        node: check(node)?,
                        delta: delta as i128,
                    }
                }
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown behavior {other:?}"
                    )))
                }
            },
        };
        Ok(PartyScript {
            responder,
            scheme: self.scheme.parse()?,
            queries,
        })
    }

    /// Runs the scenario and returns the transcript text. Privilege levels,
    /// when present, each get their own block introduced by a `#` line.
    pub fn run(&self) -> Result<String> {
        let script = self.script()?;
        let data = FrequencySet::from_pairs(self.data.iter().map(|&(v, m)| (v, m as Count)))?;
        let mut blocks: Vec<(Option<String>, Vec<QueryRecord>)> = Vec::new();
        if !self.levels.is_empty() {
            let levels: Vec<PrivacyLevel> = self
                .levels
                .iter()
                .map(|l| PrivacyLevel {
                    name: l.name.clone(),
                    k: l.k,
                    coarse_levels: l.coarse,
                })
                .collect();
            let profile = build_privacy_profile(&data, self.sigma, &levels)?;
            for e in &profile.entries {
                let header = format!(
                    "# level={} k={} leafwidth={} buckets={}",
                    e.level.name,
                    e.level.k,
                    e.digest.leaf_width(),
                    e.digest.len()
                );
                blocks.push((Some(header), run_session_on(&script, &e.digest)?));
            }
        } else {
            let digest = if self.batches.is_empty() {
                QDigest::build(&data, self.k, self.sigma)?
            } else {
                let mut state = match self.window {
                    Some(w) => CumulativeState::windowed(w)?,
                    None => CumulativeState::full(),
                };
                for batch in &self.batches {
                    let f = FrequencySet::from_pairs(batch.iter().map(|&(v, m)| (v, m as Count)))?;
                    state = cumulative_update(&state, &QDigest::build(&f, self.k, self.sigma)?)?;
                }
                state.current().cloned().expect("at least one batch")
            };
            blocks.push((None, run_session_on(&script, &digest)?));
        }
        let mut out = String::new();
        for (header, records) in blocks {
            if let Some(h) = header {
                out.push_str(&h);
                out.push('\n');
            }
            for r in records {
                out.push_str(&r.to_string());
                out.push('\n');
            }
        }
        Ok(out)
    }
}
