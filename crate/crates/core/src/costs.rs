//! Cost accounting for WDA versus KVC-QA over a sweep of parameters.

use std::fmt::Write as _;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::commitment::commit_digest;
use crate::digest::{FrequencySet, QDigest};
use crate::error::Result;
use crate::format::write_digest;
use crate::kvc_qa::{
    aqq_with_stats, default_subtree_roots, precompute_subtrees, qqv, qqv_accelerated,
};
use crate::quantile::Quantile;
use crate::wda::{wda_authinfo, wda_verify};

#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub sigma: u64,
    pub k: u64,
    pub q: Quantile,
    pub buckets: usize,
    /// Bytes the WDA user receives and hashes (the canonical digest).
    pub wda_bytes: u64,
    pub wda_verify_nanos: u128,
    pub prover_inserts: u64,
    pub verifier_inserts: u64,
    pub accelerated_inserts: u64,
    pub proof_bytes: u64,
    pub kvc_verify_nanos: u128,
}

/// Uniform random values over `[1, sigma]`.
pub fn random_frequencies(rng: &mut impl Rng, sigma: u64, values: usize) -> FrequencySet {
    let mut f = FrequencySet::new();
    for _ in 0..values {
        f.add(rng.gen_range(1..=sigma), 1).expect("small counts");
    }
    f
}

/// Builds one random digest per `(sigma, k)` pair and measures both schemes
/// for every quantile.
pub fn cost_sweep(
    sigmas: &[u64],
    ks: &[u64],
    qs: &[Quantile],
    values: usize,
    seed: u64,
) -> Result<Vec<CostRow>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &sigma in sigmas {
        for &k in ks {
            let data = random_frequencies(&mut rng, sigma, values);
            let digest = QDigest::build(&data, k, sigma)?;
            let wda = wda_authinfo(&digest);
            let commitment = commit_digest(&digest);
            let subtrees = precompute_subtrees(&digest, &default_subtree_roots(sigma))?;
            for &q in qs {
                if digest.n() == 0 {
                    continue;
                }
                let started = Instant::now();
                let verdict = wda_verify(&digest, &wda);
                let wda_verify_nanos = started.elapsed().as_nanos();
                debug_assert!(verdict.accepted());

                let (proof, prover) = aqq_with_stats(&digest, q)?;
                let started = Instant::now();
                let plain = qqv(&proof, &commitment, digest.n(), sigma, 1);
                let kvc_verify_nanos = started.elapsed().as_nanos();
                let fast = qqv_accelerated(&proof, &commitment, &subtrees, digest.n(), sigma, 1);
                debug_assert!(plain.accepted && fast.accepted);

                rows.push(CostRow {
                    sigma,
                    k,
                    q,
                    buckets: digest.len(),
                    wda_bytes: write_digest(&digest).len() as u64,
                    wda_verify_nanos,
                    prover_inserts: prover.insert_ops,
                    verifier_inserts: plain.insert_ops,
                    accelerated_inserts: fast.insert_ops,
                    proof_bytes: proof.to_string().len() as u64,
                    kvc_verify_nanos,
                });
            }
        }
    }
    Ok(rows)
}

pub fn format_table(rows: &[CostRow]) -> String {
    let mut out = String::from(
        "sigma\tk\tq\tbuckets\twda_bytes\twda_ns\tprover_ins\tverifier_ins\taccel_ins\tproof_bytes\tkvc_ns\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.sigma,
            r.k,
            r.q,
            r.buckets,
            r.wda_bytes,
            r.wda_verify_nanos,
            r.prover_inserts,
            r.verifier_inserts,
            r.accelerated_inserts,
            r.proof_bytes,
            r.kvc_verify_nanos
        );
    }
    out
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_is_deterministic_in_counts() {
        let qs = [Quantile::ZERO, Quantile::ONE];
        let a = cost_sweep(&[16, 32], &[4], &qs, 200, 7).unwrap();
        let b = cost_sweep(&[16, 32], &[4], &qs, 200, 7).unwrap();
        assert_eq!(a.len(), 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(
                (
                    x.buckets,
                    x.verifier_inserts,
                    x.prover_inserts,
                    x.proof_bytes
                ),
                (
                    y.buckets,
                    y.verifier_inserts,
                    y.prover_inserts,
                    y.proof_bytes
                )
            );
        }
        // q = 1 stops at the last bucket, which lies in the right half.
        assert!(a[1].verifier_inserts > 15 && a[1].verifier_inserts <= 31);
        assert_eq!(a[1].prover_inserts, 31 - a[1].verifier_inserts);
        assert!(format_table(&a).lines().count() == 5);
    }

    #[test]
    fn slope_of_a_line() {
        let s = fit_slope(&[(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)]);
        assert!((s - 2.0).abs() < 1e-12);
    }
}
