// Independent reference implementations used by the integration tests. None
// of these call into the crate's algorithms; they work on plain maps.
#![allow(dead_code)]

use std::collections::BTreeMap;

use num_bigint::BigUint;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};

use qdigest_core::{FrequencySet, QDigest};

pub fn buckets_of(q: &QDigest) -> BTreeMap<u64, u128> {
    q.buckets().map(|(n, c)| (n.index(), c)).collect()
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct OracleReport {
    pub prop1: Vec<u64>,
    pub prop2: Vec<u64>,
    pub bucket_child: bool,
}

/// Direct transcription of the two count properties over index arithmetic.
pub fn oracle_check(buckets: &BTreeMap<u64, u128>, sigma: u64, k: u64) -> OracleReport {
    let n: u128 = buckets.values().sum();
    let t = n / k as u128;
    let get = |i: u64| buckets.get(&i).copied().unwrap_or(0);
    let mut r = OracleReport::default();
    for (&i, &c) in buckets {
        if c == 0 {
            continue;
        }
        if i != 1 {
            if i < sigma && c > t {
                r.prop1.push(i);
            }
            if c + get(i / 2) + get(i ^ 1) <= t {
                r.prop2.push(i);
            }
        }
        if i < sigma && (get(2 * i) > 0 || get(2 * i + 1) > 0) {
            r.bucket_child = true;
        }
    }
    r
}

pub fn oracle_nabla(buckets: &BTreeMap<u64, u128>, i: u64) -> u128 {
    let get = |i: u64| buckets.get(&i).copied().unwrap_or(0);
    if i == 1 {
        get(1)
    } else {
        get(i) + get(i / 2) + get(i ^ 1)
    }
}

/// Smallest value whose cumulative count reaches `num/den` of the total.
pub fn oracle_quantile(freqs: &[(u64, u128)], num: u64, den: u64) -> u64 {
    let mut sorted = freqs.to_vec();
    sorted.sort();
    let n: u128 = sorted.iter().map(|p| p.1).sum();
    let mut acc = 0u128;
    for &(v, c) in &sorted {
        acc += c;
        if acc * den as u128 >= num as u128 * n {
            return v;
        }
    }
    unreachable!("cumulative count reaches n")
}

fn modulus() -> BigUint {
    (BigUint::from(1u8) << 256u32) - BigUint::from(189u32)
}

/// Element of the additive multiset hash, via arbitrary-precision integers.
pub fn oracle_element(key: u64, value: u128) -> BigUint {
    let mut h = Sha256::new();
    h.update(b"qdigest-kvc-v1\0");
    h.update(key.to_be_bytes());
    h.update(value.to_be_bytes());
    BigUint::from_bytes_be(&h.finalize()) % modulus()
}

pub fn oracle_commit(records: &[(u64, u128)]) -> [u8; 32] {
    let sum = records.iter().fold(BigUint::from(0u8), |acc, &(k, v)| {
        (acc + oracle_element(k, v)) % modulus()
    });
    let bytes = sum.to_bytes_be();
    let mut out = [0u8; 32];
    out[32 - bytes.len()..].copy_from_slice(&bytes);
    out
}

/// Post-order list of all node indices of a tree with `sigma` leaves.
pub fn oracle_post_order(sigma: u64) -> Vec<u64> {
    fn walk(i: u64, sigma: u64, out: &mut Vec<u64>) {
        if i < sigma {
            walk(2 * i, sigma, out);
            walk(2 * i + 1, sigma, out);
        }
        out.push(i);
    }
    let mut out = Vec::with_capacity(2 * sigma as usize);
    walk(1, sigma, &mut out);
    out
}

/// Mixed workloads: uniform, clustered and a few heavy hitters.
pub fn random_frequencies(rng: &mut StdRng, sigma: u64, max_n: u64) -> FrequencySet {
    let n = rng.gen_range(1..=max_n);
    let mut f = FrequencySet::new();
    match rng.gen_range(0..3) {
        0 => {
            for _ in 0..n {
                f.add(rng.gen_range(1..=sigma), 1).unwrap();
            }
        }
        1 => {
            let centre = rng.gen_range(1..=sigma) as i64;
            let spread = rng.gen_range(1..=sigma.max(2) / 2) as i64;
            for _ in 0..n {
                let v = (centre + rng.gen_range(-spread..=spread)).clamp(1, sigma as i64);
                f.add(v as u64, 1).unwrap();
            }
        }
        _ => {
            let hot: Vec<u64> = (0..rng.gen_range(1..=8))
                .map(|_| rng.gen_range(1..=sigma))
                .collect();
            let mut left = n;
            while left > 0 {
                let m = rng.gen_range(1..=left.min(1 + n / 4));
                let v = if rng.gen_bool(0.7) {
                    *hot.choose(rng).unwrap()
                } else {
                    rng.gen_range(1..=sigma)
                };
                f.add(v, m as u128).unwrap();
                left -= m;
            }
        }
    }
    f
}

pub fn random_sigma(rng: &mut StdRng, lo_log: u32, hi_log: u32) -> u64 {
    1 << rng.gen_range(lo_log..=hi_log)
}
