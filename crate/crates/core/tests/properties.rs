mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use qdigest_core::commitment::commit_digest;
use qdigest_core::format::{parse_digest, write_digest};
use qdigest_core::kvc_qa::{
    aqq, aqq_with_stats, default_subtree_roots, malicious_aqq_omit_left, precompute_subtrees, qqv,
    qqv_accelerated,
};
use qdigest_core::scenario::{
    build_privacy_profile, cumulative_update, CumulativeState, PrivacyLevel,
};
use qdigest_core::wda::{wda_authinfo, wda_verify};
use qdigest_core::{validate, FrequencySet, NodeId, QDigest, Quantile};

use common::*;

fn freqs(sigma: u64, max_n: u64) -> impl Strategy<Value = FrequencySet> {
    prop::collection::vec((1..=sigma, 1u128..=50), 0..(max_n as usize))
        .prop_map(|pairs| FrequencySet::from_pairs(pairs).unwrap())
}

fn sigma_strategy() -> impl Strategy<Value = u64> {
    (1u32..=10).prop_map(|l| 1u64 << l)
}

fn digest_strategy() -> impl Strategy<Value = QDigest> {
    (sigma_strategy(), 1u64..=64, any::<u64>()).prop_map(|(sigma, k, seed)| {
        let mut rng = StdRng::seed_from_u64(seed);
        QDigest::build(&random_frequencies(&mut rng, sigma, 3000), k, sigma).unwrap()
    })
}

fn nonempty_digest() -> impl Strategy<Value = QDigest> {
    digest_strategy().prop_filter("non-empty", |d| d.n() > 0)
}

fn quantile() -> impl Strategy<Value = Quantile> {
    (0u64..=100).prop_map(|j| Quantile::new(j, 100).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn build_is_valid_and_tight(sigma in sigma_strategy(), k in 1u64..=64, seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let f = random_frequencies(&mut rng, sigma, 5000);
        let d = QDigest::build(&f, k, sigma).unwrap();
        let oracle = oracle_check(&buckets_of(&d), sigma, k);
        prop_assert!(oracle.prop1.is_empty() && oracle.prop2.is_empty());
        prop_assert!(!oracle.bucket_child);
        prop_assert!(d.len() as u64 <= 2 * k + 1);
        prop_assert_eq!(d.n(), f.total());
    }

    #[test]
    fn compressions_agree_on_validity(a in digest_strategy(), seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let b = QDigest::build(&random_frequencies(&mut rng, a.sigma(), 3000), a.k(), a.sigma()).unwrap();
        let sum = a.sum(&b).unwrap();
        for out in [sum.recursive_compress(), sum.iterative_compress(), a.merge(&b).unwrap()] {
            let oracle = oracle_check(&buckets_of(&out), a.sigma(), a.k());
            prop_assert!(oracle.prop1.is_empty() && oracle.prop2.is_empty(), "{:?}", oracle);
            prop_assert!(out.len() as u64 <= 4 * a.k() + 1);
            prop_assert_eq!(out.n(), a.n() + b.n());
            prop_assert_eq!(validate(&out).is_valid(), true);
        }
    }

    #[test]
    fn merge_is_deterministic(a in digest_strategy(), seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let b = QDigest::build(&random_frequencies(&mut rng, a.sigma(), 1000), a.k(), a.sigma()).unwrap();
        prop_assert_eq!(write_digest(&a.merge(&b).unwrap()), write_digest(&a.merge(&b).unwrap()));
    }

    #[test]
    fn recompress_stays_valid(d in digest_strategy(), shrink in 1u64..64) {
        prop_assume!(shrink < d.k());
        let r = d.recompress(shrink).unwrap();
        prop_assert_eq!(r.n(), d.n());
        let oracle = oracle_check(&buckets_of(&r), d.sigma(), shrink);
        prop_assert!(oracle.prop1.is_empty() && oracle.prop2.is_empty());
    }

    #[test]
    fn exact_when_k_exceeds_n(sigma in sigma_strategy(), f in freqs(1024, 40), j in 0u64..=100) {
        let f = FrequencySet::from_pairs(f.iter().map(|(v, c)| ((v - 1) % sigma + 1, c))).unwrap();
        prop_assume!(!f.is_empty());
        let k = f.total() as u64 + 1;
        let d = QDigest::build(&f, k, sigma).unwrap();
        let raw: Vec<_> = f.iter().collect();
        prop_assert_eq!(d.quantile(Quantile::new(j, 100).unwrap()).unwrap(), oracle_quantile(&raw, j, 100));
    }

    #[test]
    fn digest_text_round_trips(d in digest_strategy()) {
        let text = write_digest(&d);
        let back = parse_digest(&text).unwrap();
        prop_assert_eq!(&back, &d);
        prop_assert_eq!(write_digest(&back), text);
    }

    #[test]
    fn wda_rejects_single_bucket_changes(d in nonempty_digest(), pick in any::<prop::sample::Index>(), up in any::<bool>()) {
        let auth = wda_authinfo(&d);
        prop_assert!(wda_verify(&d, &auth).accepted());
        let buckets: Vec<_> = d.buckets().collect();
        let (b, c) = buckets[pick.index(buckets.len())];
        let changed = d.with_count(b, if up { c + 1 } else { c - 1 }).unwrap();
        prop_assert!(!wda_verify(&changed, &auth).accepted());
        prop_assert!(!wda_verify(&d.with_count(b, 0).unwrap(), &auth).accepted());
    }

    #[test]
    fn verifier_inserts_follow_stop_rank(d in nonempty_digest(), quant in quantile()) {
        let proof = aqq(&d, quant).unwrap();
        let stop = proof.counted.last().unwrap().0;
        let ranks = oracle_post_order(d.sigma());
        let expected = ranks.iter().position(|&i| i == stop.index()).unwrap() as u64 + 1;
        let stats = qqv(&proof, &commit_digest(&d), d.n(), d.sigma(), 1);
        prop_assert_eq!(stats.insert_ops, expected);
    }

    #[test]
    fn omit_left_never_verifies(d in nonempty_digest(), quant in quantile(), mask in any::<u64>()) {
        let honest = aqq(&d, quant).unwrap();
        let mut omit: BTreeSet<NodeId> = honest
            .counted
            .iter()
            .enumerate()
            .filter(|(j, _)| mask >> (j % 64) & 1 == 1)
            .map(|(_, p)| p.0)
            .collect();
        if omit.is_empty() {
            omit.insert(honest.counted[0].0);
        }
        let forged = malicious_aqq_omit_left(&d, quant, &omit).unwrap();
        let c = commit_digest(&d);
        prop_assert!(!qqv(&forged, &c, d.n(), d.sigma(), 1).accepted);
        let pre = precompute_subtrees(&d, &default_subtree_roots(d.sigma())).unwrap();
        prop_assert!(!qqv_accelerated(&forged, &c, &pre, d.n(), d.sigma(), 1).accepted);
    }

    #[test]
    fn count_tampering_never_verifies(d in nonempty_digest(), quant in quantile(), pick in any::<prop::sample::Index>(), delta in 1u128..5) {
        let mut proof = aqq(&d, quant).unwrap();
        let j = pick.index(proof.counted.len());
        proof.counted[j].1 += delta;
        prop_assert!(!qqv(&proof, &commit_digest(&d), d.n(), d.sigma(), 1).accepted);
    }

    #[test]
    fn proof_text_round_trips(d in nonempty_digest(), quant in quantile()) {
        let proof = aqq(&d, quant).unwrap();
        let back: qdigest_core::QuantileProof = proof.to_string().parse().unwrap();
        prop_assert_eq!(back, proof);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn honest_proofs_verify_on_grid(d in nonempty_digest()) {
        let c = commit_digest(&d);
        let pre = precompute_subtrees(&d, &default_subtree_roots(d.sigma())).unwrap();
        let total = 2 * d.sigma() - 1;
        for j in 0..=100 {
            let quant = Quantile::new(j, 100).unwrap();
            let (proof, prover) = aqq_with_stats(&d, quant).unwrap();
            prop_assert_eq!(proof.answer, d.quantile(quant).unwrap());
            let plain = qqv(&proof, &c, d.n(), d.sigma(), 1);
            prop_assert!(plain.accepted, "q={} reason {}", quant, plain.reason);
            prop_assert_eq!(plain.insert_ops + prover.insert_ops, total);
            prop_assert!(plain.bucket_insert_ops <= d.len() as u64);
            let fast = qqv_accelerated(&proof, &c, &pre, d.n(), d.sigma(), 1);
            prop_assert!(fast.accepted);
            prop_assert!(fast.insert_ops <= plain.insert_ops);
        }
    }

    #[test]
    fn windowed_total_is_bounded(w in 1usize..6, m in 1usize..12, seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut state = CumulativeState::windowed(w).unwrap();
        let mut full = CumulativeState::full();
        let mut largest = 0;
        let mut all = 0;
        for _ in 0..m {
            let d = QDigest::build(&random_frequencies(&mut rng, 64, 300), 8, 64).unwrap();
            largest = largest.max(d.n());
            all += d.n();
            state = cumulative_update(&state, &d).unwrap();
            full = cumulative_update(&full, &d).unwrap();
            prop_assert!(state.current().unwrap().n() <= w as u128 * largest);
        }
        prop_assert_eq!(full.current().unwrap().n(), all);
        prop_assert_eq!(state.history_len(), m);
    }

    #[test]
    fn privacy_levels_shrink(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let data = random_frequencies(&mut rng, 256, 4000);
        let levels = [
            PrivacyLevel { name: "p1".into(), k: 64, coarse_levels: 0 },
            PrivacyLevel { name: "p2".into(), k: 16, coarse_levels: 1 },
            PrivacyLevel { name: "p3".into(), k: 4, coarse_levels: 3 },
        ];
        let profile = build_privacy_profile(&data, 256, &levels).unwrap();
        for pair in profile.entries.windows(2) {
            prop_assert!(pair[1].digest.len() <= 4 * pair[1].level.k as usize + 1);
            prop_assert!(pair[1].digest.leaf_width() >= pair[0].digest.leaf_width());
            prop_assert_eq!(pair[1].digest.n(), pair[0].digest.n());
        }
        for e in &profile.entries {
            prop_assert!(validate(&e.digest).is_valid());
            prop_assert!(wda_verify(&e.digest, &e.wda).accepted());
        }
    }
}

#[test]
fn commitments_do_not_collide_on_small_digests() {
    let mut seen = std::collections::HashSet::new();
    let mut texts = std::collections::HashSet::new();
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..2000 {
        let d = QDigest::build(&random_frequencies(&mut rng, 16, 30), 4, 16).unwrap();
        if texts.insert(write_digest(&d)) {
            assert!(seen.insert(commit_digest(&d).to_bytes()));
        }
    }
}
