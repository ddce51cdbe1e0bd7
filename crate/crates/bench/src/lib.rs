//! Fixtures shared by the benchmarks in `benches/`.

use rand::rngs::StdRng;
use rand::SeedableRng;

use qdigest_core::costs::random_frequencies;
use qdigest_core::{KvcAuthInfo, QDigest};

/// Digest over `values` uniform draws, with its published KVC info.
pub fn fixture(sigma: u64, k: u64, values: usize, seed: u64) -> (QDigest, KvcAuthInfo) {
    let mut rng = StdRng::seed_from_u64(seed);
    let digest = QDigest::build(&random_frequencies(&mut rng, sigma, values), k, sigma)
        .expect("valid parameters");
    let roots = qdigest_core::kvc_qa::default_subtree_roots(sigma);
    let auth = KvcAuthInfo::publish(&digest, &roots).expect("roots in range");
    (digest, auth)
}
