//! Synthetic popularity data with a heavy-tailed installation count and
//! log-uniform package sizes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::popcon::PopconRecord;
use super::HarnessError;

/// Full-scale dimensions of the public dataset.
pub const FULL_PACKAGES: usize = 403;
pub const FULL_REQUESTS: u64 = 270_738;

/// Small fixture used for ledger-level checks.
pub const FIXTURE_PACKAGES: usize = 50;
pub const FIXTURE_REQUESTS: u64 = 10_000;

const MIN_BYTES: f64 = 10_000.0;
const MAX_BYTES: f64 = 50_000_000.0;

/// `packages` records whose installation counts sum to exactly `requests`,
/// ranked by count.
pub fn generate(packages: usize, requests: u64, seed: u64) -> Result<Vec<PopconRecord>, HarnessError> {
    if packages == 0 {
        return Err(HarnessError::EmptyDataset);
    }
    if requests < packages as u64 {
        return Err(HarnessError::Script(format!("{requests} requests cannot cover {packages} packages")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..packages).map(|i| 1.0 / ((i + 1) as f64).powf(0.9)).collect();
    let total: f64 = weights.iter().sum();
    let spare = requests - packages as u64;
    let mut inst: Vec<u64> = weights.iter().map(|w| 1 + (spare as f64 * w / total).floor() as u64).collect();
    let mut left = requests - inst.iter().sum::<u64>();
    let mut i = 0;
    while left > 0 {
        inst[i % packages] += 1;
        left -= 1;
        i += 1;
    }
    let mut out = Vec::with_capacity(packages);
    for (k, n) in inst.into_iter().enumerate() {
        let log = rng.gen_range(MIN_BYTES.ln()..MAX_BYTES.ln());
        let vote = rng.gen_range(0..=n);
        let recent = rng.gen_range(0..=n - vote);
        let old = n - vote - recent;
        out.push(PopconRecord {
            rank: k as u64 + 1,
            package: format!("pkg-{:03}", k + 1),
            inst: n,
            vote,
            old,
            recent,
            no_files: 0,
            size_bytes: log.exp().round() as u64,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::popcon::{parse_popcon, parse_sizes, render};

    #[test]
    fn full_scale_dimensions() {
        let d = generate(FULL_PACKAGES, FULL_REQUESTS, 1).unwrap();
        assert_eq!(d.len(), 403);
        assert_eq!(d.iter().map(|r| r.inst).sum::<u64>(), 270_738);
        assert!(d.windows(2).all(|w| w[0].inst >= w[1].inst));
        assert!(d.iter().all(|r| r.inst >= 1 && r.size_bytes > 0));
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate(50, 10_000, 9).unwrap(), generate(50, 10_000, 9).unwrap());
        assert_ne!(generate(50, 10_000, 9).unwrap(), generate(50, 10_000, 10).unwrap());
    }

    #[test]
    fn bundled_fixture_matches_generator() {
        let listing = include_str!("../../data/fixture/by_inst.txt");
        let sizes = include_str!("../../data/fixture/sizes.txt");
        let parsed = parse_popcon(listing, &parse_sizes(sizes).unwrap()).unwrap();
        let fresh = generate(FIXTURE_PACKAGES, FIXTURE_REQUESTS, 2020).unwrap();
        assert_eq!(parsed, fresh);
        assert_eq!(render(&fresh), (listing.to_string(), sizes.to_string()));
    }

    #[test]
    fn rejects_impossible_shapes() {
        assert!(generate(0, 10, 1).is_err());
        assert!(generate(10, 5, 1).is_err());
    }
}
