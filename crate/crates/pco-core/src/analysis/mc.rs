//! Monte Carlo estimation of bounded reachability probabilities.
//!
//! Paths are simulated with per-path ChaCha8 generators whose seeds are
//! derived from the master seed, so estimates are reproducible for a given
//! seed regardless of evaluation order.

use super::dtmc::SparseDtmc;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Point estimate with a 95% normal-approximation confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub half_width: f64,
    pub hits: u64,
    pub paths: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn path_seed(master: u64, path: u64) -> u64 {
    splitmix64(master ^ splitmix64(path.wrapping_add(1)))
}

fn step(dtmc: &SparseDtmc, state: usize, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let row = dtmc.row(state);
    for &(t, p) in row {
        acc += p;
        if u < acc {
            return t;
        }
    }
    row.last().expect("stochastic row is nonempty").0
}

/// Estimates the probability of reaching a `target` state from the initial
/// state within `horizon` steps, from `paths` simulated paths.
pub fn mc_estimate(
    dtmc: &SparseDtmc,
    target: &[bool],
    paths: u64,
    horizon: u64,
    seed: u64,
) -> McEstimate {
    assert!(paths > 0, "at least one path is required");
    let mut hits = 0u64;
    for i in 0..paths {
        let mut rng = ChaCha8Rng::seed_from_u64(path_seed(seed, i));
        let mut s = dtmc.initial();
        let mut hit = target[s];
        if !hit {
            for _ in 0..horizon {
                s = step(dtmc, s, &mut rng);
                if target[s] {
                    hit = true;
                    break;
                }
            }
        }
        if hit {
            hits += 1;
        }
    }
    let estimate = hits as f64 / paths as f64;
    let half_width = 1.96 * (estimate * (1.0 - estimate) / paths as f64).sqrt();
    McEstimate {
        estimate,
        half_width,
        hits,
        paths,
    }
}
