//! Exact discrete variates used by the chain and the graph sampler, and the
//! per-replicate RNG stream construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};

/// RNG used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Independent stream for replicate `index` under `master_seed`.
///
/// The ChaCha stream id carries the replicate index, so streams never overlap
/// and do not depend on how replicates are scheduled.
pub fn replicate_rng(master_seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// `Bin(n, p)`. Inversion for small `n·p`, BTPE otherwise.
pub fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p)
        .expect("probability checked to lie in (0,1)")
        .sample(rng)
}

/// Number of marked items among `draws` taken without replacement from an urn
/// of `total` items of which `marked` are marked.
pub fn hypergeometric<R: Rng + ?Sized>(rng: &mut R, total: u64, marked: u64, draws: u64) -> u64 {
    debug_assert!(marked <= total && draws <= total);
    if draws == 0 || marked == 0 {
        return 0;
    }
    if marked == total {
        return draws;
    }
    if draws == total {
        return marked;
    }
    Hypergeometric::new(total, marked, draws)
        .expect("urn parameters are consistent")
        .sample(rng)
}

/// `Multinomial(trials; probs)` by sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining = trials;
    let mut mass_left: f64 = probs.iter().sum();
    for (slot, &p) in out.iter_mut().zip(probs) {
        if remaining == 0 {
            break;
        }
        let q = if mass_left > 0.0 {
            (p / mass_left).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let x = binomial(rng, remaining, q);
        *slot = x;
        remaining -= x;
        mass_left -= p;
    }
    // leftover only when the trailing probabilities summed to ~0 through rounding
    if remaining > 0 {
        if let Some(last) = probs.iter().rposition(|&p| p > 0.0) {
            out[last] += remaining;
        }
    }
    out
}

/// Multivariate hypergeometric: `draws` balls without replacement from an urn with
/// `counts[l]` balls of colour `l`, drawn colour by colour.
pub fn multivariate_hypergeometric<R: Rng + ?Sized>(
    rng: &mut R,
    counts: &[u64],
    draws: u64,
) -> Vec<u64> {
    let mut total: u64 = counts.iter().sum();
    assert!(
        draws <= total,
        "cannot draw {draws} balls from an urn of {total}"
    );
    let mut remaining = draws;
    let mut out = vec![0u64; counts.len()];
    for (slot, &colour) in out.iter_mut().zip(counts) {
        if remaining == 0 {
            break;
        }
        let x = hypergeometric(rng, total, colour, remaining);
        *slot = x;
        remaining -= x;
        total -= colour;
    }
    out
}

/// Index `l` with probability `weights[l] / Σ weights`. `None` when all weights are zero.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[u64]) -> Option<usize> {
    let total: u64 = weights.iter().sum();
    if total == 0 {
        return None;
    }
    let mut ticket = rng.random_range(0..total);
    for (l, &w) in weights.iter().enumerate() {
        if ticket < w {
            return Some(l);
        }
        ticket -= w;
    }
    unreachable!("ticket below total weight")
}
