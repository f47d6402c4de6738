//! The referral chain `X_n = (A_n, B_n, U_n)` sampled from its conditional laws.
//!
//! One step: pick the interviewee's block in proportion to the active coupons,
//! draw newly named contacts `H` from the hidden pool and re-named contacts `K`
//! from the known-but-inactive pool, then hand out at most `c` coupons among
//! the `Z = H + K` candidates uniformly without replacement.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::random::{
    binomial, categorical, hypergeometric, multinomial, multivariate_hypergeometric,
};
use crate::sbm::{BlockSizes, SbmParams};
use crate::scalar::Real;

const SEED_REJECTION_CAP: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("no active coupons left")]
    NoActiveCoupons,
    #[error("seed draw exceeded a block size in {attempts} consecutive attempts")]
    SeedsExceedBlock { attempts: usize },
    #[error(
        "block sizes ({got} blocks, total {total}) do not match parameters ({m} blocks, N = {n})"
    )]
    SizeMismatch {
        got: usize,
        total: u64,
        m: usize,
        n: usize,
    },
}

/// Size of the pool the newly named contacts `H_n` are drawn from.
///
/// `Exact` is the number of individuals actually still hidden when the interviewee
/// names contacts, `N_l − (A_{n−1} − I_n) − B_{n−1} − U_n`; this is the law of the
/// process run on an explicit graph. `Literal` is `N_l − A_{n−1} − B_{n−1} − U_n`,
/// which also removes the interviewee from its own block's pool a second time. The
/// two agree in the fluid limit, but the per-step `O(1/N)` gap accumulates to an
/// `O(1)` shift in `n₀`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenPool {
    #[default]
    Exact,
    Literal,
}

/// Per-block counts of active (`a`), named-but-inactive (`b`) and interviewed (`u`) individuals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainState {
    pub a: Vec<u64>,
    pub b: Vec<u64>,
    pub u: Vec<u64>,
    pub sizes: BlockSizes,
    pub step: usize,
}

impl ChainState {
    pub fn n_blocks(&self) -> usize {
        self.a.len()
    }

    pub fn active_total(&self) -> u64 {
        self.a.iter().sum()
    }

    pub fn inactive_total(&self) -> u64 {
        self.b.iter().sum()
    }

    pub fn interviewed_total(&self) -> u64 {
        self.u.iter().sum()
    }

    /// Individuals of block `l` not yet active, named or interviewed.
    pub fn hidden(&self, l: usize) -> u64 {
        self.sizes
            .get(l)
            .saturating_sub(self.a[l] + self.b[l] + self.u[l])
    }

    /// `[a_1..a_m, b_1..b_m, u_1..u_m]`.
    pub fn flat_counts(&self) -> Vec<u64> {
        self.a
            .iter()
            .chain(&self.b)
            .chain(&self.u)
            .copied()
            .collect()
    }

    /// Conservation and non-negativity check; `Err` names the first violated block.
    pub fn check_conservation(&self) -> Result<(), usize> {
        for l in 0..self.n_blocks() {
            if self.a[l] + self.b[l] + self.u[l] > self.sizes.get(l) {
                return Err(l);
            }
        }
        Ok(())
    }
}

/// Random quantities realised during one interview.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepDraw {
    pub interviewee_block: usize,
    /// Newly named contacts per block.
    pub h: Vec<u64>,
    /// Re-named, previously known inactive contacts per block.
    pub k: Vec<u64>,
    /// Candidates `h + k`.
    pub z: Vec<u64>,
    pub coupons: Vec<u64>,
    /// Coupons per block that landed on previously known (`k`-type) candidates.
    /// Diagnostic only; the chain update does not depend on it.
    pub kappa: Vec<u64>,
}

/// Seeds: `A_0 ~ Multinomial(⌊seed_fraction·N⌋; π)`, resampled while some block would overflow.
pub fn init_seeds<R: Rng + ?Sized>(
    p: &SbmParams,
    sizes: &BlockSizes,
    rng: &mut R,
) -> Result<ChainState, SimError> {
    check_sizes(p, sizes)?;
    let m = p.n_blocks();
    let seeds = p.seed_count() as u64;
    for _ in 0..SEED_REJECTION_CAP {
        let a = multinomial(rng, seeds, p.pi());
        if a.iter().zip(sizes.as_slice()).all(|(x, n)| x <= n) {
            return Ok(ChainState {
                a,
                b: vec![0; m],
                u: vec![0; m],
                sizes: sizes.clone(),
                step: 0,
            });
        }
    }
    Err(SimError::SeedsExceedBlock {
        attempts: SEED_REJECTION_CAP,
    })
}

fn check_sizes(p: &SbmParams, sizes: &BlockSizes) -> Result<(), SimError> {
    if sizes.len() != p.n_blocks() || sizes.total() != p.n_population() as u64 {
        return Err(SimError::SizeMismatch {
            got: sizes.len(),
            total: sizes.total(),
            m: p.n_blocks(),
            n: p.n_population(),
        });
    }
    Ok(())
}

/// Block of the next interviewee, chosen with probability `a_l / ‖a‖`.
pub fn select_interviewee<R: Rng + ?Sized>(s: &ChainState, rng: &mut R) -> Result<usize, SimError> {
    categorical(rng, &s.a).ok_or(SimError::NoActiveCoupons)
}

/// Contacts named by an interviewee of block `k`, drawn from the pools recorded in `s`.
///
/// `h_l ~ Bin(N_l − a_l − b_l − u_l, λ_kl/N)` and `k_l ~ Bin(b_l, λ_kl/N)`, all independent.
pub fn sample_contacts<R: Rng + ?Sized>(
    s: &ChainState,
    interviewee_block: usize,
    p: &SbmParams,
    rng: &mut R,
) -> (Vec<u64>, Vec<u64>, Vec<u64>) {
    let m = s.n_blocks();
    let mut h = vec![0; m];
    let mut k = vec![0; m];
    for l in 0..m {
        let prob = p.edge_probability(interviewee_block, l);
        h[l] = binomial(rng, s.hidden(l), prob);
        k[l] = binomial(rng, s.b[l], prob);
    }
    let z = h.iter().zip(&k).map(|(x, y)| x + y).collect();
    (h, k, z)
}

/// Coupon allocation: all candidates when `‖z‖ ≤ c`, otherwise a multivariate
/// hypergeometric draw of `c` candidates.
pub fn allocate_coupons<R: Rng + ?Sized>(z: &[u64], cap: usize, rng: &mut R) -> Vec<u64> {
    let total: u64 = z.iter().sum();
    if total <= cap as u64 {
        z.to_vec()
    } else {
        multivariate_hypergeometric(rng, z, cap as u64)
    }
}

/// One interview. Applies `A_n = A_{n−1} − I_n + C_n`, `B_n = B_{n−1} + H_n − C_n`,
/// `U_n = U_{n−1} + I_n`.
pub fn step<R: Rng + ?Sized>(
    s: &ChainState,
    p: &SbmParams,
    rng: &mut R,
) -> Result<(ChainState, StepDraw), SimError> {
    step_with_pool(s, p, HiddenPool::default(), rng)
}

pub fn step_with_pool<R: Rng + ?Sized>(
    s: &ChainState,
    p: &SbmParams,
    pool: HiddenPool,
    rng: &mut R,
) -> Result<(ChainState, StepDraw), SimError> {
    let interviewee = select_interviewee(s, rng)?;
    let mut next = s.clone();
    next.u[interviewee] += 1;
    let (h, k, z) = match pool {
        HiddenPool::Literal => sample_contacts(&next, interviewee, p, rng),
        HiddenPool::Exact => {
            let mut named = next.clone();
            named.a[interviewee] -= 1;
            sample_contacts(&named, interviewee, p, rng)
        }
    };
    let coupons = allocate_coupons(&z, p.coupon_cap(), rng);
    let kappa: Vec<u64> = (0..s.n_blocks())
        .map(|l| hypergeometric(rng, z[l], k[l], coupons[l]))
        .collect();

    next.a[interviewee] -= 1;
    for l in 0..s.n_blocks() {
        next.a[l] += coupons[l];
        // coupons never exceed the candidates, and candidates are either new (h) or in b
        next.b[l] = next.b[l] + h[l] - coupons[l];
    }
    next.step += 1;
    Ok((
        next,
        StepDraw {
            interviewee_block: interviewee,
            h,
            k,
            z,
            coupons,
            kappa,
        },
    ))
}

/// Complete path of the chain from step 0 to `N`.
///
/// Only steps `0..=n₀` are stored; later steps repeat the state at `n₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n_population: usize,
    n_blocks: usize,
    sizes: BlockSizes,
    /// Flattened `[a, b, u]` rows for steps `0..=n0`.
    counts: Vec<u64>,
    n0: usize,
    pub seed: Option<u64>,
}

impl Trajectory {
    fn new(n_population: usize, first: &ChainState) -> Self {
        Trajectory {
            n_population,
            n_blocks: first.n_blocks(),
            sizes: first.sizes.clone(),
            counts: first.flat_counts(),
            n0: 0,
            seed: None,
        }
    }

    fn push(&mut self, s: &ChainState) {
        self.counts.extend(s.a.iter().chain(&s.b).chain(&s.u));
        self.n0 = s.step;
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Number of states, `N + 1`.
    pub fn len(&self) -> usize {
        self.n_population + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_population(&self) -> usize {
        self.n_population
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn sizes(&self) -> &BlockSizes {
        &self.sizes
    }

    /// Stop step: first `n` with `‖A_n‖ = 0`.
    pub fn n0(&self) -> usize {
        self.n0
    }

    /// `[a, b, u]` counts at step `n` (frozen after `n₀`).
    pub fn counts_at(&self, n: usize) -> &[u64] {
        let width = 3 * self.n_blocks;
        let row = n.min(self.n0);
        &self.counts[row * width..(row + 1) * width]
    }

    pub fn state(&self, n: usize) -> ChainState {
        let m = self.n_blocks;
        let row = self.counts_at(n);
        ChainState {
            a: row[..m].to_vec(),
            b: row[m..2 * m].to_vec(),
            u: row[2 * m..].to_vec(),
            sizes: self.sizes.clone(),
            step: n,
        }
    }

    /// `(‖A_n‖ + ‖B_n‖) / N`.
    pub fn discovered_fraction(&self, n: usize) -> f64 {
        let m = self.n_blocks;
        let row = self.counts_at(n);
        row[..2 * m].iter().sum::<u64>() as f64 / self.n_population as f64
    }

    pub fn interviewed_total(&self, n: usize) -> u64 {
        self.counts_at(n)[2 * self.n_blocks..].iter().sum()
    }

    pub(crate) fn from_states(n_population: usize, states: &[ChainState]) -> Self {
        let mut t = Trajectory::new(n_population, &states[0]);
        for s in &states[1..] {
            t.push(s);
        }
        t
    }
}

/// Runs the chain from fresh seeds until the active coupons run out.
pub fn run<R: Rng + ?Sized>(
    p: &SbmParams,
    sizes: &BlockSizes,
    rng: &mut R,
) -> Result<Trajectory, SimError> {
    run_with_observer(p, sizes, rng, |_, _| {})
}

/// [`run`], calling `observe(state_after, draw)` after each step.
pub fn run_with_observer<R: Rng + ?Sized>(
    p: &SbmParams,
    sizes: &BlockSizes,
    rng: &mut R,
    observe: impl FnMut(&ChainState, &StepDraw),
) -> Result<Trajectory, SimError> {
    run_with_pool(p, sizes, HiddenPool::default(), rng, observe)
}

pub fn run_with_pool<R: Rng + ?Sized>(
    p: &SbmParams,
    sizes: &BlockSizes,
    pool: HiddenPool,
    rng: &mut R,
    mut observe: impl FnMut(&ChainState, &StepDraw),
) -> Result<Trajectory, SimError> {
    let mut state = init_seeds(p, sizes, rng)?;
    let mut traj = Trajectory::new(p.n_population(), &state);
    while state.active_total() > 0 && state.step < p.n_population() {
        let (next, draw) = step_with_pool(&state, p, pool, rng)?;
        observe(&next, &draw);
        traj.push(&next);
        state = next;
    }
    Ok(traj)
}

/// `t ↦ X_{⌊Nt⌋} / N` on `[0, 1]`: right-continuous, breakpoints at `n / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenormalizedPath<T> {
    n_population: usize,
    n_blocks: usize,
    n0: usize,
    /// Rows for steps `0..=n0`, each `[a, b, u] / N`.
    values: Vec<T>,
}

pub fn renormalize_path<T: Real>(t: &Trajectory) -> RenormalizedPath<T> {
    let scale = T::of_usize(t.n_population());
    let values = (0..=t.n0())
        .flat_map(|n| t.counts_at(n).iter().map(move |&c| T::of(c as f64) / scale))
        .collect();
    RenormalizedPath {
        n_population: t.n_population(),
        n_blocks: t.n_blocks(),
        n0: t.n0(),
        values,
    }
}

impl<T: Real> RenormalizedPath<T> {
    /// Builds a path directly from per-step rows (`N + 1` rows at most; missing tail rows
    /// repeat the last one).
    pub fn from_rows(n_population: usize, n_blocks: usize, rows: &[Vec<T>]) -> Self {
        assert!(!rows.is_empty() && rows.len() <= n_population + 1);
        assert!(rows.iter().all(|r| r.len() == 3 * n_blocks));
        RenormalizedPath {
            n_population,
            n_blocks,
            n0: rows.len() - 1,
            values: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn n_population(&self) -> usize {
        self.n_population
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// Value on `[n/N, (n+1)/N)`.
    pub fn step_value(&self, n: usize) -> &[T] {
        let width = 3 * self.n_blocks;
        let row = n.min(self.n0);
        &self.values[row * width..(row + 1) * width]
    }

    pub fn at(&self, t: T) -> &[T] {
        let n = (t * T::of_usize(self.n_population))
            .floor()
            .to_usize()
            .unwrap_or(0);
        self.step_value(n.min(self.n_population))
    }
}
