//! Stochastic block model parameters, offspring matrix diagnostics and structure sampling.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::random::multinomial;
use crate::scalar::floor_scaled;

/// Tolerance on `Σ π = 1`.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// Largest population for which an explicit adjacency may be sampled.
pub const DEFAULT_GRAPH_CAP: usize = 5000;

const POWER_ITERATION_CAP: usize = 100_000;
const POWER_ITERATION_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("pi must be a probability vector (sum {sum}, min {min})")]
    NonSimplexPi { sum: f64, min: f64 },
    #[error("lambda is not symmetric at ({row}, {col}): {upper} vs {lower}")]
    AsymmetricLambda {
        row: usize,
        col: usize,
        upper: f64,
        lower: f64,
    },
    #[error("lambda[{row}][{col}] = {value} is not a rate in [0, N = {n}]")]
    RateExceedsN {
        row: usize,
        col: usize,
        value: f64,
        n: usize,
    },
    #[error("floor(seed_fraction * N) = {seeds}: at least one seed is required")]
    EmptySeeds { seeds: usize },
    #[error("{field}: shape mismatch, {message}")]
    Shape {
        field: &'static str,
        message: String,
    },
    #[error("{field}: {message}")]
    Range {
        field: &'static str,
        message: String,
    },
}

impl ParamError {
    /// Name of the offending parameter.
    pub fn field(&self) -> &'static str {
        match self {
            ParamError::NonSimplexPi { .. } => "pi",
            ParamError::AsymmetricLambda { .. } | ParamError::RateExceedsN { .. } => "lambda",
            ParamError::EmptySeeds { .. } => "seed_fraction",
            ParamError::Shape { field, .. } | ParamError::Range { field, .. } => field,
        }
    }
}

/// Every violated constraint of a parameter set.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParamErrors(pub Vec<ParamError>);

impl fmt::Display for ParamErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

impl ParamErrors {
    pub fn contains(&self, pred: impl Fn(&ParamError) -> bool) -> bool {
        self.0.iter().any(pred)
    }
}

/// Unvalidated parameter document, as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSbmParams {
    pub n_population: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_blocks: Option<usize>,
    pub pi: Vec<f64>,
    pub lambda: Vec<Vec<f64>>,
    pub coupon_cap: usize,
    pub seed_fraction: f64,
}

/// Validated `SBM(N, π, λ/N)` together with the referral parameters.
///
/// Can only be obtained through [`SbmParams::new`] or [`validate_params`], so every
/// instance satisfies: `π` on the simplex, `λ` symmetric and nonnegative with
/// `λ_kl ≤ N`, and at least one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSbmParams", into = "RawSbmParams")]
pub struct SbmParams {
    n_population: usize,
    pi: Vec<f64>,
    lambda: Vec<f64>,
    coupon_cap: usize,
    seed_fraction: f64,
}

impl SbmParams {
    pub fn new(
        n_population: usize,
        pi: Vec<f64>,
        lambda: Vec<Vec<f64>>,
        coupon_cap: usize,
        seed_fraction: f64,
    ) -> Result<Self, ParamErrors> {
        validate_params(RawSbmParams {
            n_population,
            n_blocks: None,
            pi,
            lambda,
            coupon_cap,
            seed_fraction,
        })
    }

    pub fn n_population(&self) -> usize {
        self.n_population
    }

    pub fn n_blocks(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Expected-contact rate `λ_kl`.
    pub fn lambda(&self, k: usize, l: usize) -> f64 {
        self.lambda[k * self.n_blocks() + l]
    }

    pub fn lambda_rows(&self) -> Vec<Vec<f64>> {
        self.lambda
            .chunks(self.n_blocks())
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn max_rate(&self) -> f64 {
        self.lambda.iter().copied().fold(0.0, f64::max)
    }

    /// Edge probability `p_kl = λ_kl / N`.
    pub fn edge_probability(&self, k: usize, l: usize) -> f64 {
        self.lambda(k, l) / self.n_population as f64
    }

    pub fn coupon_cap(&self) -> usize {
        self.coupon_cap
    }

    pub fn seed_fraction(&self) -> f64 {
        self.seed_fraction
    }

    /// `⌊seed_fraction · N⌋`.
    pub fn seed_count(&self) -> usize {
        floor_scaled(self.n_population, self.seed_fraction)
    }

    pub fn to_raw(&self) -> RawSbmParams {
        RawSbmParams {
            n_population: self.n_population,
            n_blocks: Some(self.n_blocks()),
            pi: self.pi.clone(),
            lambda: self.lambda_rows(),
            coupon_cap: self.coupon_cap,
            seed_fraction: self.seed_fraction,
        }
    }

    pub fn with_population(&self, n_population: usize) -> Result<Self, ParamErrors> {
        validate_params(RawSbmParams {
            n_population,
            ..self.to_raw()
        })
    }

    pub fn with_coupon_cap(&self, coupon_cap: usize) -> Result<Self, ParamErrors> {
        validate_params(RawSbmParams {
            coupon_cap,
            ..self.to_raw()
        })
    }

    pub fn with_seed_fraction(&self, seed_fraction: f64) -> Result<Self, ParamErrors> {
        validate_params(RawSbmParams {
            seed_fraction,
            ..self.to_raw()
        })
    }
}

impl TryFrom<RawSbmParams> for SbmParams {
    type Error = ParamErrors;

    fn try_from(raw: RawSbmParams) -> Result<Self, Self::Error> {
        validate_params(raw)
    }
}

impl From<SbmParams> for RawSbmParams {
    fn from(p: SbmParams) -> Self {
        p.to_raw()
    }
}

/// Checks every parameter constraint and reports all violations at once.
pub fn validate_params(raw: RawSbmParams) -> Result<SbmParams, ParamErrors> {
    let mut errors = Vec::new();
    let m = raw.pi.len();

    if m == 0 {
        errors.push(ParamError::Shape {
            field: "pi",
            message: "at least one block is required".into(),
        });
    }
    if let Some(nb) = raw.n_blocks {
        if nb != m {
            errors.push(ParamError::Shape {
                field: "n_blocks",
                message: format!("n_blocks = {nb} but pi has {m} entries"),
            });
        }
    }
    if raw.n_population == 0 {
        errors.push(ParamError::Range {
            field: "n_population",
            message: "must be positive".into(),
        });
    }
    if raw.coupon_cap == 0 {
        errors.push(ParamError::Range {
            field: "coupon_cap",
            message: "must be positive".into(),
        });
    }
    if !(raw.seed_fraction > 0.0 && raw.seed_fraction <= 1.0) {
        errors.push(ParamError::Range {
            field: "seed_fraction",
            message: format!("{} must lie in (0, 1]", raw.seed_fraction),
        });
    }

    let sum: f64 = raw.pi.iter().sum();
    let min = raw.pi.iter().copied().fold(f64::INFINITY, f64::min);
    if m > 0 && (!sum.is_finite() || (sum - 1.0).abs() > SIMPLEX_TOLERANCE || min < 0.0) {
        errors.push(ParamError::NonSimplexPi { sum, min });
    }

    let square = raw.lambda.len() == m && raw.lambda.iter().all(|row| row.len() == m);
    if !square {
        errors.push(ParamError::Shape {
            field: "lambda",
            message: format!("expected {m}x{m}"),
        });
    } else {
        let n = raw.n_population;
        for k in 0..m {
            for l in 0..m {
                let v = raw.lambda[k][l];
                if !v.is_finite() || v < 0.0 || v > n as f64 {
                    errors.push(ParamError::RateExceedsN {
                        row: k,
                        col: l,
                        value: v,
                        n,
                    });
                }
                if l > k && raw.lambda[k][l] != raw.lambda[l][k] {
                    errors.push(ParamError::AsymmetricLambda {
                        row: k,
                        col: l,
                        upper: raw.lambda[k][l],
                        lower: raw.lambda[l][k],
                    });
                }
            }
        }
    }

    let seeds = floor_scaled(raw.n_population, raw.seed_fraction);
    if raw.seed_fraction > 0.0 && seeds < 1 {
        errors.push(ParamError::EmptySeeds { seeds });
    }

    if !errors.is_empty() {
        return Err(ParamErrors(errors));
    }
    Ok(SbmParams {
        n_population: raw.n_population,
        pi: raw.pi,
        lambda: raw.lambda.into_iter().flatten().collect(),
        coupon_cap: raw.coupon_cap,
        seed_fraction: raw.seed_fraction,
    })
}

/// Number of individuals in each block, `N_1 … N_m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSizes(Vec<u64>);

impl BlockSizes {
    pub fn new(sizes: Vec<u64>) -> Self {
        BlockSizes(sizes)
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn get(&self, l: usize) -> u64 {
        self.0[l]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

/// Draws the block sizes: `Multinomial(N; π)`.
pub fn sample_block_sizes<R: Rng + ?Sized>(p: &SbmParams, rng: &mut R) -> BlockSizes {
    BlockSizes(multinomial(rng, p.n_population() as u64, p.pi()))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OffspringError {
    #[error("power iteration did not converge within {iterations} iterations (last relative change {change:e})")]
    PowerIterationDiverged { iterations: usize, change: f64 },
}

/// Mean offspring matrix `μ_lk = λ_lk π_k` and its Perron root.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringMatrix {
    pub mu: Vec<Vec<f64>>,
    pub perron_root: f64,
    pub irreducible: bool,
    pub supercritical: bool,
}

/// Irreducibility and supercriticality of the offspring matrix.
pub fn offspring_check(p: &SbmParams) -> Result<OffspringMatrix, OffspringError> {
    let m = p.n_blocks();
    let mu: Vec<Vec<f64>> = (0..m)
        .map(|l| (0..m).map(|k| p.lambda(l, k) * p.pi()[k]).collect())
        .collect();
    let perron_root = perron_root(&mu)?;
    let irreducible = strongly_connected(&mu);
    Ok(OffspringMatrix {
        mu,
        perron_root,
        irreducible,
        supercritical: perron_root > 1.0,
    })
}

/// Spectral radius of a nonnegative matrix by power iteration on `M + I`.
///
/// The unit shift makes the Perron root strictly dominant even when `M` is
/// periodic (e.g. bipartite rates), and leaves `ρ(M + I) = ρ(M) + 1`.
pub fn perron_root(mat: &[Vec<f64>]) -> Result<f64, OffspringError> {
    let m = mat.len();
    if m == 0 {
        return Ok(0.0);
    }
    let mut x = vec![1.0 / m as f64; m];
    let mut y = vec![0.0; m];
    let mut estimate = f64::NAN;
    let mut change = f64::INFINITY;
    for _ in 0..POWER_ITERATION_CAP {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = x[i] + mat[i].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        }
        let norm: f64 = y.iter().sum();
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        change = ((norm - estimate) / norm).abs();
        estimate = norm;
        // iterate well past the contract tolerance so reorderings agree to roundoff
        if change <= 1e-15 {
            break;
        }
    }
    if change > POWER_ITERATION_RTOL {
        return Err(OffspringError::PowerIterationDiverged {
            iterations: POWER_ITERATION_CAP,
            change,
        });
    }
    Ok((estimate - 1.0).max(0.0))
}

/// Strong connectivity of the positivity pattern: forward and backward reachability from node 0.
fn strongly_connected(mat: &[Vec<f64>]) -> bool {
    let m = mat.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; m];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..m {
                let w = if forward { mat[i][j] } else { mat[j][i] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    m > 0 && reach(true) && reach(false)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("explicit graph of {n} nodes exceeds the cap of {cap}")]
    GraphTooLarge { n: usize, cap: usize },
    #[error("block sizes sum to {sum}, population is {n}")]
    SizeMismatch { sum: u64, n: usize },
    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),
}

/// Explicit undirected simple graph with typed nodes.
///
/// Nodes of block `l` occupy a contiguous index range; neighbour lists are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmGraph {
    block_of: Vec<usize>,
    sizes: BlockSizes,
    neighbors: Vec<Vec<u32>>,
}

impl SbmGraph {
    /// Builds a graph from an edge list; self-loops are rejected, duplicate edges collapsed.
    pub fn from_edges(
        block_of: Vec<usize>,
        n_blocks: usize,
        edges: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        let n = block_of.len();
        let mut sizes = vec![0u64; n_blocks];
        for &b in &block_of {
            sizes[b] += 1;
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i == j || i >= n || j >= n {
                return Err(GraphError::InvalidEdge(i, j));
            }
            neighbors[i].push(j as u32);
            neighbors[j].push(i as u32);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(SbmGraph {
            block_of,
            sizes: BlockSizes(sizes),
            neighbors,
        })
    }

    pub fn node_count(&self) -> usize {
        self.block_of.len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn block_of(&self, node: usize) -> usize {
        self.block_of[node]
    }

    pub fn sizes(&self) -> &BlockSizes {
        &self.sizes
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.neighbors[node]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&(j as u32)).is_ok()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }
}

/// Samples an explicit SBM graph for the given block sizes.
///
/// Each block pair is handled by geometric skipping over its candidate pairs, so
/// the cost is proportional to the number of edges rather than `N²`.
pub fn sample_adjacency<R: Rng + ?Sized>(
    p: &SbmParams,
    sizes: &BlockSizes,
    cap: usize,
    rng: &mut R,
) -> Result<SbmGraph, GraphError> {
    let n = p.n_population();
    if n > cap {
        return Err(GraphError::GraphTooLarge { n, cap });
    }
    if sizes.total() != n as u64 || sizes.len() != p.n_blocks() {
        return Err(GraphError::SizeMismatch {
            sum: sizes.total(),
            n,
        });
    }
    let m = p.n_blocks();
    let mut offsets = Vec::with_capacity(m + 1);
    offsets.push(0usize);
    for &s in sizes.as_slice() {
        offsets.push(offsets.last().unwrap() + s as usize);
    }
    let block_of: Vec<usize> = (0..m)
        .flat_map(|l| std::iter::repeat_n(l, sizes.get(l) as usize))
        .collect();

    let mut edges = Vec::new();
    for k in 0..m {
        for l in k..m {
            let prob = p.edge_probability(k, l);
            let (ok, nk) = (offsets[k], sizes.get(k) as usize);
            let (ol, nl) = (offsets[l], sizes.get(l) as usize);
            if k == l {
                for_each_triangle_pair(nk, prob, rng, |v, w| edges.push((ok + v, ok + w)));
            } else {
                let span = nk * nl;
                for_each_success(span, prob, rng, |idx| {
                    edges.push((ok + idx / nl, ol + idx % nl))
                });
            }
        }
    }
    SbmGraph::from_edges(block_of, m, &edges)
}

fn geometric_gap<R: Rng + ?Sized>(rng: &mut R, log_q: f64) -> usize {
    let u: f64 = rng.random();
    ((1.0 - u).ln() / log_q).floor() as usize
}

/// Calls `emit` with every index in `0..span` that succeeds a Bernoulli(`prob`) trial.
fn for_each_success<R: Rng + ?Sized>(
    span: usize,
    prob: f64,
    rng: &mut R,
    mut emit: impl FnMut(usize),
) {
    if prob <= 0.0 || span == 0 {
        return;
    }
    if prob >= 1.0 {
        (0..span).for_each(emit);
        return;
    }
    let log_q = (1.0 - prob).ln();
    let mut idx = geometric_gap(rng, log_q);
    while idx < span {
        emit(idx);
        idx = idx.saturating_add(1 + geometric_gap(rng, log_q));
    }
}

/// Same as [`for_each_success`] over unordered pairs `w < v < n`.
fn for_each_triangle_pair<R: Rng + ?Sized>(
    n: usize,
    prob: f64,
    rng: &mut R,
    mut emit: impl FnMut(usize, usize),
) {
    let span = n * n.saturating_sub(1) / 2;
    // pairs enumerated row by row: (1,0), (2,0), (2,1), (3,0), ...
    let mut v = 1usize;
    let mut row_start = 0usize;
    for_each_success(span, prob, rng, |idx| {
        while idx >= row_start + v {
            row_start += v;
            v += 1;
        }
        emit(v, idx - row_start);
    });
}
