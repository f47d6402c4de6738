//! The referral process on a fixed, explicitly sampled graph.
//!
//! Used to cross-check the distributional chain on small populations.

use rand::seq::index::sample;
use rand::Rng;

use crate::random::multinomial;
use crate::sbm::{GraphError, SbmGraph, SbmParams, DEFAULT_GRAPH_CAP};
use crate::simulator::{ChainState, SimError, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeState {
    Hidden,
    Named,
    Active,
    Interviewed,
}

#[derive(Debug, thiserror::Error)]
pub enum WalkError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("seed node {0} is not in the graph")]
    UnknownSeed(usize),
}

/// Runs the referral process on `graph` with seeds drawn as in the distributional
/// chain: seed counts per block are multinomial, seed identities uniform within a block.
pub fn run_on_graph<R: Rng + ?Sized>(
    p: &SbmParams,
    graph: &SbmGraph,
    rng: &mut R,
) -> Result<Trajectory, WalkError> {
    if graph.node_count() > DEFAULT_GRAPH_CAP {
        return Err(GraphError::GraphTooLarge {
            n: graph.node_count(),
            cap: DEFAULT_GRAPH_CAP,
        }
        .into());
    }
    let m = p.n_blocks();
    let sizes = graph.sizes();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); m];
    for v in 0..graph.node_count() {
        members[graph.block_of(v)].push(v);
    }
    let mut counts = None;
    for _ in 0..1000 {
        let draw = multinomial(rng, p.seed_count() as u64, p.pi());
        if draw.iter().zip(sizes.as_slice()).all(|(x, n)| x <= n) {
            counts = Some(draw);
            break;
        }
    }
    let counts = counts.ok_or(SimError::SeedsExceedBlock { attempts: 1000 })?;
    let mut seeds = Vec::new();
    for (l, &count) in counts.iter().enumerate() {
        let picked = sample(rng, members[l].len(), count as usize);
        seeds.extend(picked.iter().map(|i| members[l][i]));
    }
    run_on_graph_from(graph, m, &seeds, p.coupon_cap(), rng)
}

/// Runs the referral process from an explicit seed set.
pub fn run_on_graph_from<R: Rng + ?Sized>(
    graph: &SbmGraph,
    n_blocks: usize,
    seeds: &[usize],
    coupon_cap: usize,
    rng: &mut R,
) -> Result<Trajectory, WalkError> {
    let n = graph.node_count();
    let mut node_state = vec![NodeState::Hidden; n];
    let mut active: Vec<usize> = Vec::new();
    let mut state = ChainState {
        a: vec![0; n_blocks],
        b: vec![0; n_blocks],
        u: vec![0; n_blocks],
        sizes: graph.sizes().clone(),
        step: 0,
    };
    for &s in seeds {
        if s >= n {
            return Err(WalkError::UnknownSeed(s));
        }
        if node_state[s] == NodeState::Hidden {
            node_state[s] = NodeState::Active;
            active.push(s);
            state.a[graph.block_of(s)] += 1;
        }
    }

    let mut states = vec![state.clone()];
    let mut candidates: Vec<usize> = Vec::new();
    while !active.is_empty() && state.step < n {
        let v = active.swap_remove(rng.random_range(0..active.len()));
        let bv = graph.block_of(v);
        node_state[v] = NodeState::Interviewed;
        state.a[bv] -= 1;
        state.u[bv] += 1;

        candidates.clear();
        for &w in graph.neighbors(v) {
            let w = w as usize;
            match node_state[w] {
                NodeState::Hidden => {
                    node_state[w] = NodeState::Named;
                    state.b[graph.block_of(w)] += 1;
                    candidates.push(w);
                }
                NodeState::Named => candidates.push(w),
                NodeState::Active | NodeState::Interviewed => {}
            }
        }
        let recipients: Vec<usize> = if candidates.len() <= coupon_cap {
            candidates.clone()
        } else {
            sample(rng, candidates.len(), coupon_cap)
                .iter()
                .map(|i| candidates[i])
                .collect()
        };
        for w in recipients {
            node_state[w] = NodeState::Active;
            let bw = graph.block_of(w);
            state.b[bw] -= 1;
            state.a[bw] += 1;
            active.push(w);
        }
        state.step += 1;
        states.push(state.clone());
    }
    Ok(Trajectory::from_states(n, &states))
}
