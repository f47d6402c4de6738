//! Stochastic-versus-fluid comparisons: path distance, ensembles, sweeps and tables.

pub mod distance;
pub mod ensemble;
pub mod ks;
pub mod stats;

pub use distance::{path_distance_l1, step_distance_l1, DistanceError};
pub use ensemble::{
    convergence_sweep, discovery_at_time, discovery_vs_c, ensemble_run, simulate_replicate,
    simulate_replicate_with_pool, t0_vs_c_table, AnalysisError, ConvergencePoint, DiscoveryReport,
    EnsembleConfig, EnsembleResult, T0Row,
};
pub use ks::{ks_two_sample, KsOutcome};
pub use stats::Summary;
