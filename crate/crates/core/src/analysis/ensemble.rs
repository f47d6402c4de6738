//! Monte-Carlo harness comparing the referral chain with its fluid limit.
//!
//! Every replicate draws fresh block sizes and a fresh trajectory from its own RNG
//! stream `(master_seed, replicate)`. Replicates run in parallel on the current
//! rayon pool; results are gathered in replicate order, so outputs depend only on
//! the configuration and the master seed.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::distance::{path_distance_l1, DistanceError};
use super::stats::Summary;
use crate::ode::{find_t0, integrate, FluidModel, FluidPath, IntegratorOptions, OdeError};
use crate::random::replicate_rng;
use crate::sbm::{sample_block_sizes, ParamErrors, SbmParams};
use crate::scalar::{floor_scaled, KahanSum};
use crate::simulator::{renormalize_path, run_with_pool, HiddenPool, SimError, Trajectory};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error("invalid parameters: {0}")]
    Params(#[from] ParamErrors),
    #[error("replicate count must be at least 1")]
    NoReplicates,
    #[error("probe time {0} is outside [0, 1]")]
    ProbeOutOfRange(f64),
    #[error("empty sweep list")]
    EmptySweep,
}

pub const N0_SCALAR: &str = "n0_over_n";
pub const D1_SCALAR: &str = "d1";

pub fn discovery_scalar_name(t: f64) -> String {
    format!("discovered_t{t}")
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub params: SbmParams,
    pub replicates: usize,
    pub master_seed: u64,
    pub probe_times: Vec<f64>,
    pub integrator: IntegratorOptions<f64>,
    /// Also compute `d₁` against the fluid limit for each replicate.
    pub path_distance: bool,
    pub hidden_pool: HiddenPool,
}

impl EnsembleConfig {
    pub fn new(params: SbmParams, replicates: usize, master_seed: u64) -> Self {
        EnsembleConfig {
            params,
            replicates,
            master_seed,
            probe_times: Vec::new(),
            integrator: IntegratorOptions::default(),
            path_distance: false,
            hidden_pool: HiddenPool::default(),
        }
    }
}

/// Per-replicate scalars and their summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub replicate_count: usize,
    pub scalar_names: Vec<String>,
    /// `values[r][i]` is scalar `i` of replicate `r`.
    pub values: Vec<Vec<f64>>,
    pub summaries: Vec<Summary>,
    /// Fluid-limit counterparts of the scalars where one exists (`t₀`, discovery at probes).
    pub fluid_predictions: Vec<(String, f64)>,
}

impl EnsembleResult {
    pub fn summary(&self, name: &str) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.name == name)
    }

    pub fn fluid_prediction(&self, name: &str) -> Option<f64> {
        self.fluid_predictions
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.scalar_names.iter().position(|n| n == name)?;
        Some(self.values.iter().map(|row| row[i]).collect())
    }
}

/// Fluid path fine enough for `d₁` at population `n`: step `min(h, 1/(4n))`.
pub fn fluid_for_distance(
    p: &SbmParams,
    opts: IntegratorOptions<f64>,
    n: usize,
) -> Result<FluidPath<f64>, OdeError> {
    let step = opts.step.min(1.0 / (4.0 * n as f64));
    let model = FluidModel::<f64>::new(p);
    integrate(
        &model.default_initial_state(),
        &model,
        IntegratorOptions { step, ..opts },
    )
}

/// One replicate: block sizes, then the chain, both from stream `(master_seed, index)`.
pub fn simulate_replicate(
    p: &SbmParams,
    master_seed: u64,
    index: u64,
) -> Result<Trajectory, SimError> {
    simulate_replicate_with_pool(p, HiddenPool::default(), master_seed, index)
}

pub fn simulate_replicate_with_pool(
    p: &SbmParams,
    pool: HiddenPool,
    master_seed: u64,
    index: u64,
) -> Result<Trajectory, SimError> {
    let mut rng = replicate_rng(master_seed, index);
    let sizes = sample_block_sizes(p, &mut rng);
    Ok(run_with_pool(p, &sizes, pool, &mut rng, |_, _| {})?.with_seed(master_seed))
}

/// Step index of probe time `t`: `⌊N t⌋`.
pub fn probe_step(n: usize, t: f64) -> usize {
    floor_scaled(n, t).min(n)
}

pub fn ensemble_run(cfg: &EnsembleConfig) -> Result<EnsembleResult, AnalysisError> {
    if cfg.replicates == 0 {
        return Err(AnalysisError::NoReplicates);
    }
    if let Some(&t) = cfg.probe_times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(AnalysisError::ProbeOutOfRange(t));
    }
    let p = &cfg.params;
    let n = p.n_population();
    let fluid = if cfg.path_distance {
        fluid_for_distance(p, cfg.integrator, n)?
    } else {
        let model = FluidModel::<f64>::new(p);
        integrate(&model.default_initial_state(), &model, cfg.integrator)?
    };

    let mut names = vec![N0_SCALAR.to_string()];
    if cfg.path_distance {
        names.push(D1_SCALAR.to_string());
    }
    names.extend(cfg.probe_times.iter().map(|&t| discovery_scalar_name(t)));

    let values = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>, AnalysisError> {
            let traj = simulate_replicate_with_pool(p, cfg.hidden_pool, cfg.master_seed, r)?;
            let mut row = vec![traj.n0() as f64 / n as f64];
            if cfg.path_distance {
                row.push(path_distance_l1(&renormalize_path::<f64>(&traj), &fluid)?);
            }
            row.extend(
                cfg.probe_times
                    .iter()
                    .map(|&t| traj.discovered_fraction(probe_step(n, t))),
            );
            Ok(row)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let summaries = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let column: Vec<f64> = values.iter().map(|row| row[i]).collect();
            Summary::of(name.clone(), &column)
        })
        .collect();

    let mut fluid_predictions = vec![(N0_SCALAR.to_string(), find_t0(&fluid))];
    for &t in &cfg.probe_times {
        let x = fluid.interpolate(t);
        let m = p.n_blocks();
        fluid_predictions.push((discovery_scalar_name(t), x[..2 * m].iter().sum()));
    }

    Ok(EnsembleResult {
        replicate_count: cfg.replicates,
        scalar_names: names,
        values,
        summaries,
        fluid_predictions,
    })
}

/// Ensemble distribution of `(‖A_t‖ + ‖B_t‖)/N` at one probe time, next to `‖a_t‖ + ‖b_t‖`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscoveryReport {
    pub coupon_cap: usize,
    pub probe: f64,
    pub summary: Summary,
    pub fluid_prediction: f64,
    pub n0_mean: f64,
}

pub fn discovery_at_time(
    params: &SbmParams,
    probe: f64,
    replicates: usize,
    master_seed: u64,
    integrator: IntegratorOptions<f64>,
) -> Result<DiscoveryReport, AnalysisError> {
    let cfg = EnsembleConfig {
        probe_times: vec![probe],
        integrator,
        ..EnsembleConfig::new(params.clone(), replicates, master_seed)
    };
    let result = ensemble_run(&cfg)?;
    let name = discovery_scalar_name(probe);
    Ok(DiscoveryReport {
        coupon_cap: params.coupon_cap(),
        probe,
        summary: result.summary(&name).expect("probe scalar present").clone(),
        fluid_prediction: result
            .fluid_prediction(&name)
            .expect("probe prediction present"),
        n0_mean: result.summary(N0_SCALAR).expect("n0 scalar present").mean,
    })
}

/// [`discovery_at_time`] for each coupon cap in `caps`.
pub fn discovery_vs_c(
    base: &SbmParams,
    caps: &[usize],
    probe: f64,
    replicates: usize,
    master_seed: u64,
    integrator: IntegratorOptions<f64>,
) -> Result<Vec<DiscoveryReport>, AnalysisError> {
    caps.iter()
        .map(|&c| {
            discovery_at_time(
                &base.with_coupon_cap(c)?,
                probe,
                replicates,
                master_seed,
                integrator,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub n_population: usize,
    pub ln_n: f64,
    pub mean_d1: f64,
    pub log_d1: f64,
    pub stderr_d1: f64,
    pub replicate_count: usize,
}

/// Seed for the sweep entry at `index`, so different `N` never share streams.
fn sweep_seed(master_seed: u64, index: usize) -> u64 {
    master_seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1)
}

/// Mean `d₁` over `replicates` runs for each population size in `populations`.
///
/// The fluid path is integrated once, fine enough for the largest `N`, and shared.
pub fn convergence_sweep(
    base: &SbmParams,
    populations: &[usize],
    replicates: usize,
    master_seed: u64,
    integrator: IntegratorOptions<f64>,
) -> Result<Vec<ConvergencePoint>, AnalysisError> {
    if replicates == 0 {
        return Err(AnalysisError::NoReplicates);
    }
    let n_max = *populations.iter().max().ok_or(AnalysisError::EmptySweep)?;
    let fluid = fluid_for_distance(base, integrator, n_max)?;
    populations
        .iter()
        .enumerate()
        .map(|(idx, &n)| {
            let p = base.with_population(n)?;
            let seed = sweep_seed(master_seed, idx);
            let d1 = (0..replicates as u64)
                .into_par_iter()
                .map(|r| -> Result<f64, AnalysisError> {
                    let traj = simulate_replicate(&p, seed, r)?;
                    Ok(path_distance_l1(&renormalize_path::<f64>(&traj), &fluid)?)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mean = d1.iter().copied().collect::<KahanSum>().total() / replicates as f64;
            let summary = Summary::of(D1_SCALAR, &d1);
            Ok(ConvergencePoint {
                n_population: n,
                ln_n: (n as f64).ln(),
                mean_d1: mean,
                log_d1: mean.ln(),
                stderr_d1: summary.stderr,
                replicate_count: replicates,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct T0Row {
    pub coupon_cap: usize,
    pub t0: f64,
}

/// Fluid stopping time `t₀` for each coupon cap.
pub fn t0_vs_c_table(
    base: &SbmParams,
    caps: &[usize],
    integrator: IntegratorOptions<f64>,
) -> Result<Vec<T0Row>, AnalysisError> {
    caps.iter()
        .map(|&c| {
            let model = FluidModel::<f64>::new(&base.with_coupon_cap(c)?);
            let path = integrate(&model.default_initial_state(), &model, integrator)?;
            Ok(T0Row {
                coupon_cap: c,
                t0: find_t0(&path),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, c: usize, seed_fraction: f64) -> SbmParams {
        SbmParams::new(
            n,
            vec![1.0 / 3.0, 2.0 / 3.0],
            vec![vec![2.0, 3.0], vec![3.0, 4.0]],
            c,
            seed_fraction,
        )
        .unwrap()
    }

    #[test]
    fn single_replicate_summary_equals_value() {
        let mut cfg = EnsembleConfig::new(params(800, 3, 0.01), 1, 5);
        cfg.probe_times = vec![0.0, 0.2];
        cfg.path_distance = true;
        let res = ensemble_run(&cfg).unwrap();
        for (i, s) in res.summaries.iter().enumerate() {
            assert_eq!(s.mean, res.values[0][i]);
            assert_eq!(s.median, res.values[0][i]);
            assert_eq!(s.stddev, 0.0);
        }
        // at t = 0 the discovered mass is the seed mass
        assert_eq!(res.column(&discovery_scalar_name(0.0)).unwrap(), vec![0.01]);
    }

    #[test]
    fn same_seed_same_result() {
        let mut cfg = EnsembleConfig::new(params(600, 3, 0.02), 16, 99);
        cfg.probe_times = vec![0.3];
        cfg.path_distance = true;
        let a = ensemble_run(&cfg).unwrap();
        let b = ensemble_run(&cfg).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = pool.install(|| ensemble_run(&cfg)).unwrap();
        assert_eq!(a, c);
        cfg.master_seed = 100;
        assert_ne!(ensemble_run(&cfg).unwrap(), a);
    }

    #[test]
    fn summaries_match_raw_values() {
        let mut cfg = EnsembleConfig::new(params(500, 2, 0.02), 40, 3);
        cfg.probe_times = vec![0.1];
        let res = ensemble_run(&cfg).unwrap();
        for (i, s) in res.summaries.iter().enumerate() {
            let mean: f64 = res.values.iter().map(|r| r[i]).sum::<f64>() / 40.0;
            assert!((mean - s.mean).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = EnsembleConfig::new(params(500, 2, 0.02), 0, 3);
        assert!(matches!(
            ensemble_run(&cfg),
            Err(AnalysisError::NoReplicates)
        ));
        let mut cfg = EnsembleConfig::new(params(500, 2, 0.02), 2, 3);
        cfg.probe_times = vec![1.5];
        assert!(matches!(
            ensemble_run(&cfg),
            Err(AnalysisError::ProbeOutOfRange(_))
        ));
    }

    #[test]
    fn t0_table_linear_drain() {
        let p = SbmParams::new(1000, vec![0.5, 0.5], vec![vec![0.0; 2]; 2], 1, 0.05).unwrap();
        let rows = t0_vs_c_table(&p, &[1, 2, 3, 4], IntegratorOptions::default()).unwrap();
        for row in rows {
            assert!((row.t0 - 0.05).abs() <= 2e-4, "{row:?}");
        }
    }

    #[test]
    fn single_entry_sweep() {
        let pts = convergence_sweep(
            &params(400, 3, 0.01),
            &[400],
            4,
            1,
            IntegratorOptions::default(),
        )
        .unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].replicate_count, 4);
        assert!((pts[0].log_d1 - pts[0].mean_d1.ln()).abs() < 1e-15);
    }

    #[test]
    fn discovery_near_fluid_prediction() {
        let report = discovery_at_time(
            &params(1000, 3, 0.01),
            0.2,
            200,
            11,
            IntegratorOptions::default(),
        )
        .unwrap();
        assert!(
            (report.summary.mean - report.fluid_prediction).abs() < 0.05,
            "{} vs {}",
            report.summary.mean,
            report.fluid_prediction
        );
    }
}
