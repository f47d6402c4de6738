use std::io;

use thiserror::Error;

use crs_core::analysis::ensemble::{discovery_scalar_name, N0_SCALAR};
use crs_core::analysis::{
    convergence_sweep, ensemble_run, simulate_replicate_with_pool, t0_vs_c_table, AnalysisError,
    EnsembleConfig, EnsembleResult,
};
use crs_core::ode::{find_t0, integrate, FluidModel, FluidPath, IntegratorOptions, OdeError};
use crs_core::simulator::{SimError, Trajectory};

use crate::chart::{line_chart, Series};
use crate::config::{ExperimentConfig, Mode};
use crate::output::{block_columns, fmt_f64, header, Outputs};

/// Probe used for the discovered-proportion table when none is configured.
const DEFAULT_TABLE_PROBE: f64 = 0.2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub fn run_experiment(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    match cfg.mode {
        Mode::Simulate => ensemble(cfg, out, false),
        Mode::Compare => ensemble(cfg, out, true),
        Mode::Ode => ode(cfg, out),
        Mode::Sweep => sweep(cfg, out),
        Mode::Tables => tables(cfg, out),
    }
}

fn options(cfg: &ExperimentConfig) -> IntegratorOptions<f64> {
    IntegratorOptions {
        step: cfg.ode_step,
        stop_threshold: cfg.stop_threshold,
    }
}

fn fluid_path(cfg: &ExperimentConfig) -> Result<FluidPath<f64>, OdeError> {
    let model = FluidModel::<f64>::new(&cfg.model);
    integrate(&model.default_initial_state(), &model, options(cfg))
}

fn ensemble_config(cfg: &ExperimentConfig, path_distance: bool) -> EnsembleConfig {
    EnsembleConfig {
        probe_times: cfg.probe_times.clone(),
        integrator: options(cfg),
        path_distance,
        hidden_pool: cfg.hidden_pool,
        ..EnsembleConfig::new(cfg.model.clone(), cfg.replicates, cfg.master_seed)
    }
}

fn long_rows(experiment: &str, res: &EnsembleResult) -> Vec<Vec<String>> {
    res.values
        .iter()
        .enumerate()
        .flat_map(|(r, row)| {
            res.scalar_names.iter().zip(row).map(move |(name, v)| {
                vec![
                    experiment.to_string(),
                    r.to_string(),
                    name.clone(),
                    fmt_f64(*v),
                ]
            })
        })
        .collect()
}

fn summary_rows(experiment: &str, res: &EnsembleResult) -> Vec<Vec<String>> {
    res.summaries
        .iter()
        .map(|s| {
            let fluid = res
                .fluid_prediction(&s.name)
                .map(fmt_f64)
                .unwrap_or_default();
            let mut row = vec![experiment.to_string(), s.name.clone(), s.count.to_string()];
            row.extend(
                [
                    s.mean, s.stddev, s.stderr, s.min, s.q05, s.q25, s.median, s.q75, s.q95, s.max,
                ]
                .map(fmt_f64),
            );
            row.push(fluid);
            row
        })
        .collect()
}

const LONG_HEADER: [&str; 4] = ["experiment_id", "replicate", "scalar", "value"];
const SUMMARY_HEADER: [&str; 14] = [
    "experiment_id",
    "scalar",
    "count",
    "mean",
    "stddev",
    "stderr",
    "min",
    "q05",
    "q25",
    "median",
    "q75",
    "q95",
    "max",
    "fluid_prediction",
];

fn write_trajectory(out: &mut Outputs, name: &str, traj: &Trajectory) -> io::Result<()> {
    let m = traj.n_blocks();
    let n = traj.n_population();
    let mut cols = header(&["step", "t"]);
    cols.extend(block_columns(&["A", "B", "U"], m));
    let mut steps: Vec<usize> = (0..=traj.n0()).collect();
    if traj.n0() < n {
        steps.push(n);
    }
    let rows = steps.into_iter().map(|s| {
        let mut row = vec![s.to_string(), fmt_f64(s as f64 / n as f64)];
        row.extend(traj.counts_at(s).iter().map(|c| c.to_string()));
        row
    });
    out.csv(name, &cols, rows)
}

fn write_fluid_path(out: &mut Outputs, path: &FluidPath<f64>) -> io::Result<()> {
    let mut cols = header(&["t"]);
    cols.extend(block_columns(&["a", "b", "u"], path.n_blocks()));
    let rows = path.grid.iter().zip(&path.states).map(|(t, x)| {
        let mut row = vec![fmt_f64(*t)];
        row.extend(x.to_flat().into_iter().map(fmt_f64));
        row
    });
    out.csv("fluid_path.csv", &cols, rows)
}

fn block_series(
    m: usize,
    points: impl Fn(usize) -> Vec<(f64, f64)>,
    suffix: &str,
    dashed: bool,
) -> Vec<Series> {
    let kinds = ["a", "b", "u"];
    (0..3 * m)
        .map(|i| Series {
            label: format!("{}_{}{suffix}", kinds[i / m], i % m + 1),
            points: points(i),
            dashed,
            colour: i,
        })
        .collect()
}

fn trajectory_series(traj: &Trajectory) -> Vec<Series> {
    let n = traj.n_population() as f64;
    let last = traj.n_population();
    block_series(
        traj.n_blocks(),
        |i| {
            let mut steps: Vec<usize> = (0..=traj.n0()).collect();
            steps.push(last);
            steps
                .into_iter()
                .map(|s| (s as f64 / n, traj.counts_at(s)[i] as f64 / n))
                .collect()
        },
        "",
        false,
    )
}

fn fluid_series(path: &FluidPath<f64>, suffix: &str, dashed: bool) -> Vec<Series> {
    block_series(
        path.n_blocks(),
        |i| {
            path.grid
                .iter()
                .zip(&path.states)
                .map(|(t, x)| (*t, x.to_flat()[i]))
                .collect()
        },
        suffix,
        dashed,
    )
}

fn ensemble(cfg: &ExperimentConfig, out: &mut Outputs, compare: bool) -> Result<(), RunError> {
    let mode = cfg.mode.as_str();
    let res = ensemble_run(&ensemble_config(cfg, compare))?;
    out.csv(
        "replicates.csv",
        &header(&LONG_HEADER),
        long_rows(mode, &res),
    )?;
    out.csv(
        "summary.csv",
        &header(&SUMMARY_HEADER),
        summary_rows(mode, &res),
    )?;
    for s in &res.summaries {
        out.record(&format!("mean_{}", s.name), s.mean);
    }
    if let Some(t0) = res.fluid_prediction(N0_SCALAR) {
        out.record("fluid_t0", t0);
    }

    let fluid = if compare || cfg.charts {
        Some(fluid_path(cfg)?)
    } else {
        None
    };
    if compare {
        write_fluid_path(out, fluid.as_ref().expect("integrated above"))?;
    }
    for r in 0..cfg.export_trajectories.min(cfg.replicates) {
        let traj =
            simulate_replicate_with_pool(&cfg.model, cfg.hidden_pool, cfg.master_seed, r as u64)?;
        write_trajectory(out, &format!("trajectory_r{r}.csv"), &traj)?;
        if cfg.charts && r == 0 {
            let mut series = trajectory_series(&traj);
            if let Some(path) = &fluid {
                series.extend(fluid_series(path, " fluid", true));
            }
            let title = format!(
                "replicate 0, N = {}, c = {}",
                cfg.model.n_population(),
                cfg.model.coupon_cap()
            );
            out.write(
                "trajectory_r0.svg",
                line_chart(&title, "proportion of N", &series).as_bytes(),
            )?;
        }
    }
    Ok(())
}

fn ode(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let path = fluid_path(cfg)?;
    write_fluid_path(out, &path)?;
    out.record("t0", find_t0(&path));
    out.record("active_mass_exhausted", path.crossing().is_some());
    if cfg.charts {
        let title = format!("fluid limit, c = {}", cfg.model.coupon_cap());
        out.write(
            "fluid_path.svg",
            line_chart(&title, "proportion", &fluid_series(&path, "", false)).as_bytes(),
        )?;
    }
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let points = convergence_sweep(
        &cfg.model,
        &cfg.n_list,
        cfg.replicates,
        cfg.master_seed,
        options(cfg),
    )?;
    let rows = points.iter().map(|p| {
        vec![
            p.n_population.to_string(),
            fmt_f64(p.ln_n),
            fmt_f64(p.mean_d1),
            fmt_f64(p.log_d1),
            fmt_f64(p.stderr_d1),
            p.replicate_count.to_string(),
        ]
    });
    out.csv(
        "sweep.csv",
        &header(&[
            "n_population",
            "ln_n",
            "mean_d1",
            "log_d1",
            "stderr_d1",
            "replicates",
        ]),
        rows,
    )?;
    Ok(())
}

fn tables(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let t0_rows = t0_vs_c_table(&cfg.model, &cfg.c_list, options(cfg))?;
    out.csv(
        "table1_t0_vs_c.csv",
        &header(&["c", "t0"]),
        t0_rows
            .iter()
            .map(|r| vec![r.coupon_cap.to_string(), fmt_f64(r.t0)]),
    )?;

    let probes = if cfg.probe_times.is_empty() {
        vec![DEFAULT_TABLE_PROBE]
    } else {
        cfg.probe_times.clone()
    };
    let mut long = Vec::new();
    let mut summary = Vec::new();
    let mut table = Vec::new();
    for &c in &cfg.c_list {
        let params = cfg.model.with_coupon_cap(c).map_err(AnalysisError::from)?;
        let ecfg = EnsembleConfig {
            params,
            probe_times: probes.clone(),
            ..ensemble_config(cfg, false)
        };
        let res = ensemble_run(&ecfg)?;
        let id = format!("tables_c{c}");
        long.extend(long_rows(&id, &res));
        summary.extend(summary_rows(&id, &res));
        let n0 = res.summary(N0_SCALAR).expect("n0 scalar").mean;
        for &t in &probes {
            let name = discovery_scalar_name(t);
            let s = res.summary(&name).expect("probe scalar");
            table.push(vec![
                c.to_string(),
                fmt_f64(t),
                s.count.to_string(),
                fmt_f64(s.mean),
                fmt_f64(s.stddev),
                fmt_f64(s.mean - 3.0 * s.stddev),
                fmt_f64(s.mean + 3.0 * s.stddev),
                fmt_f64(res.fluid_prediction(&name).expect("probe prediction")),
                fmt_f64(n0),
            ]);
        }
    }
    out.csv(
        "table2_discovery_vs_c.csv",
        &header(&[
            "c",
            "t",
            "replicates",
            "mean_discovered",
            "stddev",
            "band_low",
            "band_high",
            "fluid_discovered",
            "mean_n0_over_n",
        ]),
        table,
    )?;
    out.csv("replicates.csv", &header(&LONG_HEADER), long)?;
    out.csv("summary.csv", &header(&SUMMARY_HEADER), summary)?;
    Ok(())
}
