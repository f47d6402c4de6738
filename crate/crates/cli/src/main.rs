//! `crs`: run chain-referral experiments described by a JSON configuration.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for runtime errors.
//! A `manifest.json` is written to the output directory in every case.

mod chart;
mod config;
mod experiment;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use config::{parse_config, salvage_output_dir, ConfigError, DEFAULT_OUTPUT_DIR};
use output::{sha256_hex, Manifest, Outputs, Status};

#[derive(Debug, Parser)]
#[command(version, about = "Chain-referral sampling on stochastic block models")]
struct Args {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides `master_seed` in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replicate fan-out (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn fail(manifest: &mut Manifest, dir: &Path, status: Status, cause: String) -> ExitCode {
    eprintln!("crs: {cause}");
    manifest.status = status;
    manifest.failure = Some(cause);
    if let Err(e) = manifest.write_to(dir) {
        eprintln!("crs: cannot write manifest to {}: {e}", dir.display());
    }
    ExitCode::from(if status == Status::ConfigError {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut manifest = Manifest::new(Status::Ok);
    manifest.master_seed = args.seed;

    let text = match fs::read(&args.config) {
        Ok(bytes) => {
            manifest.config_sha256 = Some(sha256_hex(&bytes));
            String::from_utf8_lossy(&bytes).into_owned()
        }
        Err(e) => {
            let dir = args
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
            let cause = ConfigError::Io(format!("{}: {e}", args.config.display())).to_string();
            return fail(&mut manifest, &dir, Status::ConfigError, cause);
        }
    };

    let mut cfg = match parse_config(&text) {
        Ok(cfg) => cfg,
        Err(errors) => {
            let dir = args
                .out
                .clone()
                .or_else(|| salvage_output_dir(&text))
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
            let cause = errors
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return fail(&mut manifest, &dir, Status::ConfigError, cause);
        }
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(dir) = args.out {
        cfg.output_dir = dir;
    }
    manifest.master_seed = Some(cfg.master_seed);
    manifest.mode = Some(cfg.mode.as_str());
    let dir = cfg.output_dir.clone();

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            return fail(
                &mut manifest,
                &dir,
                Status::RuntimeError,
                format!("thread pool: {e}"),
            )
        }
    };
    let mut outputs = match Outputs::new(&dir) {
        Ok(o) => o,
        Err(e) => {
            return fail(
                &mut manifest,
                &dir,
                Status::RuntimeError,
                format!("output directory: {e}"),
            )
        }
    };
    let result = pool.install(|| experiment::run_experiment(&cfg, &mut outputs));
    manifest.outputs = std::mem::take(&mut outputs.files);
    manifest.results = std::mem::take(&mut outputs.results);
    if let Err(e) = result {
        return fail(&mut manifest, &dir, Status::RuntimeError, e.to_string());
    }
    if let Err(e) = manifest.write_to(&dir) {
        eprintln!("crs: cannot write manifest to {}: {e}", dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    eprintln!(
        "crs: {} finished, {} files in {}",
        cfg.mode.as_str(),
        manifest.outputs.len() + 1,
        dir.display()
    );
    ExitCode::SUCCESS
}
