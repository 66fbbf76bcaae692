//! Command-line entry point: simulate paths, run experiments, reproduce the
//! built-in presets and check the reference oracles.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use chaotic_hedging::harness::presets::{self, Preset, DEFAULT_SEED};
use chaotic_hedging::harness::{
    emit_results, run_experiment, run_oracle_checks, write_path_files, ExperimentConfig, SimulationConfig,
};
use chaotic_hedging::models::simulate_paths;
use chaotic_hedging::{Error, Result};

#[derive(Parser)]
#[command(name = "chaotic-hedging", version, about = "Learn hedging strategies from chaos expansions with random neurons")]
struct Cli {
    /// Worker threads (defaults to the number of logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Bm,
    Cev,
    Affine,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Bm => Preset::Bm,
            PresetArg::Cev => Preset::Cev,
            PresetArg::Affine => Preset::Affine,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a path batch and write it as a binary file plus JSON sidecar.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides all seeds (paths, neurons, model parameters).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a built-in experiment.
    Reproduce {
        preset: PresetArg,
        #[arg(long)]
        desk_scale: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the resolved config instead of running it.
        #[arg(long)]
        dump_config: bool,
    },
    /// Compare the oracles with Monte Carlo.
    OracleCheck {
        #[arg(long)]
        desk_scale: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the results as JSON into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run_and_emit(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let output = run_experiment(config)?;
    let r = &output.report;
    println!("n_train {} n_test {} oracle {}", r.n_train, r.n_test, if r.oracle_available { "available" } else { "unavailable" });
    println!("{:>3} {:>8} {:>13} {:>13} {:>13} {:>10}", "N", "params", "train_mse", "test_mse", "imse_test", "seconds");
    for o in &r.orders {
        let imse = o.imse_test.map(|v| format!("{v:13.6e}")).unwrap_or_else(|| format!("{:>13}", "-"));
        println!(
            "{:>3} {:>8} {:>13.6e} {:>13.6e} {imse} {:>10.3}",
            o.order, o.n_params, o.train_mse, o.test_mse, o.runtime_seconds
        );
    }
    for f in emit_results(&output, out)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let mut sim = SimulationConfig::from_json_file(&config)?;
            if let Some(s) = seed {
                sim.seed = s;
            }
            let paths = simulate_paths(&sim.model, sim.grid, sim.n_paths, sim.seed, sim.measure)?;
            for f in write_path_files(&paths, &out)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Run { config, out, seed } => {
            let mut cfg = ExperimentConfig::from_json_file(&config)?;
            if let Some(s) = seed {
                cfg.seeds = presets::seeds_from(s);
            }
            let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("results"));
            run_and_emit(&cfg, &dir)?;
        }
        Command::Reproduce { preset, desk_scale, out, seed, dump_config } => {
            let which = Preset::from(preset);
            let cfg = presets::preset(which, desk_scale, seed.unwrap_or(DEFAULT_SEED))?;
            let scale = if desk_scale { "desk" } else { "full" };
            let dir = out.unwrap_or_else(|| PathBuf::from("results").join(format!("{}-{scale}", which.name())));
            if dump_config {
                std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
                let path = dir.join("config.json");
                std::fs::write(&path, serde_json::to_string_pretty(&cfg)?).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                println!("wrote {}", path.display());
            } else {
                run_and_emit(&cfg, &dir)?;
            }
        }
        Command::OracleCheck { desk_scale, seed, out } => {
            let lines = run_oracle_checks(desk_scale, seed.unwrap_or(DEFAULT_SEED))?;
            for l in &lines {
                println!("{l}");
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
                let path = dir.join("oracle_check.json");
                std::fs::write(&path, serde_json::to_string_pretty(&lines)?).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            }
            let failed = lines.iter().filter(|l| !l.pass).count();
            if failed > 0 {
                return Err(Error::Numerical(format!("{failed} of {} oracle checks failed", lines.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
