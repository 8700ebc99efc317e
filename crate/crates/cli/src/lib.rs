//! The `speed` command: data generation, experiment runs, sweeps and reports.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime and numerical failures.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use speed_core::harness::{self, ExperimentConfig, ExperimentKind};
use speed_core::timeseries::{add_noise, generate_mg, standardize, write_series_csv, MackeyGlassConfig};
use speed_core::Error;

#[derive(Parser, Debug)]
#[command(name = "speed", version, about = "Spectral eigenfunction kernel adaptive filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a Mackey-Glass series as a one-column CSV.
    Generate {
        #[arg(long, default_value_t = 6000)]
        length: usize,
        /// Seed of the observation noise.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Standard deviation of additive Gaussian noise.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Center and scale the series into [-1, 1].
        #[arg(long)]
        standardize: bool,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Re-run a prediction experiment for each value of one config key.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Config key to vary, e.g. `m` or `batch`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Merge `final.csv` files (or directories containing one) into one table.
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Also write the merged table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> speed_core::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(t) = self.trials {
            cfg.set("trials", &t.to_string())?;
        }
        if let Some(s) = self.seed {
            cfg.set("seed", &s.to_string())?;
        }
        for kv in &self.overrides {
            let Some((k, v)) = kv.split_once('=') else {
                return Err(Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")));
            };
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Argument(_) => 1,
        Error::Numerical(_) | Error::Io(_) => 2,
    }
}

/// Runs the command line `argv` (including the program name) and returns the
/// process exit code.
pub fn cli_main(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("speed: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cmd: Command) -> speed_core::Result<()> {
    match cmd {
        Command::Generate { length, seed, noise, standardize: scale, out } => generate(length, seed, noise, scale, out),
        Command::Run(args) => run(&args.config()?),
        Command::Sweep { run, param, values } => {
            let cfg = run.config()?;
            if cfg.experiment != ExperimentKind::Prediction {
                return Err(Error::Config("sweep supports prediction experiments only".into()));
            }
            let table = harness::sweep(&cfg, &param, &values)?;
            let dir = out_dir(&cfg);
            harness::write_sweep(&dir, &table)?;
            print!("{}", harness::output::sweep_csv(&table));
            Ok(())
        }
        Command::Report { paths, out } => report(&paths, out.as_deref()),
    }
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("speed-out"))
}

fn generate(length: usize, seed: u64, noise: f64, scale: bool, out: Option<PathBuf>) -> speed_core::Result<()> {
    let mut series = generate_mg(&MackeyGlassConfig { length, ..MackeyGlassConfig::default() })?;
    if noise > 0.0 {
        series = add_noise(&series, noise, seed)?;
    }
    if scale {
        series = standardize(&series)?.0;
    }
    match out {
        Some(p) => {
            let f = std::fs::File::create(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            write_series_csv(std::io::BufWriter::new(f), &series)?;
        }
        None => write_series_csv(std::io::stdout().lock(), &series)?,
    }
    Ok(())
}

fn run(cfg: &ExperimentConfig) -> speed_core::Result<()> {
    let dir = out_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.txt"), cfg.render())?;
    match cfg.experiment {
        ExperimentKind::Prediction => {
            let curves = harness::run_prediction_experiment(cfg)?;
            harness::write_curves(&dir, &curves)?;
            print!("{}", harness::output::final_csv(&curves));
        }
        ExperimentKind::Continual => {
            let curves = harness::run_continual_experiment(cfg)?;
            harness::write_curves(&dir, &curves)?;
            print!("{}", harness::output::final_csv(&curves));
        }
        ExperimentKind::Reconstruction => {
            let table = harness::run_reconstruction_experiment(cfg)?;
            harness::write_reconstruction(&dir, &table)?;
            print!("{}", harness::output::reconstruction_csv(&table));
        }
        ExperimentKind::Subspace => {
            let traj = harness::run_subspace_experiment(cfg)?;
            harness::write_subspace(&dir, &traj)?;
            let (first, last) = (traj.mean_distance.first(), traj.mean_distance.last());
            println!(
                "updates={} initial={:.6e} final={:.6e} improved={:.3} interlacing_violations={}",
                traj.mean_distance.len().saturating_sub(1),
                first.copied().unwrap_or(f64::NAN),
                last.copied().unwrap_or(f64::NAN),
                traj.improved_fraction(),
                traj.interlacing_violations
            );
        }
    }
    Ok(())
}

fn report(paths: &[PathBuf], out: Option<&Path>) -> speed_core::Result<()> {
    let mut table = String::from("source,method,final_mean_mse,final_std_mse,mean_dimension\n");
    for p in paths {
        let file = if p.is_dir() { p.join("final.csv") } else { p.clone() };
        for row in harness::read_final_csv(&file)? {
            table.push_str(&format!(
                "{},{},{:.16e},{:.16e},{:.16e}\n",
                p.display(),
                row.method,
                row.mean,
                row.std,
                row.dimension
            ));
        }
    }
    if let Some(o) = out {
        std::fs::write(o, &table)?;
    }
    std::io::stdout().write_all(table.as_bytes())?;
    Ok(())
}
