use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spectralgv::pipeline::{
    cmd_bench, cmd_run, cmd_synth, parse_world_config, read_config_text, render_bench_table, render_results,
    PipelineError, RunConfig,
};
use spectralgv::rerank::Strategy;
use spectralgv::storage::read_results;
use spectralgv::synthgen::WorldConfig;

#[derive(Parser)]
#[command(name = "sgv", version, about = "Spectral geometric verification for point-cloud retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world and write its archives and manifest.
    Synth {
        /// World config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve, re-rank, register and evaluate every query.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<Strategy>,
        #[arg(long)]
        n_topk: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// 0 picks the number of cores.
        #[arg(long)]
        threads: Option<usize>,
        /// Results file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time re-ranking strategies over several n_topk values.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated strategies.
        #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
        strategy: Vec<Strategy>,
        /// Comma-separated n_topk values.
        #[arg(long, value_delimiter = ',')]
        n_topk: Vec<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretty-print a results file.
    Report { path: PathBuf },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::parse(s).ok_or_else(|| {
        let names: Vec<_> = Strategy::ALL.iter().map(|s| s.name()).collect();
        format!("unknown strategy `{s}` (expected one of {})", names.join(", "))
    })
}

fn load_run_config(
    path: &PathBuf,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = threads {
        cfg.threads = t;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Synth { config, seed, out } => {
            let mut world = match config {
                Some(path) => parse_world_config(&read_config_text(&path)?)?,
                None => WorldConfig::default(),
            };
            if let Some(s) = seed {
                world.seed = s;
            }
            let manifest = cmd_synth(&world, &out)?;
            println!("{}", manifest.display());
        }
        Command::Run { config, strategy, n_topk, seed, threads, out } => {
            let mut cfg = load_run_config(&config, seed, threads, out)?;
            if let Some(s) = strategy {
                cfg.rerank.strategy = s;
            }
            if let Some(n) = n_topk {
                cfg.rerank.n_topk = n;
            }
            let results = cmd_run(&cfg)?;
            print!("{}", render_results(&results));
            println!("results: {}", cfg.out.display());
        }
        Command::Bench { config, strategy, n_topk, seed, threads, out } => {
            let mut cfg = load_run_config(&config, seed, threads, out)?;
            if !strategy.is_empty() {
                cfg.bench_strategies = strategy;
            }
            if !n_topk.is_empty() {
                cfg.bench_n_topk = n_topk;
            }
            let results = cmd_bench(&cfg)?;
            print!("{}", render_bench_table(&results.bench));
            println!("results: {}", cfg.out.display());
        }
        Command::Report { path } => {
            print!("{}", render_results(&read_results(&path)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
