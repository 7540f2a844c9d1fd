use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mge::data::read_feature_rows;
use mge::experiment::{run_analysis, run_evolve, write_evolve, AnalysisKind, ExperimentConfig};
use mge::network::{Network, Scratch};

#[derive(Parser)]
#[command(name = "mge", version, about = "Modular grammatical evolution of neural network classifiers")]
struct Cli {
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, env = "MGE_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration. Omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run repeated evolutions and write the report.
    Evolve {
        #[command(flatten)]
        run: RunArgs,
        /// Number of repeats, overriding the configuration.
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Classify the rows of a CSV file with a saved network.
    Predict {
        /// A `best_network.json` written by `evolve`.
        #[arg(long)]
        model: PathBuf,
        /// Feature rows, one per line, without labels.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        has_header: bool,
    },
    /// Run one representation analysis.
    Analyze {
        kind: Kind,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Invalidity,
    Locality,
    Scalability,
}

impl From<Kind> for AnalysisKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Invalidity => AnalysisKind::Invalidity,
            Kind::Locality => AnalysisKind::Locality,
            Kind::Scalability => AnalysisKind::Scalability,
        }
    }
}

fn load_config(run: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &run.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &run.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn evolve(run: &RunArgs, repeats: Option<usize>) -> Result<()> {
    let mut cfg = load_config(run)?;
    if let Some(r) = repeats {
        cfg.repeats = r;
    }
    cfg.validate()?;
    let started = Instant::now();
    let (report, runs) = run_evolve(&cfg)?;
    write_evolve(&cfg.out_dir, &report, &runs, started.elapsed().as_secs_f64())?;
    for (name, s) in &report.aggregate {
        eprintln!("{name:>10} {:.4} +- {:.4}", s.mean, s.std);
    }
    eprintln!("{} runs written to {}", report.runs.len(), cfg.out_dir.display());
    Ok(())
}

fn predict(model: &Path, input: &Path, has_header: bool) -> Result<()> {
    let text = std::fs::read_to_string(model).with_context(|| format!("reading {}", model.display()))?;
    let net = Network::from_json(&text).with_context(|| format!("parsing {}", model.display()))?;
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let rows = read_feature_rows(BufReader::new(file), has_header)?;
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != net.features()) {
        bail!(
            "row {}: {} features, but the model expects {}",
            i + 1,
            r.len(),
            net.features()
        );
    }
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    let (mut scratch, mut probs) = (Scratch::default(), Vec::new());
    for (i, row) in rows.iter().enumerate() {
        net.forward_into(row, &mut scratch, &mut probs);
        let class = mge::network::argmax(&probs);
        write!(out, "{i},{class}")?;
        for p in &probs {
            write!(out, ",{p}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    eprintln!("flops per prediction: {}", net.metrics().flops);
    Ok(())
}

fn analyze(kind: Kind, run: &RunArgs) -> Result<()> {
    let cfg = load_config(run)?;
    let csv = run_analysis(&cfg, kind.into(), &cfg.out_dir)?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::FAILURE;
    }
    let result = match &cli.command {
        Command::Evolve { run, repeats } => evolve(run, *repeats),
        Command::Predict {
            model,
            input,
            has_header,
        } => predict(model, input, *has_header),
        Command::Analyze { kind, run } => analyze(*kind, run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
