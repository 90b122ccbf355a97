use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rgf_cli::commands::{CHECKPOINT_FILE, MCNS_FILE};
use rgf_cli::{
    cmd_backtrack, cmd_cv, cmd_enrich, cmd_pipeline, cmd_synth, cmd_trace, cmd_train,
    with_workers, PipelineConfig, SynthSpecFile,
};
use rgf_core::backtrack::BacktrackMode;
use rgf_core::trace::IeSign;

#[derive(Parser)]
#[command(name = "rgf", version, about = "Find candidate causal genes by tracing and backtracking a single-cell classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted marker genes
    Synth {
        /// TOML description of the corpus; defaults are used when omitted
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the tracing fold and save the model
    Train(Common),
    /// Cross-validate and report metrics
    Cv(Common),
    /// Causal tracing over the test split
    Trace {
        #[command(flatten)]
        common: Common,
        /// Defaults to model.rgfm in the output directory
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        tracing: TraceArgs,
    },
    /// Score gene tokens from a set of most causal neurons
    Backtrack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to mcns.csv in the output directory
        #[arg(long)]
        mcns: Option<PathBuf>,
        #[command(flatten)]
        scoring: BacktrackArgs,
    },
    /// Pathway over-representation of the listed genes
    Enrich {
        #[arg(long)]
        mcgs: PathBuf,
        #[arg(long)]
        gmt: PathBuf,
        /// Vocabulary used as background universe
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every stage end to end
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tracing: TraceArgs,
        #[command(flatten)]
        scoring: BacktrackArgs,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (must exist); overrides paths.out
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum)]
    ie_sign: Option<SignArg>,
}

#[derive(Args)]
struct BacktrackArgs {
    #[arg(long)]
    top_k: Option<usize>,
    /// Leave the known genes out of the reported ranking
    #[arg(long)]
    exclude_known: bool,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    RestoredMinusCorrupted,
    CorruptedMinusRestored,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Strict,
    Relaxed,
}

impl Common {
    fn load(&self) -> Result<(PipelineConfig, PathBuf)> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.paths.out = Some(o.clone());
        }
        let out = cfg
            .paths
            .out
            .clone()
            .context("no output directory (use --out or paths.out)")?;
        Ok((cfg, out))
    }
}

impl TraceArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(p) = self.percentile {
            cfg.trace.percentile = p;
        }
        if let Some(s) = self.sigma {
            cfg.trace.sigma = s;
        }
        if let Some(s) = self.ie_sign {
            cfg.trace.ie_sign = match s {
                SignArg::RestoredMinusCorrupted => IeSign::RestoredMinusCorrupted,
                SignArg::CorruptedMinusRestored => IeSign::CorruptedMinusRestored,
            };
        }
    }
}

impl BacktrackArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(k) = self.top_k {
            cfg.backtrack.top_k = k;
        }
        if self.exclude_known {
            cfg.backtrack.exclude_known = true;
        }
        if let Some(m) = self.mode {
            cfg.backtrack.mode = match m {
                ModeArg::Strict => BacktrackMode::Strict,
                ModeArg::Relaxed => BacktrackMode::Relaxed,
            };
        }
    }
}

fn or_default(path: &Option<PathBuf>, out: &Path, name: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| out.join(name))
}

fn print_report(r: &rgf_core::train::MetricsReport) {
    println!("AUC          {}", r.auc.percent());
    println!("sensitivity  {}", r.sensitivity.percent());
    println!("specificity  {}", r.specificity.percent());
    println!("F1           {}", r.f1.percent());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, seed, out } => {
            let mut file = match spec {
                Some(p) => SynthSpecFile::load(&p)?,
                None => SynthSpecFile::default(),
            };
            if let Some(s) = seed {
                file.seed = s;
            }
            cmd_synth(&file.to_spec()?, &out)?;
            println!("wrote synthetic corpus to {}", out.display());
        }
        Command::Train(common) => {
            let (cfg, out) = common.load()?;
            let r = with_workers(common.workers, || cmd_train(&cfg, &out))??;
            print_report(&r);
        }
        Command::Cv(common) => {
            let (cfg, out) = common.load()?;
            let r = with_workers(common.workers, || cmd_cv(&cfg, &out))??;
            print_report(&r);
        }
        Command::Trace { common, checkpoint, tracing } => {
            let (mut cfg, out) = common.load()?;
            tracing.apply(&mut cfg);
            let ckpt = or_default(&checkpoint, &out, CHECKPOINT_FILE);
            let t = with_workers(common.workers, || cmd_trace(&cfg, &ckpt, &out))??;
            println!(
                "traced {} samples ({} skipped); {} MCNs at cutoff {}",
                t.grid.n_samples,
                t.grid.n_skipped,
                t.mcns.len(),
                t.mcns.cutoff
            );
        }
        Command::Backtrack { common, checkpoint, mcns, scoring } => {
            let (mut cfg, out) = common.load()?;
            scoring.apply(&mut cfg);
            let ckpt = or_default(&checkpoint, &out, CHECKPOINT_FILE);
            let mcns = or_default(&mcns, &out, MCNS_FILE);
            let top = with_workers(common.workers, || cmd_backtrack(&cfg, &ckpt, &mcns, &out))??;
            print!("{}", rgf_core::backtrack::format_mcgs(&top));
        }
        Command::Enrich { mcgs, gmt, vocab, alpha, out } => {
            let r = cmd_enrich(&mcgs, &gmt, vocab.as_deref(), alpha, &out)?;
            for p in &r.significant {
                println!("{}", rgf_core::enrich::format_pathway(p));
            }
            if r.n_dropped > 0 {
                eprintln!("warning: {} genes outside the background were dropped", r.n_dropped);
            }
        }
        Command::Pipeline { common, tracing, scoring } => {
            let (mut cfg, out) = common.load()?;
            tracing.apply(&mut cfg);
            scoring.apply(&mut cfg);
            let r = with_workers(common.workers, || cmd_pipeline(&cfg, &out))??;
            print_report(&r.metrics);
            print!("{}", rgf_core::backtrack::format_mcgs(&r.mcgs));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
