use std::path::PathBuf;
use std::process::ExitCode;

use cellink_core::encoder::{Backend, MODEL_CACHE_ENV};
use cellink_core::eval::render_text;
use cellink_core::pipeline::{Pipeline, PipelineConfig, Stage};
use cellink_core::Error;
use clap::{Parser, Subcommand};

/// Link table cells of scientific papers to a method/dataset knowledge base.
#[derive(Debug, Parser)]
#[command(name = "cellink", version, after_help = format!(
    "Exit codes: 0 success, 1 other failure, 2 missing upstream artifact, 3 invalid configuration.\n\
     {MODEL_CACHE_ENV} names the model cache directory for backends with pretrained weights."
))]
struct Cli {
    /// TOML pipeline configuration. Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// outKB threshold.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Candidate set size.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Test topic of the cross-domain fold to train or predict.
    #[arg(long, global = true)]
    fold: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and normalize the knowledge base.
    IngestKb {
        /// Convert a Papers with Code style JSON dump instead of reading `paths.kb`.
        #[arg(long)]
        from_pwc: Option<PathBuf>,
    },
    /// Load, check and normalize the annotated corpus.
    IngestCorpus,
    TrainCtc,
    TrainAsm,
    TrainDr,
    TrainEd,
    /// Run all four stages and write prediction files.
    Predict,
    /// Score predictions against gold annotations.
    Evaluate,
    /// Re-decide links over the threshold grid from stored scores.
    Sweep,
}

fn config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = &cli.work_dir {
        cfg.paths.work_dir = w.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threshold {
        cfg.threshold = t;
    }
    if let Some(k) = cli.k {
        cfg.k = k;
    }
    if let Some(b) = &cli.backend {
        cfg.backend = b.parse::<Backend>()?;
    }
    if let Some(f) = &cli.fold {
        cfg.fold = Some(f.clone());
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let p = Pipeline::new(config(cli)?)?;
    match &cli.command {
        Command::IngestKb { from_pwc } => {
            let c = p.ingest_kb(from_pwc.as_deref())?;
            println!(
                "methods {}  datasets {}  papers {}  relations {}",
                c.methods, c.datasets, c.papers, c.relations
            );
        }
        Command::IngestCorpus => {
            let r = p.ingest_corpus()?;
            println!(
                "papers {}  tables {}  ctc cells {}  asm cells {}  el cells {}",
                r.counts.papers, r.counts.tables, r.counts.ctc, r.counts.asm, r.counts.el
            );
            for w in &r.warnings {
                println!("warning: {w}");
            }
        }
        Command::TrainCtc => println!("{}", p.train(Stage::Ctc)?.display()),
        Command::TrainAsm => println!("{}", p.train(Stage::Asm)?.display()),
        Command::TrainDr => println!("{}", p.train(Stage::Dr)?.display()),
        Command::TrainEd => println!("{}", p.train(Stage::Ed)?.display()),
        Command::Predict => println!("{}", p.predict()?.display()),
        Command::Evaluate => print!("{}", render_text(&p.evaluate()?)),
        Command::Sweep => {
            println!("threshold  outkb_predictions  outkb_f1  hit@1  accuracy");
            for r in p.sweep()? {
                println!(
                    "{:9.3}  {:17}  {:8.3}  {:5.3}  {:8.3}",
                    r.threshold, r.outkb_predictions, r.report.outkb.f1, r.report.hit_at_1, r.report.accuracy
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "cellink_core=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::MissingArtifact(_) => 2,
                Error::Config(_) => 3,
                _ => 1,
            })
        }
    }
}
