use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use divclust::consensus::Strategy;
use divclust::data::{load_csv, save_csv};
use divclust::runner::artifacts::{consensus_dir, evaluate_dir, report_dir, train_into, RunDir};
use divclust::runner::{ExperimentConfig, RunnerError};

#[derive(Parser)]
#[command(name = "divclust", version, about = "Deep clustering ensembles with controlled diversity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, RunnerError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a blob dataset as <out>/data.csv.
    GenData(Common),
    /// Train, then write checkpoint, curves and per-head labels to <out>.
    Train(Common),
    /// Re-run the evaluation pass of a trained run directory.
    Evaluate {
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
        /// Evaluate on this CSV instead of the configured dataset.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Build one consensus labeling from a run directory.
    Consensus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "C")]
        strategy: Strategy,
        /// Cluster count of the consensus; defaults to the configured C.
        #[arg(long)]
        clusters: Option<usize>,
    },
    /// Print the summary table and write report.json and pairwise_nmi.csv.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), RunnerError> {
    match cli.command {
        Command::GenData(common) => {
            let config = common.resolve()?;
            let dir = RunDir::create(&config.out_dir)?;
            let data = config.dataset()?;
            let path = dir.path("data.csv");
            save_csv(&path, &data)?;
            println!("wrote {} samples to {}", data.len(), path.display());
        }
        Command::Train(common) => {
            let config = common.resolve()?;
            let dir = RunDir::create(&config.out_dir)?;
            let trained = train_into(&dir, &config, &config.dataset()?)?;
            let last = trained.curve.last();
            println!(
                "trained {} steps, final d = {}, final loss = {}",
                trained.curve.len(),
                trained.final_bound,
                last.map_or(f64::NAN, |r| r.total)
            );
            println!("artifacts in {}", dir.root().display());
        }
        Command::Evaluate { out, data } => {
            let dir = RunDir::new(out);
            let dataset = data.as_deref().map(load_csv).transpose()?;
            let eval = evaluate_dir(&dir, dataset.as_ref())?;
            for (k, loss) in eval.losses.iter().enumerate() {
                println!("head {k}: loss {loss}, confidence {}", eval.confidences[k]);
            }
        }
        Command::Consensus { out, strategy, clusters } => {
            let dir = RunDir::new(out);
            let outcome = consensus_dir(&dir, strategy, clusters)?;
            println!("strategy {strategy} over heads {:?}", outcome.members);
            match outcome.scores {
                Some(s) => println!("ACC {} NMI {} ARI {}", s.acc, s.nmi, s.ari),
                None => println!("no ground truth in run directory"),
            }
            println!("wrote {}", dir.consensus_path(strategy).display());
        }
        Command::Report { out } => {
            let dir = RunDir::new(out);
            let report = report_dir(&dir)?;
            print!("{}", report.render_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
