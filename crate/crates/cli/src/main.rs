use std::path::PathBuf;
use std::process::ExitCode;

use adpsgd_cli::commands::{prepare_config, run, Overrides};
use adpsgd_cli::config::ExperimentKind;
use adpsgd_cli::{exit_code, CliError, Outcome};
use clap::{Args, Parser, Subcommand};

const OUTPUT_HELP: &str = "\
Output files (floats use 17 significant digits):
  mixing.csv     kind,L,k,measured,bound,log10_measured,log10_bound
  spectral.csv   L,lambda_hat,lambda_closed_form,spectral_gap
  run.csv        epoch,heldout_loss,lr,train_loss
  consensus.csv  k,distance
  summary.txt    key = value lines (status, final loss, divergence)
  slowdown.csv   strategy,factor,baseline_s,straggler_s,ratio
  events.csv     t,learner,event,iteration (coupled straggler runs)
  verify.txt     PASS/FAIL line per check
Every run directory also gets config.resolved.toml.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 training divergence.";

#[derive(Parser)]
#[command(name = "adpsgd", version, about = "Decentralized parallel SGD experiments", after_help = OUTPUT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run config
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides experiment.out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides experiment.seed)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Consensus decay of fixed and random ring mixing against their bounds
    #[command(after_help = "Writes mixing.csv (kind,L,k,measured,bound,log10_measured,log10_bound) and spectral.csv (L,lambda_hat,lambda_closed_form,spectral_gap).")]
    AnalyzeMixing {
        #[command(flatten)]
        common: Common,
        /// Largest product length
        #[arg(long)]
        k_max: Option<u64>,
        /// Random permutation sequences per ring size
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated ring sizes, e.g. 16,32,64
        #[arg(long, value_delimiter = ',')]
        learners: Option<Vec<usize>>,
    },
    /// Train one strategy on a toy objective
    #[command(after_help = "Writes run.csv (epoch,heldout_loss,lr,train_loss), consensus.csv (k,distance) and summary.txt. Exits 3 on divergence.")]
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Epoch-time slowdown caused by one slow learner
    #[command(after_help = "Writes slowdown.csv (strategy,factor,baseline_s,straggler_s,ratio). In coupled mode also coupled/<strategy>/{baseline,f<factor>}/ with run.csv, consensus.csv, summary.txt and events.csv.")]
    Stragglers {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form, Monte-Carlo and equivalence checks
    #[command(after_help = "Writes verify.txt with one PASS/FAIL line per check. Exits 1 if any check fails.")]
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

fn execute(cli: Cli) -> Result<Outcome, CliError> {
    let (kind, common, mut overrides) = match cli.command {
        Command::AnalyzeMixing {
            common,
            k_max,
            trials,
            learners,
        } => (
            ExperimentKind::AnalyzeMixing,
            common,
            Overrides {
                k_max,
                trials,
                learners,
                ..Overrides::default()
            },
        ),
        Command::Train { common } => (ExperimentKind::Train, common, Overrides::default()),
        Command::Stragglers { common } => (ExperimentKind::Stragglers, common, Overrides::default()),
        Command::Verify { common } => (ExperimentKind::Verify, common, Overrides::default()),
    };
    overrides.seed = common.seed;
    overrides.out = common.out;
    let cfg = prepare_config(kind, common.config.as_deref(), &overrides)?;
    run(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { adpsgd_cli::EXIT_USAGE } else { 0 });
        }
    };
    let result = execute(cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    exit_code(&result)
}
