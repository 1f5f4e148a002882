use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use fedsim::{load_config, run, ExperimentConfig, Mode};

#[derive(Debug, Parser)]
#[command(name = "fedsim", version, about = "Deterministic federated-learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiments described by a JSON config file.
    Run {
        /// JSON config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write roc.svg for every evaluated model.
        #[arg(long)]
        plot: bool,
        /// Replace the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn defaults_help() -> String {
    let example = ExperimentConfig::with_defaults(Mode::Both, 0).to_json();
    format!(
        "CONFIG\n  A JSON object. `mode` (centralized, federated or both) and `seed` are required;\n  \
         unknown keys are rejected. Every other key defaults as below.\n  \
         `dataset` may instead be {{\"csv\": {{\"path\": \"data.csv\", \"header\": false}}}};\n  \
         `partition` may be {{\"kind\": \"dirichlet\", \"alpha\": 0.5}};\n  \
         `strategy.rule` is one of fedavg, fedmedian, fedprox, fedopt;\n  \
         `dynamic_lr` is null or a factor >= 1 for the second half of the clients.\n\n{example}\n\n\
         EXIT STATUS\n  0 success, 1 configuration or usage error, 2 runtime error"
    )
}

fn main() -> ExitCode {
    let command = Cli::command().mut_subcommand("run", |c| c.after_long_help(defaults_help()));
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };

    let Command::Run { config, out, plot, seed } = cli.command;
    let mut config = match load_config(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("fedsim: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    match run(&config, &out, plot) {
        Ok(result) => {
            if let Some(rows) = &result.report.summary {
                print!("{}", fedsim::report::summary_table(rows, &result.report.timing));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fedsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
