use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gravcontact_cli::{list, resolve_out_dir, run, CliError, ListKind, Scenario};

#[derive(Parser)]
#[command(name = "gravcontact", version, about = "Verify phase-space structures and symmetries of test particles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tasks of a scenario config and write reports.
    Run {
        config: PathBuf,
        /// Output directory (overrides GRAVCONTACT_OUT_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List a catalog.
    List {
        #[arg(value_enum)]
        kind: ListKind,
        /// Metric name, for killing-fields.
        metric: Option<String>,
    },
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run { config, out } => {
            let scenario = Scenario::load(&config)?;
            let dir = resolve_out_dir(out);
            let summary = run(&scenario, &dir)?;
            for task in &summary.tasks {
                for r in &task.reports {
                    println!("{}", r.summary_line());
                }
            }
            println!("reports written to {}", dir.display());
            Ok(summary.pass)
        }
        Command::List { kind, metric } => {
            print!("{}", list(kind, metric.as_deref())?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
