mod commands;
mod example;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Interval-prompted observation logging: configs, server, journals, exports
/// and agreement statistics.
#[derive(Debug, Parser)]
#[command(name = "dlot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print an example session config.
    Init {
        /// Write to this file instead of stdout. Refuses to overwrite.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a session config and list every problem found.
    Validate { config: PathBuf },
    /// Run the observation server.
    Serve {
        #[arg(long, env = "DLOT_ADDR", default_value = dlot_service::DEFAULT_ADDR)]
        addr: String,
        /// Directory holding session journals.
        #[arg(long, env = "DLOT_DATA_DIR", default_value = "dlot-data")]
        data_dir: PathBuf,
        /// Built observer interface assets to serve at `/`.
        #[arg(long, env = "DLOT_UI_DIR")]
        ui_dir: Option<PathBuf>,
    },
    /// Check journal integrity.
    Verify {
        #[arg(required = true)]
        journals: Vec<PathBuf>,
    },
    /// Replay a journal and print a summary of the recorded session as JSON.
    Replay { journal: PathBuf },
    /// Export a journal's observations.
    Export {
        journal: PathBuf,
        #[arg(long, value_enum, default_value_t = ExportFormat::Csv)]
        format: ExportFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Merge journals of the same session and export the union.
    Merge {
        #[arg(required = true, num_args = 1..)]
        journals: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = ExportFormat::Csv)]
        format: ExportFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write the merge report as JSON to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Inter-rater agreement on one group column of a CSV export.
    Irr {
        csv: PathBuf,
        #[arg(long)]
        group: String,
        /// Observer ids acting as raters, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        raters: Vec<String>,
        #[arg(long, value_enum, default_value_t = Method::Cohen)]
        method: Method,
        /// Print the full result as JSON.
        #[arg(long)]
        json: bool,
    },
    /// System Usability Scale scores from a CSV of 10 answers per row.
    Sus { csv: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExportFormat {
    Csv,
    Xlsx,
}

impl From<ExportFormat> for dlot_core::export::Format {
    fn from(f: ExportFormat) -> Self {
        match f {
            ExportFormat::Csv => dlot_core::export::Format::Csv,
            ExportFormat::Xlsx => dlot_core::export::Format::Xlsx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Percent,
    Cohen,
    Fleiss,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Command::Init { output } => commands::init(output.as_deref()),
        Command::Validate { config } => commands::validate(&config),
        Command::Serve {
            addr,
            data_dir,
            ui_dir,
        } => commands::serve(&addr, data_dir, ui_dir),
        Command::Verify { journals } => commands::verify(&journals),
        Command::Replay { journal } => commands::replay(&journal),
        Command::Export {
            journal,
            format,
            output,
        } => commands::export(&journal, format.into(), output.as_deref()),
        Command::Merge {
            journals,
            format,
            output,
            report,
        } => commands::merge(&journals, format.into(), output.as_deref(), report.as_deref()),
        Command::Irr {
            csv,
            group,
            raters,
            method,
            json,
        } => commands::irr(&csv, &group, &raters, method, json),
        Command::Sus { csv } => commands::sus(&csv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.already_reported {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(1)
        }
    }
}
