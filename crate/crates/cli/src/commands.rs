use std::fmt::Display;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dlot_core::analytics::{
    align_export, cohen_kappa, fleiss_kappa, percent_agreement, sus_mean, AgreementResult, SusResponse,
};
use dlot_core::export::{self, Format};
use dlot_core::journal::{self, ReplayReport};
use dlot_core::merge::merge_journals;
use dlot_core::{parse_config, ObservationStatus};
use dlot_service::{ServiceConfig, SystemClock};
use serde_json::json;

use crate::Method;

/// A domain failure. Exit status 1.
#[derive(Debug)]
pub struct Failure {
    pub message: String,
    /// Details were already printed to stderr.
    pub already_reported: bool,
}

impl Failure {
    fn reported(message: impl Into<String>) -> Self {
        Failure {
            message: message.into(),
            already_reported: true,
        }
    }
}

impl<E: Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            message: e.to_string(),
            already_reported: false,
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn emit(bytes: &[u8], output: Option<&Path>) -> Outcome {
    match output {
        Some(path) => std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

pub fn init(output: Option<&Path>) -> Outcome {
    let text = crate::example::config(dlot_core::Timestamp::now());
    match output {
        Some(path) => {
            let mut file = OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(path)
                .map_err(|e| format!("{}: {e}", path.display()))?;
            file.write_all(text.as_bytes())?;
            Ok(())
        }
        None => emit(text.as_bytes(), None),
    }
}

pub fn validate(path: &Path) -> Outcome {
    let text = String::from_utf8(read(path)?).map_err(|_| format!("{}: not UTF-8", path.display()))?;
    match parse_config(&text) {
        Ok(config) => {
            println!(
                "ok: {} ({} subjects, {} groups, {} ms interval)",
                config.session_id,
                config.roster.len(),
                config.scheme.groups.len(),
                config.timer.interval_millis()
            );
            Ok(())
        }
        Err(violations) => {
            for v in &violations {
                eprintln!("{}: {v}", path.display());
            }
            Err(Failure::reported(format!("{} problems", violations.len())))
        }
    }
}

pub fn serve(addr: &str, data_dir: PathBuf, ui_dir: Option<PathBuf>) -> Outcome {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let config = ServiceConfig {
            data_dir,
            ui_dir,
            ..ServiceConfig::default()
        };
        let service = dlot_service::start(addr, config, Arc::new(SystemClock)).await?;
        for note in &service.recovered {
            match &note.error {
                None => eprintln!(
                    "resumed {} from {} ({} entries{})",
                    note.session_id.as_deref().unwrap_or("?"),
                    note.path.display(),
                    note.entries,
                    if note.truncated_tail { ", torn tail dropped" } else { "" }
                ),
                Some(e) => eprintln!("skipped {}: {e}", note.path.display()),
            }
        }
        eprintln!("listening on {}", service.url());
        tokio::signal::ctrl_c().await?;
        eprintln!("shutting down");
        service.shutdown().await?;
        Ok(())
    })
}

fn describe(report: &ReplayReport) -> String {
    match (&report.first_bad_line, report.truncated_tail) {
        (Some(line), _) => format!(
            "corrupt at line {line}: {}",
            report.problem.as_deref().unwrap_or("invalid record")
        ),
        (None, true) => format!("{} entries, torn final record (recoverable)", report.entries_read),
        (None, false) => format!("ok, {} entries", report.entries_read),
    }
}

pub fn verify(paths: &[PathBuf]) -> Outcome {
    let mut bad = 0;
    for path in paths {
        let report = match std::fs::read(path) {
            Ok(bytes) => journal::verify(&bytes),
            Err(e) => {
                println!("{}: unreadable: {e}", path.display());
                bad += 1;
                continue;
            }
        };
        println!("{}: {}", path.display(), describe(&report));
        if report.first_bad_line.is_some() || report.entries_read == 0 {
            bad += 1;
        }
    }
    if bad > 0 {
        return Err(format!("{bad} of {} journals failed verification", paths.len()).into());
    }
    Ok(())
}

pub fn replay(path: &Path) -> Outcome {
    let (state, report) = journal::replay(&read(path)?)?;
    let count = |status| state.observations().iter().filter(|o| o.status == status).count();
    let summary = json!({
        "session_id": state.config().session_id,
        "title": state.config().title,
        "phase": state.phase(),
        "started_at": state.started_at(),
        "ended_at": state.ended_at(),
        "prompts_issued": state.prompts_issued(),
        "observations": {
            "total": state.observations().len(),
            "logged": count(ObservationStatus::Logged),
            "skipped": count(ObservationStatus::Skipped),
            "missed": count(ObservationStatus::Missed),
        },
        "replay": report,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if report.truncated_tail {
        eprintln!("{}: torn final record ignored", path.display());
    }
    Ok(())
}

pub fn export(path: &Path, format: Format, output: Option<&Path>) -> Outcome {
    let (state, _) = journal::replay(&read(path)?)?;
    emit(&format.render(&export::to_rows(&state)), output)
}

pub fn merge(paths: &[PathBuf], format: Format, output: Option<&Path>, report_path: Option<&Path>) -> Outcome {
    let merged = merge_journals(paths)?;
    emit(
        &format.render(&export::rows_from(&merged.config, &merged.observations)),
        output,
    )?;
    let report = serde_json::to_string_pretty(&merged.report)?;
    if let Some(p) = report_path {
        std::fs::write(p, format!("{report}\n")).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    eprintln!(
        "merged {} rows from {} journals, {} conflicts",
        merged.report.rows_merged,
        paths.len(),
        merged.report.conflicts.len()
    );
    for c in &merged.report.conflicts {
        eprintln!("conflict: {} differs between {} and {}", c.key, c.sources.0, c.sources.1);
    }
    if !merged.report.conflicts.is_empty() {
        return Err(Failure::reported("conflicting observations were excluded"));
    }
    Ok(())
}

pub fn irr(csv: &Path, group: &str, raters: &[String], method: Method, as_json: bool) -> Outcome {
    let table = export::parse_csv(&read(csv)?)?;
    let (ratings, alignment) = align_export(&table, group, raters)?;
    let result: AgreementResult = match method {
        Method::Percent => percent_agreement(&ratings)?,
        Method::Cohen => cohen_kappa(&ratings)?,
        Method::Fleiss => fleiss_kappa(&ratings)?,
    };
    if as_json {
        let doc = json!({"result": result, "alignment": alignment});
        println!("{}", serde_json::to_string_pretty(&doc)?);
        return Ok(());
    }
    let name = match method {
        Method::Percent => "agreement",
        Method::Cohen | Method::Fleiss => "kappa",
    };
    println!("{name} = {:.4}", result.value);
    println!("statistic: {}", result.statistic.as_str());
    println!("raters: {}", raters.join(", "));
    println!("items: {} (dropped {})", result.n_items, alignment.dropped);
    println!("observed agreement: {:.4}", result.observed_agreement);
    if method != Method::Percent {
        println!("chance agreement: {:.4}", result.chance_agreement);
    }
    Ok(())
}

pub fn sus(path: &Path) -> Outcome {
    let bytes = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let mut responses = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let numbers: Result<Vec<i64>, _> = record.iter().map(str::parse::<i64>).collect();
        let answers = match numbers {
            Ok(n) => n,
            // a header row
            Err(_) if i == 0 => continue,
            Err(_) => return Err(format!("row {}: answers must be integers 1-5", i + 1).into()),
        };
        let response = SusResponse::new(&answers).map_err(|e| format!("row {}: {e}", i + 1))?;
        responses.push(response);
    }
    let mean = sus_mean(&responses)?;
    let mut out = String::from("respondent,score\n");
    for (i, r) in responses.iter().enumerate() {
        out.push_str(&format!("{},{:.1}\n", i + 1, r.score()));
    }
    out.push_str(&format!("mean,{mean:.2}\n"));
    emit(out.as_bytes(), None)
}
