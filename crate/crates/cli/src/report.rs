//! Report files. Tables are CSV whose first line is a `# config-digest:`
//! comment; summaries are `key: value` text. Nothing timing-dependent goes
//! into either, so identical runs produce identical bytes.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use sdanet::nn::ActivationKind;
use sdanet::sda::{CorruptionMode, EpochRecord, Evaluation};
use sdanet::search::{CellId, Fig3Table, TrialResult, TrialStatus};

use crate::error::{CliError, CliResult};

pub const DIGEST_PREFIX: &str = "# config-digest: sha256:";

pub fn write(dir: &Path, name: &str, contents: &[u8]) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("cannot create '{}': {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| CliError::Internal(format!("cannot write '{}': {e}", path.display())))?;
    Ok(path)
}

pub fn csv_table(digest: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");
    format!("{DIGEST_PREFIX}{digest}\n{body}")
}

/// Key-value summary with the digest on the first line.
pub fn summary(digest: &str, entries: &[(&str, String)]) -> String {
    let mut out = format!("config-digest: sha256:{digest}\n");
    for (k, v) in entries {
        out.push_str(&format!("{k}: {v}\n"));
    }
    out
}

/// Strips the digest comment so the rest parses as plain CSV.
pub fn strip_digest(text: &str) -> CliResult<(&str, &str)> {
    let rest = text
        .strip_prefix(DIGEST_PREFIX)
        .ok_or_else(|| CliError::Format("report lacks the config-digest line".into()))?;
    rest.split_once('\n')
        .ok_or_else(|| CliError::Format("report ends after the digest line".into()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn history_csv(digest: &str, history: &[EpochRecord]) -> String {
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                r.train_loss.to_string(),
                (100.0 * r.valid_error).to_string(),
            ]
        })
        .collect();
    csv_table(digest, &["epoch", "train_loss", "valid_error_pct"], &rows)
}

pub fn loss_trace_csv(digest: &str, traces: &[Vec<f64>]) -> String {
    let rows: Vec<Vec<String>> = traces
        .iter()
        .enumerate()
        .flat_map(|(layer, trace)| {
            trace
                .iter()
                .enumerate()
                .map(move |(epoch, loss)| vec![layer.to_string(), epoch.to_string(), loss.to_string()])
        })
        .collect();
    csv_table(digest, &["layer", "epoch", "mean_loss"], &rows)
}

pub fn confusion_csv(digest: &str, eval: &Evaluation) -> String {
    let n = eval.confusion.len();
    let mut header = vec!["true\\predicted".to_string()];
    header.extend((0..n).map(|c| c.to_string()));
    header.push("total".into());
    let rows: Vec<Vec<String>> = eval
        .confusion
        .iter()
        .enumerate()
        .map(|(t, row)| {
            let mut r = vec![t.to_string()];
            r.extend(row.iter().map(usize::to_string));
            r.push(row.iter().sum::<usize>().to_string());
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_table(digest, &header, &rows)
}

const LEDGER_HEADER: [&str; 11] = [
    "activation",
    "n_layers",
    "n_neurons",
    "corruption_level",
    "corruption_mode",
    "seed",
    "status",
    "validation_error_pct",
    "test_error_pct",
    "epochs_ran",
    "message",
];

fn status_name(s: &TrialStatus) -> &'static str {
    match s {
        TrialStatus::Ok => "ok",
        TrialStatus::Failed => "failed",
        TrialStatus::BudgetExceeded => "budget-exceeded",
    }
}

pub fn ledger_csv(digest: &str, ledger: &[TrialResult]) -> String {
    let rows: Vec<Vec<String>> = ledger
        .iter()
        .map(|t| {
            vec![
                t.cell.activation.to_string(),
                t.cell.n_layers.to_string(),
                t.cell.n_neurons.to_string(),
                t.cell.corruption_level.to_string(),
                t.cell.corruption_mode.to_string(),
                t.cell.seed.to_string(),
                status_name(&t.status).into(),
                opt(t.validation_error_pct),
                opt(t.test_error_pct),
                t.epochs_ran.to_string(),
                t.message.clone(),
            ]
        })
        .collect();
    csv_table(digest, &LEDGER_HEADER, &rows)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> CliResult<T> {
    rec.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Format(format!("ledger column '{}' is malformed", LEDGER_HEADER[i])))
}

fn opt_field(rec: &csv::StringRecord, i: usize) -> CliResult<Option<f64>> {
    match rec.get(i) {
        Some("") => Ok(None),
        _ => field(rec, i).map(Some),
    }
}

/// Inverse of [`ledger_csv`]; wall times come back as zero.
pub fn parse_ledger_csv(text: &str) -> CliResult<Vec<TrialResult>> {
    let (_, body) = strip_digest(text)?;
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CliError::Format(format!("ledger header: {e}")))?;
    if header.iter().ne(LEDGER_HEADER) {
        return Err(CliError::Format("unexpected ledger columns".into()));
    }
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| CliError::Format(format!("ledger row: {e}")))?;
            let status = match rec.get(6) {
                Some("ok") => TrialStatus::Ok,
                Some("failed") => TrialStatus::Failed,
                Some("budget-exceeded") => TrialStatus::BudgetExceeded,
                _ => return Err(CliError::Format("ledger column 'status' is malformed".into())),
            };
            Ok(TrialResult {
                cell: CellId {
                    activation: field::<ActivationKind>(&rec, 0)?,
                    n_layers: field(&rec, 1)?,
                    n_neurons: field(&rec, 2)?,
                    corruption_level: field(&rec, 3)?,
                    corruption_mode: field::<CorruptionMode>(&rec, 4)?,
                    seed: field(&rec, 5)?,
                },
                status,
                validation_error_pct: opt_field(&rec, 7)?,
                test_error_pct: opt_field(&rec, 8)?,
                epochs_ran: field(&rec, 9)?,
                message: rec.get(10).unwrap_or_default().to_string(),
                wall_time_s: 0.0,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct LedgerJson<'a> {
    config_digest: String,
    trials: &'a [TrialResult],
}

pub fn ledger_json(digest: &str, ledger: &[TrialResult]) -> String {
    let doc = LedgerJson {
        config_digest: format!("sha256:{digest}"),
        trials: ledger,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("ledger serializes");
    s.push('\n');
    s
}

pub fn fig3_csv(digest: &str, table: &Fig3Table) -> String {
    let mut header = vec!["activation".to_string()];
    header.extend(table.layer_counts.iter().map(|l| format!("L{l}")));
    let rows: Vec<Vec<String>> = table
        .activations
        .iter()
        .zip(&table.errors)
        .map(|(act, errs)| {
            let mut r = vec![act.to_string()];
            r.extend(
                errs.iter()
                    .map(|e| e.map_or_else(|| "missing".to_string(), |v| v.to_string())),
            );
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_table(digest, &header, &rows)
}

/// Timing data, kept apart from the deterministic reports.
#[derive(Debug, Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub config_digest: String,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cell_wall_times_s: Vec<(String, f64)>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

pub fn write_metadata(dir: &Path, meta: &RunMetadata) -> CliResult<()> {
    let mut json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    json.push('\n');
    write(dir, "run_meta.json", json.as_bytes()).map(|_| ())
}
