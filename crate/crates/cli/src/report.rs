//! Plot-data CSVs from arcs, search and levelset result files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::ReportArgs;
use crate::error::{CliError, CliResult, EXIT_OK, EXIT_USAGE};
use crate::input::read_text;
use crate::manifest::{sha256_hex, Run};

#[derive(Debug, Deserialize, Serialize)]
struct MagnitudeRow {
    alpha: f64,
    abs: f64,
}

#[derive(Debug, Deserialize)]
struct ArcsGrids {
    major: Vec<MagnitudeRow>,
    minor: Vec<MagnitudeRow>,
    trivial: Vec<MagnitudeRow>,
}

#[derive(Debug, Deserialize)]
struct ArcsInput {
    grids: ArcsGrids,
}

#[derive(Debug, Deserialize)]
struct SummaryInput {
    #[serde(rename = "X")]
    x: f64,
    count: u64,
    predicted_order: f64,
    complete: bool,
}

#[derive(Debug, Deserialize)]
struct SweepInput {
    summaries: Vec<SummaryInput>,
}

#[derive(Debug, Deserialize, Serialize)]
struct LevelsetRow {
    y: f64,
    z1: f64,
    z2: f64,
    samples: usize,
    hit_count: usize,
    measure: f64,
    lemma_bound: f64,
    ratio: f64,
}

#[derive(Debug, Serialize)]
struct TrendRow {
    #[serde(rename = "X")]
    x: f64,
    count: u64,
    predicted: f64,
    ratio: f64,
    complete: bool,
}

impl From<&SummaryInput> for TrendRow {
    fn from(s: &SummaryInput) -> Self {
        TrendRow {
            x: s.x,
            count: s.count,
            predicted: s.predicted_order,
            ratio: s.count as f64 / s.predicted_order,
            complete: s.complete,
        }
    }
}

fn mismatch(path: &Path, message: impl Into<String>) -> CliError {
    CliError::new("mismatch", message, EXIT_USAGE).with("path", path.display().to_string())
}

fn decode<T: for<'de> Deserialize<'de>>(path: &Path, schema: &str, value: Value) -> CliResult<T> {
    serde_json::from_value(value).map_err(|e| mismatch(path, format!("{schema} file does not match its schema: {e}")))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

pub fn run(a: &ReportArgs) -> CliResult<i32> {
    if a.inputs.is_empty() {
        return Err(CliError::new("nothing_to_report", "nothing to report", EXIT_USAGE));
    }
    let mut digests = Vec::new();
    let mut arcs: Vec<(PathBuf, ArcsGrids)> = Vec::new();
    let mut trend: Vec<TrendRow> = Vec::new();
    let mut levelsets: Vec<LevelsetRow> = Vec::new();
    for path in &a.inputs {
        let text = read_text(path)?;
        digests.push(sha256_hex(text.as_bytes()));
        let value: Value = serde_json::from_str(&text).map_err(|e| mismatch(path, format!("not a JSON result file: {e}")))?;
        let schema = value.get("schema").and_then(Value::as_str).unwrap_or("").to_string();
        match schema.as_str() {
            "arcs_report" => {
                let r: ArcsInput = decode(path, &schema, value)?;
                arcs.push((path.clone(), r.grids));
            }
            "search_summary" => {
                let s: SummaryInput = decode(path, &schema, value)?;
                trend.push(TrendRow::from(&s));
            }
            "search_sweep" => {
                let s: SweepInput = decode(path, &schema, value)?;
                trend.extend(s.summaries.iter().map(TrendRow::from));
            }
            "levelset_report" => levelsets.push(decode(path, &schema, value)?),
            "" => return Err(mismatch(path, "result file has no schema field")),
            other => return Err(mismatch(path, format!("cannot report on schema {other}"))),
        }
    }
    let run = Run::new("report", None, None, json!({"inputs": digests}));
    let mut files = Vec::new();
    let mut used = std::collections::BTreeMap::<String, usize>::new();
    for (path, grids) in arcs {
        let mut name = stem(&path);
        let seen = used.entry(name.clone()).or_insert(0);
        *seen += 1;
        if *seen > 1 {
            name = format!("{name}_{seen}");
        }
        for (region, rows) in [("major", grids.major), ("minor", grids.minor), ("trivial", grids.trivial)] {
            let out = a.out_dir.join(format!("{name}_{region}.csv"));
            run.write_csv(&out, rows)?;
            files.push(out.display().to_string());
        }
    }
    if !trend.is_empty() {
        let out = a.out_dir.join("n_trend.csv");
        run.write_csv(&out, trend)?;
        files.push(out.display().to_string());
    }
    if !levelsets.is_empty() {
        let out = a.out_dir.join("levelset_measure.csv");
        run.write_csv(&out, levelsets)?;
        files.push(out.display().to_string());
    }
    run.print(json!({"schema": "report_index", "files": files}));
    run.finish()?;
    Ok(EXIT_OK)
}
