//! Results emission: line-delimited JSON records with a fixed field order
//! (diffable golden files) and a column-aligned human summary.
//!
//! Wall-clock times are deliberately kept out of the record stream — records
//! must be byte-identical for identical spec and seed — and go to a separate
//! timings file instead.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::harness::scenario::GapReport;

/// Writes one JSON object per line. Field order follows the struct
/// definition, so identical inputs produce identical bytes.
pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for row in rows {
        let line = serde_json::to_string(row).expect("serializable record");
        writeln!(file, "{line}")?;
    }
    Ok(())
}

/// Column-aligned summary of a gap report.
pub fn render_table(report: &GapReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<28} {:>10} {:>12} {:>9} {:>10} {:>9} {:>6}\n",
        "scenario", "policy", "surplus", "gap%", "peak", "c*", "clips"
    ));
    for scenario in &report.scenarios {
        for row in &scenario.rows {
            out.push_str(&format!(
                "{:<28} {:>10} {:>12.4} {:>9} {:>10.4} {:>9} {:>6}\n",
                scenario.label,
                row.policy,
                row.surplus,
                row.gap_pct
                    .map(|g| format!("{:.2}%", 100.0 * g))
                    .unwrap_or_else(|| "-".into()),
                row.realized_peak,
                row.computed_peak
                    .map(|c| format!("{c:.4}"))
                    .unwrap_or_else(|| "-".into()),
                row.clip_events,
            ));
        }
    }
    out
}

/// Timing sidecar row.
#[derive(Serialize)]
struct TimingRecord<'a> {
    label: &'a str,
    policy: &'a str,
    wall_ms: f64,
}

/// Emits a gap report into `out_dir`: `records.jsonl`, `summary.txt`, and
/// `timings.jsonl`. Returns the written paths.
pub fn emit_results(report: &GapReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let records_path = out_dir.join("records.jsonl");
    write_records(&records_path, &report.scenarios)?;

    let summary_path = out_dir.join("summary.txt");
    fs::write(&summary_path, render_table(report))?;

    let timings_path = out_dir.join("timings.jsonl");
    let timing_rows: Vec<TimingRecord> = report
        .scenarios
        .iter()
        .flat_map(|s| {
            s.rows.iter().map(move |r| TimingRecord {
                label: &s.label,
                policy: &r.policy,
                wall_ms: r.wall_ms,
            })
        })
        .collect();
    write_records(&timings_path, &timing_rows)?;

    Ok(vec![records_path, summary_path, timings_path])
}
