//! CSV trace ingestion with hourly resampling.
//!
//! Expected schema: a header row with `timestamp,generation_kwh[,demand_kwh]`
//! (column names configurable), ISO-8601 timestamps, rows hourly or finer.
//! Sub-hourly rows are mean-aggregated into their hour. Missing hours are
//! forward-filled up to 3 steps; longer gaps are rejected.

use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use crate::error::{Error, Result};
use crate::model::ExogenousTrace;

/// Column names for trace ingestion.
#[derive(Debug, Clone)]
pub struct TraceSchema {
    pub timestamp: String,
    pub generation: String,
    pub demand: String,
}

impl Default for TraceSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            generation: "generation_kwh".into(),
            demand: "demand_kwh".into(),
        }
    }
}

const MAX_FILL_STEPS: i64 = 3;

fn parse_timestamp(raw: &str) -> Result<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(dt.and_utc().timestamp());
        }
    }
    Err(Error::Trace(format!("unparseable timestamp {raw:?}")))
}

/// Loads, validates, and hourly-resamples a trace file.
pub fn load_trace(path: &Path, schema: &TraceSchema) -> Result<ExogenousTrace> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Option<usize> { headers.iter().position(|h| h == name) };
    let ts_col = col(&schema.timestamp)
        .ok_or_else(|| Error::Trace(format!("missing column {:?}", schema.timestamp)))?;
    let gen_col = col(&schema.generation)
        .ok_or_else(|| Error::Trace(format!("missing column {:?}", schema.generation)))?;
    let demand_col = col(&schema.demand);

    // Hour bucket -> (sum, count) accumulators.
    let mut hours: Vec<i64> = Vec::new();
    let mut gen_acc: Vec<(f64, u32)> = Vec::new();
    let mut dem_acc: Vec<(f64, u32)> = Vec::new();
    let mut last_ts = i64::MIN;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let ts = parse_timestamp(record.get(ts_col).unwrap_or_default())?;
        if ts < last_ts {
            return Err(Error::Trace(format!(
                "timestamps not monotone at data row {}",
                line + 1
            )));
        }
        last_ts = ts;
        let gen: f64 = record
            .get(gen_col)
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|_| Error::Trace(format!("bad generation value at data row {}", line + 1)))?;
        if !gen.is_finite() || gen < 0.0 {
            return Err(Error::Trace(format!(
                "negative generation at data row {}",
                line + 1
            )));
        }
        let demand: Option<f64> = match demand_col {
            Some(c) => {
                let raw = record.get(c).unwrap_or_default().trim();
                if raw.is_empty() {
                    None
                } else {
                    Some(raw.parse().map_err(|_| {
                        Error::Trace(format!("bad demand value at data row {}", line + 1))
                    })?)
                }
            }
            None => None,
        };

        let hour = ts.div_euclid(3600);
        if hours.last() == Some(&hour) {
            let g = gen_acc.last_mut().unwrap();
            g.0 += gen;
            g.1 += 1;
            if let Some(d) = demand {
                let acc = dem_acc.last_mut().unwrap();
                acc.0 += d;
                acc.1 += 1;
            }
        } else {
            hours.push(hour);
            gen_acc.push((gen, 1));
            dem_acc.push(demand.map_or((0.0, 0), |d| (d, 1)));
        }
    }
    if hours.is_empty() {
        return Err(Error::Trace("no data rows".into()));
    }

    // Expand to a contiguous hourly grid, forward-filling short gaps.
    let mut generation = Vec::new();
    let mut demand = Vec::new();
    let has_demand = demand_col.is_some() && dem_acc.iter().any(|&(_, n)| n > 0);
    for i in 0..hours.len() {
        if i > 0 {
            let gap = hours[i] - hours[i - 1] - 1;
            if gap > MAX_FILL_STEPS {
                return Err(Error::Trace(format!(
                    "gap of {gap} hours after hour index {} exceeds {MAX_FILL_STEPS}",
                    i - 1
                )));
            }
            for _ in 0..gap {
                generation.push(*generation.last().unwrap());
                if has_demand {
                    demand.push(*demand.last().unwrap());
                }
            }
        }
        let (g_sum, g_n) = gen_acc[i];
        generation.push(g_sum / g_n as f64);
        if has_demand {
            let (d_sum, d_n) = dem_acc[i];
            if d_n == 0 {
                return Err(Error::Trace(format!(
                    "demand column present but empty in hour index {i}"
                )));
            }
            demand.push(d_sum / d_n as f64);
        }
    }

    ExogenousTrace::new(generation, if has_demand { Some(demand) } else { None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn hourly_rows_load_directly() {
        let mut body = String::from("timestamp,generation_kwh,demand_kwh\n");
        for h in 0..24 {
            body.push_str(&format!("2024-06-01T{h:02}:00:00,1.5,0.7\n"));
        }
        let f = write_csv(&body);
        let trace = load_trace(f.path(), &TraceSchema::default()).unwrap();
        assert_eq!(trace.horizon(), 24);
        assert!((trace.gen(3) - 1.5).abs() < 1e-12);
        assert!((trace.reference_demand().unwrap()[3] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn quarter_hour_rows_are_mean_aggregated() {
        let mut body = String::from("timestamp,generation_kwh\n");
        for q in 0..8 {
            let h = q / 4;
            let m = (q % 4) * 15;
            body.push_str(&format!("2024-06-01T{h:02}:{m:02}:00,{}\n", q as f64));
        }
        let f = write_csv(&body);
        let trace = load_trace(f.path(), &TraceSchema::default()).unwrap();
        assert_eq!(trace.horizon(), 2);
        assert!((trace.gen(0) - 1.5).abs() < 1e-12); // mean of 0..3
        assert!((trace.gen(1) - 5.5).abs() < 1e-12); // mean of 4..7
    }

    #[test]
    fn short_gaps_forward_fill_long_gaps_reject() {
        let body = "timestamp,generation_kwh\n\
                    2024-06-01T00:00:00,1.0\n\
                    2024-06-01T03:00:00,4.0\n";
        let f = write_csv(body);
        let trace = load_trace(f.path(), &TraceSchema::default()).unwrap();
        assert_eq!(trace.horizon(), 4);
        assert_eq!(trace.gen(1), 1.0);
        assert_eq!(trace.gen(2), 1.0);

        let body = "timestamp,generation_kwh\n\
                    2024-06-01T00:00:00,1.0\n\
                    2024-06-01T05:00:00,4.0\n";
        let f = write_csv(body);
        assert!(load_trace(f.path(), &TraceSchema::default()).is_err());
    }

    #[test]
    fn schema_violations_are_rejected() {
        let f = write_csv("time,gen\n2024-06-01T00:00:00,1.0\n");
        assert!(load_trace(f.path(), &TraceSchema::default()).is_err());

        let f = write_csv("timestamp,generation_kwh\n2024-06-01T00:00:00,-1.0\n");
        assert!(load_trace(f.path(), &TraceSchema::default()).is_err());

        let f = write_csv(
            "timestamp,generation_kwh\n2024-06-01T01:00:00,1.0\n2024-06-01T00:00:00,1.0\n",
        );
        assert!(load_trace(f.path(), &TraceSchema::default()).is_err());
    }
}
