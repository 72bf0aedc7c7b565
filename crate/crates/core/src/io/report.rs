//! Report serialization.
//!
//! Text reports are blocks of `key = value` lines opened by `[report]`:
//!
//! ```text
//! [report]
//! scheme = contiguous_pairs
//! method = ag
//! n_examples = 1000
//! u_ppl = 13.26
//! p_ppl = 21.59
//! a_kl = 0.018
//! g_kl = 0.181
//! bucket.1 = 412 2.31        # token distance = count mean_pnll
//! ```
//!
//! Tabular exports are CSV with a header row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{BucketStats, DistanceTable, MetricsReport};
use crate::types::{Method, Scheme};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

pub fn render_reports(reports: &[(Scheme, MetricsReport)]) -> String {
    let mut s = String::new();
    for (k, (scheme, r)) in reports.iter().enumerate() {
        if k > 0 {
            s.push('\n');
        }
        let _ = writeln!(s, "[report]");
        let _ = writeln!(s, "scheme = {scheme}");
        let _ = writeln!(s, "method = {}", r.method);
        let _ = writeln!(s, "n_examples = {}", r.n_examples);
        let _ = writeln!(s, "u_ppl = {}", r.u_ppl);
        let _ = writeln!(s, "p_ppl = {}", r.p_ppl);
        let _ = writeln!(s, "a_kl = {}", r.a_kl);
        let _ = writeln!(s, "g_kl = {}", r.g_kl);
        for (d, b) in &r.per_bucket {
            let _ = writeln!(s, "bucket.{d} = {} {}", b.count, b.mean_pnll);
        }
    }
    s
}

pub fn parse_reports(text: &str) -> Result<Vec<(Scheme, MetricsReport)>> {
    let bad = |line: usize, msg: &str| Error::Format(format!("report line {line}: {msg}"));
    let mut out = Vec::new();
    let mut current: Option<BTreeMap<String, String>> = None;
    let mut finish = |fields: BTreeMap<String, String>| -> Result<()> {
        let get = |k: &str| {
            fields
                .get(k)
                .ok_or_else(|| Error::Format(format!("report block missing {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Format(format!("report field {k} is not a number")))
        };
        let mut per_bucket = BTreeMap::new();
        for (k, v) in &fields {
            if let Some(d) = k.strip_prefix("bucket.") {
                let d: usize = d
                    .parse()
                    .map_err(|_| Error::Format(format!("bad bucket key {k}")))?;
                let (c, m) = v
                    .split_once(' ')
                    .ok_or_else(|| Error::Format(format!("bad bucket value {v}")))?;
                per_bucket.insert(
                    d,
                    BucketStats {
                        count: c.parse().map_err(|_| Error::Format(format!("bad count {c}")))?,
                        mean_pnll: m.parse().map_err(|_| Error::Format(format!("bad mean {m}")))?,
                    },
                );
            }
        }
        out.push((
            get("scheme")?.parse()?,
            MetricsReport {
                method: get("method")?.parse()?,
                n_examples: num("n_examples")? as usize,
                u_ppl: num("u_ppl")?,
                p_ppl: num("p_ppl")?,
                a_kl: num("a_kl")?,
                g_kl: num("g_kl")?,
                per_bucket,
            },
        ));
        Ok(())
    };
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[report]" {
            if let Some(fields) = current.take() {
                finish(fields)?;
            }
            current = Some(BTreeMap::new());
            continue;
        }
        let fields = current
            .as_mut()
            .ok_or_else(|| bad(k + 1, "field outside a [report] block"))?;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(k + 1, "expected key = value"))?;
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }
    if let Some(fields) = current {
        finish(fields)?;
    }
    Ok(out)
}

/// One row of the combined results table.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub method: Method,
    pub n_examples: usize,
    pub u_ppl: f64,
    pub p_ppl: f64,
    pub a_kl: f64,
    pub g_kl: f64,
}

impl SummaryRow {
    pub fn from_report(scheme: Scheme, r: &MetricsReport) -> Self {
        SummaryRow {
            scheme,
            method: r.method,
            n_examples: r.n_examples,
            u_ppl: r.u_ppl,
            p_ppl: r.p_ppl,
            a_kl: r.a_kl,
            g_kl: r.g_kl,
        }
    }
}

const SUMMARY_HEADER: [&str; 7] = ["scheme", "method", "n_examples", "u_ppl", "p_ppl", "a_kl", "g_kl"];

pub fn write_summary_table(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(SUMMARY_HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.scheme.to_string(),
            r.method.to_string(),
            r.n_examples.to_string(),
            r.u_ppl.to_string(),
            r.p_ppl.to_string(),
            r.a_kl.to_string(),
            r.g_kl.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_summary_table(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(SUMMARY_HEADER) {
        return Err(Error::Format(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad number {:?}", path.display(), &rec[k])))
        };
        rows.push(SummaryRow {
            scheme: rec[0].parse()?,
            method: rec[1].parse()?,
            n_examples: num(2)? as usize,
            u_ppl: num(3)?,
            p_ppl: num(4)?,
            a_kl: num(5)?,
            g_kl: num(6)?,
        });
    }
    Ok(rows)
}

/// Long format: one row per (scheme, method, metric).
pub fn write_metrics_long(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["scheme", "method", "metric", "value"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        for (name, value) in [
            ("u_ppl", r.u_ppl),
            ("p_ppl", r.p_ppl),
            ("a_kl", r.a_kl),
            ("g_kl", r.g_kl),
        ] {
            w.write_record([
                r.scheme.as_str(),
                r.method.as_str(),
                name,
                &value.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_distance_table(path: &Path, table: &DistanceTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["kind", "method", "distance", "open_ended", "count", "mean_pnll"])
        .map_err(|e| csv_err(path, e))?;
    for r in &table.rows {
        w.write_record([
            table.kind.as_str().to_string(),
            r.method.to_string(),
            r.distance.to_string(),
            r.open_ended.to_string(),
            r.count.to_string(),
            r.mean_pnll.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}
