//! Trace and summary writers.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::Trace;
use crate::metrics::MetricsSummary;
use crate::scalar::Scalar;

pub const TRACE_HEADER: &str = "run,batch,epoch_global,epoch_in_batch,lr,val_loss,val_accuracy";

pub const SUMMARY_HEADER: &str = "label,runs,total_epochs,final_loss_mean,final_loss_std,\
final_accuracy_mean,final_accuracy_std,last_window_accuracy_std_mean,last_window_accuracy_std_std,\
first_epoch_to_95_mean,first_epoch_to_95_std";

/// Formats like C's `%.9g`: nine significant digits, trailing zeros dropped.
pub fn sig9(x: f64) -> String {
    const DIGITS: i32 = 9;
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_trace_csv<T: Scalar, W: Write>(trace: &Trace<T>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in &trace.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.run,
            r.batch,
            r.epoch_global,
            r.epoch_in_batch,
            sig9(r.lr.as_f64()),
            sig9(r.val_loss.as_f64()),
            sig9(r.val_accuracy.as_f64())
        )?;
    }
    Ok(())
}

pub fn emit_trace_csv<T: Scalar>(trace: &Trace<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryFormat {
    Csv,
    Json,
}

impl SummaryFormat {
    /// JSON for a `.json` extension, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => SummaryFormat::Json,
            _ => SummaryFormat::Csv,
        }
    }
}

#[derive(Serialize)]
struct LabeledSummary<'a, T> {
    label: &'a str,
    #[serde(flatten)]
    summary: &'a MetricsSummary<T>,
}

pub fn render_summary<T: Scalar + Serialize>(rows: &[(String, MetricsSummary<T>)], format: SummaryFormat) -> String {
    match format {
        SummaryFormat::Csv => {
            let mut out = String::from(SUMMARY_HEADER);
            out.push('\n');
            for (label, s) in rows {
                let cells = [
                    s.final_loss.mean,
                    s.final_loss.std,
                    s.final_accuracy.mean,
                    s.final_accuracy.std,
                    s.last_window_accuracy_std.mean,
                    s.last_window_accuracy_std.std,
                    s.first_epoch_to_95.mean,
                    s.first_epoch_to_95.std,
                ]
                .map(|v| sig9(v.as_f64()));
                out.push_str(&format!("{label},{},{},{}\n", s.runs, s.total_epochs, cells.join(",")));
            }
            out
        }
        SummaryFormat::Json => {
            let rows: Vec<_> = rows
                .iter()
                .map(|(label, summary)| LabeledSummary { label, summary })
                .collect();
            let mut s = serde_json::to_string_pretty(&rows).expect("summaries serialize");
            s.push('\n');
            s
        }
    }
}

pub fn emit_summary<T: Scalar + Serialize>(
    rows: &[(String, MetricsSummary<T>)],
    path: impl AsRef<Path>,
    format: SummaryFormat,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_summary(rows, format)).map_err(|e| Error::io(path, e))
}
