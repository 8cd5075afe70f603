//! Delimiter-separated text formats for series, drift intervals, scores and
//! events, plus the JSON evaluation report.

use std::io::{Read, Write};

use crate::bench::{DriftInterval, DriftType, EvalReport};
use crate::detect::{DriftEvent, DriftKind, ScoreSeries};
use crate::error::{AndriError, Result};
use crate::series::TimeSeries;

pub const REPORT_FORMAT: &str = "andri-report/1";

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn bad(line: u64, msg: impl std::fmt::Display) -> AndriError {
    AndriError::FormatError(format!("line {line}: {msg}"))
}

/// Records with an optional header row dropped. A first row is a header
/// when its first field does not parse as a number.
fn records<R: Read>(r: R) -> Result<Vec<csv::StringRecord>> {
    let mut out = Vec::new();
    for (i, rec) in reader(r).records().enumerate() {
        let rec = rec.map_err(|e| AndriError::FormatError(e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        out.push(rec);
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    let line = line_of(rec);
    let raw = rec
        .get(i)
        .ok_or_else(|| bad(line, format!("missing {what}")))?;
    raw.parse()
        .map_err(|_| bad(line, format!("cannot parse {what} `{raw}`")))
}

/// Read `value[,label]` rows. Labels must be present on every row or none.
pub fn read_series<R: Read>(r: R, name: &str) -> Result<TimeSeries> {
    let recs = records(r)?;
    let mut values = Vec::with_capacity(recs.len());
    let mut labels = Vec::new();
    let labeled = recs.first().is_some_and(|r| r.len() >= 2);
    for rec in &recs {
        let line = line_of(rec);
        let v: f64 = field(rec, 0, "value")?;
        if !v.is_finite() {
            return Err(bad(line, "value is not finite"));
        }
        values.push(v);
        match (labeled, rec.len()) {
            (true, 2) => {
                let l: u8 = field(rec, 1, "label")?;
                if l > 1 {
                    return Err(bad(line, format!("label {l} is not 0 or 1")));
                }
                labels.push(l);
            }
            (false, 1) => {}
            (_, n) => {
                return Err(bad(
                    line,
                    format!("expected {} columns, got {n}", if labeled { 2 } else { 1 }),
                ))
            }
        }
    }
    if values.len() < 2 {
        return Err(AndriError::EmptyInput(format!(
            "series `{name}` has {} points",
            values.len()
        )));
    }
    if labeled {
        TimeSeries::with_labels(name, values, labels)
    } else {
        TimeSeries::new(name, values)
    }
}

pub fn write_series<W: Write>(w: &mut W, ts: &TimeSeries) -> Result<()> {
    let mut out = std::io::BufWriter::new(w);
    match ts.labels() {
        Some(labels) => {
            writeln!(out, "value,label")?;
            for (v, l) in ts.values().iter().zip(labels) {
                writeln!(out, "{v},{l}")?;
            }
        }
        None => {
            writeln!(out, "value")?;
            for v in ts.values() {
                writeln!(out, "{v}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_drift<R: Read>(r: R) -> Result<Vec<DriftInterval>> {
    records(r)?
        .iter()
        .map(|rec| {
            let start: usize = field(rec, 0, "start")?;
            let end: usize = field(rec, 1, "end")?;
            let kind: DriftType = field(rec, 2, "kind")?;
            if end < start {
                return Err(bad(line_of(rec), "interval ends before it starts"));
            }
            Ok(DriftInterval { start, end, kind })
        })
        .collect()
}

pub fn write_drift<W: Write>(w: &mut W, intervals: &[DriftInterval]) -> Result<()> {
    let mut out = std::io::BufWriter::new(w);
    writeln!(out, "start,end,kind")?;
    for i in intervals {
        writeln!(out, "{},{},{}", i.start, i.end, i.kind.as_str())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_scores<W: Write>(w: &mut W, s: &ScoreSeries) -> Result<()> {
    let mut out = std::io::BufWriter::new(w);
    writeln!(out, "index,score,active_pattern_id")?;
    for (i, (v, p)) in s.scores.iter().zip(&s.patterns).enumerate() {
        writeln!(out, "{i},{v},{p}")?;
    }
    out.flush()?;
    Ok(())
}

/// Read `index,score[,pattern]` rows; indices must run 0, 1, 2, ...
pub fn read_scores<R: Read>(r: R) -> Result<Vec<f64>> {
    let recs = records(r)?;
    let mut out = Vec::with_capacity(recs.len());
    for (i, rec) in recs.iter().enumerate() {
        let idx: usize = field(rec, 0, "index")?;
        if idx != i {
            return Err(bad(line_of(rec), format!("expected index {i}, got {idx}")));
        }
        let s: f64 = field(rec, 1, "score")?;
        if !s.is_finite() {
            return Err(bad(line_of(rec), "score is not finite"));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn write_events<W: Write>(w: &mut W, events: &[DriftEvent]) -> Result<()> {
    let mut out = std::io::BufWriter::new(w);
    writeln!(out, "index,kind,pattern_id")?;
    for e in events {
        writeln!(out, "{},{},{}", e.at, e.kind.as_str(), e.pattern_id)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_events<R: Read>(r: R) -> Result<Vec<DriftEvent>> {
    records(r)?
        .iter()
        .map(|rec| {
            Ok(DriftEvent {
                at: field(rec, 0, "index")?,
                kind: field::<DriftKind>(rec, 1, "kind")?,
                pattern_id: field(rec, 2, "pattern_id")?,
            })
        })
        .collect()
}

#[derive(serde::Serialize)]
struct ReportDoc<'a> {
    format: &'a str,
    #[serde(flatten)]
    report: &'a EvalReport,
}

pub fn report_json(report: &EvalReport) -> String {
    let doc = ReportDoc {
        format: REPORT_FORMAT,
        report,
    };
    serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
}
