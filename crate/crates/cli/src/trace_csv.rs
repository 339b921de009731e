//! Trace files: one CSV per run with a fixed header and 17-significant-digit
//! values. Columns without data (no reference, no timing) are left empty.

use std::path::Path;

use rdciag::{Trace, TraceRow};

pub const HEADER: [&str; 8] = ["k", "D", "gap", "dist2", "gamma", "primal_err2", "max_age", "seconds"];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// The fields of one row, in header order.
pub fn row_fields(r: &TraceRow) -> [String; 8] {
    [
        r.k.to_string(),
        num(r.d),
        num(r.gap),
        opt(r.dist2),
        opt(r.gamma),
        opt(r.primal_err2),
        r.max_age.to_string(),
        opt(r.seconds),
    ]
}

/// Writes the initial row (when present) followed by every recorded row.
pub fn write_trace_csv(trace: &Trace, path: &Path) -> Result<(), CsvError> {
    let io = |source| CsvError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(HEADER).map_err(io)?;
    for r in trace.initial.iter().chain(&trace.rows) {
        w.write_record(row_fields(r)).map_err(io)?;
    }
    w.flush().map_err(|e| io(e.into()))?;
    Ok(())
}

/// Reads rows back; the header must match exactly and `k` must increase.
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>, CsvError> {
    let shown = path.display().to_string();
    let io = |source| CsvError::Io {
        path: shown.clone(),
        source,
    };
    let bad = |line: u64, message: String| CsvError::Format {
        path: shown.clone(),
        message: format!("line {line}: {message}"),
    };
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(io)?;
    let header = rd.headers().map_err(io)?.clone();
    if header.iter().ne(HEADER) {
        return Err(bad(1, format!("header must be `{}`", HEADER.join(","))));
    }
    let mut rows: Vec<TraceRow> = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(io)?;
        let line = rec.position().map_or(0, |p| p.line());
        let float = |q: usize| -> Result<f64, CsvError> {
            rec[q]
                .parse::<f64>()
                .map_err(|_| bad(line, format!("column {} is not a number: {:?}", HEADER[q], &rec[q])))
        };
        let maybe = |q: usize| -> Result<Option<f64>, CsvError> {
            if rec[q].is_empty() {
                Ok(None)
            } else {
                float(q).map(Some)
            }
        };
        let int = |q: usize| -> Result<u64, CsvError> {
            rec[q]
                .parse::<u64>()
                .map_err(|_| bad(line, format!("column {} is not an integer: {:?}", HEADER[q], &rec[q])))
        };
        let row = TraceRow {
            k: int(0)?,
            d: float(1)?,
            gap: float(2)?,
            dist2: maybe(3)?,
            gamma: maybe(4)?,
            primal_err2: maybe(5)?,
            max_age: int(6)?,
            seconds: maybe(7)?,
        };
        if rows.last().is_some_and(|p| p.k >= row.k) {
            return Err(bad(line, format!("k = {} does not increase", row.k)));
        }
        rows.push(row);
    }
    Ok(rows)
}
