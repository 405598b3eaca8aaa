//! Run traces and their CSV / JSON encodings.
//!
//! CSV cells use `{:.16e}` (17 significant digits), which parses back to the
//! identical `f64`. Absent cadenced values are empty cells.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, SolverConfig};

pub const CSV_HEADER: [&str; 11] = [
    "k", "c_k", "F", "f", "gap", "residual", "merit", "dxy", "dz", "dtl", "sec",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub c_k: f64,
    /// `F(x^k, y^k)`.
    pub upper: f64,
    /// `f(x^k, y^k)`.
    pub lower: f64,
    /// `f - v` at the record (cadenced).
    pub gap: Option<f64>,
    /// Stationarity residual `R_k` (cadenced).
    pub residual: Option<f64>,
    /// Merit `V_k` (cadenced, optional).
    pub merit: Option<f64>,
    /// Norms of the step that produced this iterate.
    pub dxy: f64,
    pub dz: f64,
    pub dtl: f64,
    pub sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub problem: String,
    pub seed: Option<u64>,
    pub config: SolverConfig,
    /// Step sizes actually used at `k = 0`.
    pub alpha0: f64,
    pub beta0: f64,
    pub eta0: f64,
    pub eta_guard: f64,
    pub upper_floor: Option<f64>,
    pub iterations: usize,
    pub stop_reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub metadata: TraceMetadata,
    pub records: Vec<TraceRecord>,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(format!("trace csv: {e}"))
}

/// Writes the records in the fixed CSV layout.
pub fn write_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            fmt_f64(r.c_k),
            fmt_f64(r.upper),
            fmt_f64(r.lower),
            fmt_opt(r.gap),
            fmt_opt(r.residual),
            fmt_opt(r.merit),
            fmt_f64(r.dxy),
            fmt_f64(r.dz),
            fmt_f64(r.dtl),
            fmt_f64(r.sec),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)?;
    Ok(())
}

pub fn csv_string(records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is ascii")
}

/// Parses records written by [`write_csv`]. Rejects a different header, a
/// wrong field count and non-increasing `k`.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = rd.headers().map_err(csv_err)?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse(format!(
            "trace csv: unexpected header {:?}",
            header
        )));
    }
    let mut out: Vec<TraceRecord> = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = row + 2;
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::Parse(format!(
                "trace csv line {line}: expected 11 fields"
            )));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| {
                Error::Parse(format!(
                    "trace csv line {line}: bad number {:?} in {}",
                    &rec[i], CSV_HEADER[i]
                ))
            })
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let k = rec[0].parse::<usize>().map_err(|_| {
            Error::Parse(format!(
                "trace csv line {line}: bad iteration index {:?}",
                &rec[0]
            ))
        })?;
        if let Some(prev) = out.last() {
            if k <= prev.k {
                return Err(Error::Parse(format!(
                    "trace csv line {line}: k must increase"
                )));
            }
        }
        out.push(TraceRecord {
            k,
            c_k: num(1)?,
            upper: num(2)?,
            lower: num(3)?,
            gap: opt(4)?,
            residual: opt(5)?,
            merit: opt(6)?,
            dxy: num(7)?,
            dz: num(8)?,
            dtl: num(9)?,
            sec: num(10)?,
        });
    }
    Ok(out)
}

impl Trace {
    pub fn to_csv(&self) -> String {
        csv_string(&self.records)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Trace =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("trace json: {e}")))?;
        if t.records.windows(2).any(|w| w[1].k <= w[0].k) {
            return Err(Error::Parse("trace json: k must increase".into()));
        }
        Ok(t)
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Running minimum of the recorded residuals, indexed like the cadenced records.
    pub fn best_residual(&self) -> Vec<(usize, f64)> {
        let mut best = f64::INFINITY;
        self.records
            .iter()
            .filter_map(|r| r.residual.map(|v| (r.k, v)))
            .map(|(k, v)| {
                best = best.min(v);
                (k, best)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<TraceRecord> {
        vec![
            TraceRecord {
                k: 0,
                c_k: 1.0,
                upper: 0.1 + 0.2,
                lower: -1.0 / 3.0,
                gap: Some(1e-300),
                residual: Some(std::f64::consts::PI),
                merit: None,
                dxy: 0.0,
                dz: 0.0,
                dtl: 0.0,
                sec: 0.0,
            },
            TraceRecord {
                k: 7,
                c_k: 7f64.powf(0.3),
                upper: f64::MAX,
                lower: -f64::MIN_POSITIVE,
                gap: None,
                residual: None,
                merit: Some(-0.0),
                dxy: 5e-324,
                dz: 1.0,
                dtl: 2.0,
                sec: 0.5,
            },
        ]
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let recs = sample();
        let text = csv_string(&recs);
        assert!(text.starts_with("k,c_k,F,f,gap,residual,merit,dxy,dz,dtl,sec\n"));
        let back = read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.upper.to_bits(), b.upper.to_bits());
            assert_eq!(a.lower.to_bits(), b.lower.to_bits());
            assert_eq!(a.c_k.to_bits(), b.c_k.to_bits());
            assert_eq!(a.dxy.to_bits(), b.dxy.to_bits());
            assert_eq!(a.merit.map(f64::to_bits), b.merit.map(f64::to_bits));
        }
        assert_eq!(recs, back);
    }

    #[test]
    fn csv_rejects_bad_input() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let mut text = csv_string(&sample());
        text.push_str("3,1,1,1,,,,0,0,0,0\n");
        assert!(read_csv(text.as_bytes()).is_err());
        let bad = "k,c_k,F,f,gap,residual,merit,dxy,dz,dtl,sec\n0,x,1,1,,,,0,0,0,0\n";
        assert!(read_csv(bad.as_bytes()).is_err());
    }
}
