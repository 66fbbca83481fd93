//! Regret traces as CSV, and the summary statistics `report` prints.

use std::io::{Read, Write};

use crate::{Error, Result};

use super::RegretRecord;

pub const CSV_HEADER: [&str; 7] = [
    "k",
    "leader_inc",
    "leader_cum",
    "follower_inc",
    "follower_cum",
    "a1",
    "wall_ms",
];

pub(crate) fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn record_fields(r: &RegretRecord) -> [String; 7] {
    [
        r.k.to_string(),
        real(r.leader_inc),
        real(r.leader_cum),
        real(r.follower_inc),
        real(r.follower_cum),
        r.a1.to_string(),
        real(r.wall_ms),
    ]
}

pub fn write_csv<W: Write>(records: &[RegretRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in records {
        w.write_record(record_fields(r)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_csv`]. Extra columns (sweep
/// coordinates) are ignored; `x1` and `evaluated` are not stored and come
/// back as `0` and `true`.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<RegretRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("missing column `{name}`"),
        })
    };
    let idx: Vec<usize> = CSV_HEADER.iter().map(|c| column(c)).collect::<Result<_>>()?;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(csv_error)?;
        let line = i + 2;
        let field = |j: usize| -> Result<&str> {
            row.get(idx[j]).map(str::trim).ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing value for `{}`", CSV_HEADER[j]),
            })
        };
        let num = |j: usize| -> Result<f64> {
            let s = field(j)?;
            s.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad number `{s}` in `{}`", CSV_HEADER[j]),
            })
        };
        let int = |j: usize| -> Result<usize> {
            let s = field(j)?;
            s.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad integer `{s}` in `{}`", CSV_HEADER[j]),
            })
        };
        records.push(RegretRecord {
            k: int(0)?,
            leader_inc: num(1)?,
            leader_cum: num(2)?,
            follower_inc: num(3)?,
            follower_cum: num(4)?,
            a1: int(5)?,
            wall_ms: num(6)?,
            x1: 0,
            evaluated: true,
        });
    }
    Ok(records)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, msg: format!("{other:?}") },
    }
}

/// Shape statistics of a regret trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretSummary {
    pub episodes: usize,
    pub leader_final: f64,
    pub follower_final: f64,
    /// Episodes in the early window.
    pub early_episodes: usize,
    /// `(Regret(K)/K) / (Regret(K₀)/K₀)` with `K₀` the early window.
    pub leader_ratio: f64,
    pub follower_ratio: f64,
    /// Regret accumulated over the second half of the run.
    pub leader_final_half: f64,
    pub follower_final_half: f64,
}

/// Summarizes a trace, with the early window the first `early_fraction`
/// of episodes (at least one).
pub fn summarize(records: &[RegretRecord], early_fraction: f64) -> Result<RegretSummary> {
    let last = records
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty regret trace".into()))?;
    if !(early_fraction > 0.0 && early_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "early fraction {early_fraction} outside (0, 1]"
        )));
    }
    let n = records.len();
    let early = ((n as f64 * early_fraction).round() as usize).clamp(1, n);
    let early_rec = &records[early - 1];
    let half_rec = &records[n / 2 - usize::from(n >= 2)];
    let ratio = |fin: f64, early_cum: f64| {
        let late = fin / n as f64;
        let start = early_cum / early as f64;
        if start == 0.0 {
            if late == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            late / start
        }
    };
    let (half_l, half_f) = if n >= 2 {
        (half_rec.leader_cum, half_rec.follower_cum)
    } else {
        (0.0, 0.0)
    };
    Ok(RegretSummary {
        episodes: n,
        leader_final: last.leader_cum,
        follower_final: last.follower_cum,
        early_episodes: early,
        leader_ratio: ratio(last.leader_cum, early_rec.leader_cum),
        follower_ratio: ratio(last.follower_cum, early_rec.follower_cum),
        leader_final_half: last.leader_cum - half_l,
        follower_final_half: last.follower_cum - half_f,
    })
}
