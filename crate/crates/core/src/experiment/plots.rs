//! CSV plot data. Every file has a fixed header and rows in a fixed order,
//! so identical runs give identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::RoundLog;
use crate::adapt::write_trace_csv;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// `stability,admot_avg_slots,baseline_slots`
    Overhead,
    /// `stability,round,m,cumulative_slots`
    Slots,
    /// `stability,round,relative_error`
    Error,
    /// `index,abs_re_truth,abs_re_estimate` for the captured round.
    Detail { start: usize, end: usize },
}

impl PlotKind {
    pub fn file_name(&self) -> &'static str {
        match self {
            PlotKind::Overhead => "overhead.csv",
            PlotKind::Slots => "slots_per_round.csv",
            PlotKind::Error => "error_per_round.csv",
            PlotKind::Detail { .. } => "detail.csv",
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one plot file into `dir` and returns its path.
pub fn emit_plot_data(logs: &[RoundLog], kind: PlotKind, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(kind.file_name());
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    match kind {
        PlotKind::Overhead => {
            w.write_record(["stability", "admot_avg_slots", "baseline_slots"])?;
            for log in logs {
                w.write_record([log.stability.to_string(), log.average_slots().to_string(), log.n.to_string()])?;
            }
        }
        PlotKind::Slots => {
            w.write_record(["stability", "round", "m", "cumulative_slots"])?;
            for log in logs {
                for r in &log.records {
                    w.write_record([
                        log.stability.to_string(),
                        r.round.to_string(),
                        r.m.to_string(),
                        r.cumulative_slots.to_string(),
                    ])?;
                }
            }
        }
        PlotKind::Error => {
            w.write_record(["stability", "round", "relative_error"])?;
            for log in logs {
                for r in &log.records {
                    w.write_record([log.stability.to_string(), r.round.to_string(), opt(r.relative_error)])?;
                }
            }
        }
        PlotKind::Detail { start, end } => {
            w.write_record(["index", "abs_re_truth", "abs_re_estimate"])?;
            if let Some(snap) = logs.iter().find_map(|l| l.snapshot.as_ref()) {
                let n = snap.truth.len();
                for i in start.max(1)..=end.min(n) {
                    w.write_record([
                        i.to_string(),
                        snap.truth.gains()[i - 1].re.abs().to_string(),
                        snap.estimate.gains()[i - 1].re.abs().to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(path)
}

/// Round log and adaptation trace for one stability level.
pub fn write_rounds_csv<W: Write, T: Write>(log: &RoundLog, rounds: W, trace: T) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(rounds);
    w.write_record([
        "round",
        "m",
        "cumulative_slots",
        "relative_error",
        "verdict",
        "scan_steps",
        "next_m",
        "iterations",
        "status",
    ])?;
    for r in &log.records {
        w.serialize(r)?;
    }
    w.flush()?;
    let outcomes: Vec<_> = log.adaptation.iter().map(|(r, o)| (*r, o)).collect();
    write_trace_csv(trace, &outcomes)
}
