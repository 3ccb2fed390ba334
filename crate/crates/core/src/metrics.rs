//! Cumulative performance counters and their CSV form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Counters accumulated up to and including one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    /// SU transmissions on a busy channel.
    pub pu_collisions: u64,
    pub busy_steps: u64,
    /// Busy channels the fusion center declared busy.
    pub detections: u64,
    pub su_collisions: u64,
    pub attempts: u64,
    /// Idle channels declared busy.
    pub missed: u64,
    pub idle_steps: u64,
    pub sensing: u64,
    pub alive_frac: f64,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub experts: usize,
    pub records: Vec<StepRecord>,
    /// Total sensing operations per SU over the run.
    pub sensing_per_su: Vec<u64>,
}

/// Denominators that were zero; the matching fraction is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ZeroDenominators {
    pub pu_collision: bool,
    pub su_collision: bool,
    pub missed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fractions {
    pub pu_collision: f64,
    pub su_collision: f64,
    pub missed: f64,
    pub avg_sensing: f64,
    pub flags: ZeroDenominators,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl StepRecord {
    pub fn fractions(&self, experts: usize) -> Fractions {
        let (pu, f_pu) = ratio(self.pu_collisions, self.busy_steps);
        let (su, f_su) = ratio(self.su_collisions, self.attempts);
        let (missed, f_m) = ratio(self.missed, self.idle_steps);
        let slots = experts as u64 * self.step;
        let avg_sensing = if slots == 0 { 0.0 } else { self.sensing as f64 / slots as f64 };
        Fractions {
            pu_collision: pu,
            su_collision: su,
            missed,
            avg_sensing,
            flags: ZeroDenominators {
                pu_collision: f_pu,
                su_collision: f_su,
                missed: f_m,
            },
        }
    }

    /// Empirical fusion-center false-alarm and detection rates.
    pub fn fc_rates(&self) -> (f64, f64) {
        (ratio(self.missed, self.idle_steps).0, ratio(self.detections, self.busy_steps).0)
    }
}

impl MetricsLog {
    pub fn new(experts: usize) -> Self {
        Self {
            experts,
            records: Vec::new(),
            sensing_per_su: vec![0; experts],
        }
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    pub fn final_fractions(&self) -> Option<Fractions> {
        self.last().map(|r| r.fractions(self.experts))
    }
}

/// Cumulative fractions at `step` (1-based, as stored in the records).
pub fn metric_fractions(log: &MetricsLog, step: u64) -> Result<Fractions> {
    log.records
        .iter()
        .find(|r| r.step == step)
        .map(|r| r.fractions(log.experts))
        .ok_or_else(|| Error::invalid(format!("step {step} not in log")))
}

pub const CSV_HEADER: &str = "step,pu_coll_frac,su_coll_frac,missed_frac,avg_sensing,alive_frac,mode";

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub step: u64,
    pub pu_coll_frac: f64,
    pub su_coll_frac: f64,
    pub missed_frac: f64,
    pub avg_sensing: f64,
    pub alive_frac: f64,
    pub mode: String,
}

impl CsvRow {
    pub fn from_record(r: &StepRecord, experts: usize) -> Self {
        let f = r.fractions(experts);
        Self {
            step: r.step,
            pu_coll_frac: f.pu_collision,
            su_coll_frac: f.su_collision,
            missed_frac: f.missed,
            avg_sensing: f.avg_sensing,
            alive_frac: r.alive_frac,
            mode: r.mode.clone(),
        }
    }
}

/// Renders the log as CSV text. Floats use the shortest representation that
/// parses back to the same value.
pub fn csv_string(log: &MetricsLog) -> String {
    let mut out = String::with_capacity(64 * (log.records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &log.records {
        let c = CsvRow::from_record(r, log.experts);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.step, c.pu_coll_frac, c.su_coll_frac, c.missed_frac, c.avg_sensing, c.alive_frac, c.mode
        );
    }
    out
}

pub fn emit_csv(log: &MetricsLog, path: &Path) -> Result<()> {
    fs::write(path, csv_string(log)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_csv_str(text: &str, path: &Path) -> Result<Vec<CsvRow>> {
    let bad = |reason: String| Error::Csv {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(bad(format!("unexpected header {other:?}"))),
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(bad(format!("line {}: {} columns", n + 2, cols.len())));
            }
            let num = |k: usize| {
                cols[k]
                    .parse::<f64>()
                    .map_err(|e| bad(format!("line {}: column {}: {e}", n + 2, k + 1)))
            };
            Ok(CsvRow {
                step: cols[0]
                    .parse()
                    .map_err(|e| bad(format!("line {}: step: {e}", n + 2)))?,
                pu_coll_frac: num(1)?,
                su_coll_frac: num(2)?,
                missed_frac: num(3)?,
                avg_sensing: num(4)?,
                alive_frac: num(5)?,
                mode: cols[6].to_string(),
            })
        })
        .collect()
}

pub fn parse_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv_str(&text, path)
}
