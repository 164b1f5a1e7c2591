//! Time series produced by the solvers and their text form.

use std::fmt;
use std::fmt::Write as _;

use crate::grid::{format_snapshot, Field1D, SnapshotHeader};

pub const CSV_HEADER: &str = "t,rho,log_rho,zbar,u_max,d2u_zbar,n_positivity_components";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordRow {
    pub t: f64,
    pub rho: f64,
    pub log_rho: f64,
    pub zbar: f64,
    pub u_max: f64,
    pub d2u_zbar: f64,
    pub n_positivity_components: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    /// Reached the horizon.
    Completed,
    Converged { t: f64, zbar: f64 },
    Extinct { t: f64, zbar: f64 },
    ConcavityLoss { t: f64, zbar: f64 },
    BoundaryArgmax { t: f64, zbar: f64 },
    NumericalAbort { t: f64, reason: String },
    OpenRegime { reason: String },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Converged { .. } => "converged",
            RunStatus::Extinct { .. } => "extinction",
            RunStatus::ConcavityLoss { .. } => "concavity-loss",
            RunStatus::BoundaryArgmax { .. } => "boundary-argmax",
            RunStatus::NumericalAbort { .. } => "numerical-abort",
            RunStatus::OpenRegime { .. } => "open-regime",
        }
    }

    pub fn is_abort(&self) -> bool {
        matches!(self, RunStatus::BoundaryArgmax { .. } | RunStatus::NumericalAbort { .. })
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Completed => write!(f, "completed"),
            RunStatus::Converged { t, zbar } => write!(f, "converged t={t:.6} zbar={zbar:.9}"),
            RunStatus::Extinct { t, zbar } => write!(f, "extinction t={t:.6} zbar={zbar:.9}"),
            RunStatus::ConcavityLoss { t, zbar } => write!(f, "concavity-loss t={t:.6} zbar={zbar:.9}"),
            RunStatus::BoundaryArgmax { t, zbar } => write!(f, "boundary-argmax t={t:.6} zbar={zbar:.9}"),
            RunStatus::NumericalAbort { t, reason } => write!(f, "numerical-abort t={t:.6} {reason}"),
            RunStatus::OpenRegime { reason } => write!(f, "open-regime {reason}"),
        }
    }
}

/// Titled block of report lines appended after the time series.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBlock {
    pub title: String,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub field: Field1D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config_hash: String,
    pub eps: Option<f64>,
    pub rows: Vec<RecordRow>,
    /// Zero-set size per row.
    pub n_maxima: Vec<usize>,
    pub status: RunStatus,
    pub blocks: Vec<ReportBlock>,
    pub snapshots: Vec<Snapshot>,
}

impl RunRecord {
    pub fn new(config_hash: String, eps: Option<f64>) -> Self {
        RunRecord {
            config_hash,
            eps,
            rows: Vec::new(),
            n_maxima: Vec::new(),
            status: RunStatus::Completed,
            blocks: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    pub fn push(&mut self, row: RecordRow, n_maxima: usize) {
        self.rows.push(row);
        self.n_maxima.push(n_maxima);
    }

    pub fn last(&self) -> Option<&RecordRow> {
        self.rows.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// Piecewise-linear `zbar(t)`, clamped to the recorded range.
    pub fn zbar_at(&self, t: f64) -> f64 {
        let rows = &self.rows;
        assert!(!rows.is_empty(), "empty record");
        if t <= rows[0].t {
            return rows[0].zbar;
        }
        let k = rows.partition_point(|r| r.t <= t);
        if k >= rows.len() {
            return rows[rows.len() - 1].zbar;
        }
        let (a, b) = (&rows[k - 1], &rows[k]);
        let s = (t - a.t) / (b.t - a.t);
        a.zbar + s * (b.zbar - a.zbar)
    }

    pub fn add_block(&mut self, title: impl Into<String>, lines: Vec<String>) {
        self.blocks.push(ReportBlock {
            title: title.into(),
            lines,
        });
    }

    /// Comma-separated text. `generated_unix` adds the only line that may
    /// differ between identical runs.
    pub fn to_csv(&self, generated_unix: Option<u64>) -> String {
        let mut s = String::with_capacity(96 * self.rows.len() + 512);
        if let Some(ts) = generated_unix {
            let _ = writeln!(s, "# generated_unix={ts}");
        }
        let _ = writeln!(s, "# config_hash={}", self.config_hash);
        match self.eps {
            Some(e) => {
                let _ = writeln!(s, "# epsilon={e:e}");
            }
            None => s.push_str("# epsilon=0\n"),
        }
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:.9e},{:.12e},{:.12e},{:.12e},{:.12e},{:.9e},{}",
                r.t, r.rho, r.log_rho, r.zbar, r.u_max, r.d2u_zbar, r.n_positivity_components
            );
        }
        for b in &self.blocks {
            let _ = writeln!(s, "# [{}]", b.title);
            for l in &b.lines {
                let _ = writeln!(s, "# {l}");
            }
        }
        let _ = writeln!(s, "# [final]\n# {}", self.status);
        s
    }

    pub fn snapshot_texts(&self) -> Vec<(f64, String)> {
        self.snapshots
            .iter()
            .map(|sn| {
                let hdr = SnapshotHeader {
                    t: sn.t,
                    eps: self.eps,
                    config_hash: self.config_hash.clone(),
                };
                (sn.t, format_snapshot(&sn.field, &hdr))
            })
            .collect()
    }
}

/// Parses the rows written by [`RunRecord::to_csv`].
pub fn parse_rows(text: &str) -> Result<Vec<RecordRow>, String> {
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("t,") || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(format!("expected 7 columns, got {}: `{line}`", f.len()));
        }
        let num = |i: usize| f[i].trim().parse::<f64>().map_err(|e| format!("{e} in `{line}`"));
        rows.push(RecordRow {
            t: num(0)?,
            rho: num(1)?,
            log_rho: num(2)?,
            zbar: num(3)?,
            u_max: num(4)?,
            d2u_zbar: num(5)?,
            n_positivity_components: f[6].trim().parse().map_err(|e| format!("{e} in `{line}`"))?,
        });
    }
    Ok(rows)
}
