//! Structure of states: positivity sets of the fitness, the zero set of `u`,
//! and monitoring of the dominant trait along a run.

use std::fmt;

use crate::grid::Field1D;
use crate::record::RunRecord;
use crate::roots::positive_intervals;

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityReport {
    /// Disjoint, sorted components of `{F > 0}` at least two cells wide.
    pub intervals: Vec<(f64, f64)>,
    /// Components narrower than two cells (tangencies).
    pub degenerate: Vec<(f64, f64)>,
    /// Index into `intervals` of the component `I` at `zbar`.
    pub contains_zbar: Option<usize>,
    /// Rightmost component entirely left of `zbar` (the set `J`).
    pub left_set_j: Option<(f64, f64)>,
}

impl PositivityReport {
    pub fn count(&self) -> usize {
        self.intervals.len()
    }

    pub fn has_j(&self) -> bool {
        self.left_set_j.is_some()
    }
}

fn classify(raw: Vec<(f64, f64)>, zbar: f64, dz: f64) -> PositivityReport {
    let (intervals, degenerate): (Vec<_>, Vec<_>) = raw.into_iter().partition(|(a, b)| b - a >= 2.0 * dz);
    let contains_zbar = intervals
        .iter()
        .position(|&(a, b)| a - dz <= zbar && zbar <= b + dz);
    let left_set_j = intervals
        .iter()
        .rev()
        .find(|&&(_, b)| b < zbar - dz)
        .copied();
    PositivityReport {
        intervals,
        degenerate,
        contains_zbar,
        left_set_j,
    }
}

/// Positivity components of a sampled fitness; endpoints are the zeros of
/// the linear interpolant.
pub fn positivity_sets(f: &Field1D, zbar: f64) -> PositivityReport {
    let dom = *f.domain();
    let v = f.values();
    let mut raw = Vec::new();
    let mut start = (v[0] > 0.0).then_some(dom.z_min());
    for i in 0..v.len() - 1 {
        let (a, b) = (v[i], v[i + 1]);
        if (a > 0.0) == (b > 0.0) {
            continue;
        }
        let z = dom.node(i) + dom.dz() * a / (a - b);
        if b > 0.0 {
            start = Some(z);
        } else if let Some(s) = start.take() {
            raw.push((s, z));
        }
    }
    if let Some(s) = start {
        raw.push((s, dom.z_max()));
    }
    classify(raw, zbar, dom.dz())
}

/// Positivity components of a fitness given in closed form, scanned on `n`
/// cells of `[lo, hi]` and refined by bisection.
pub fn positivity_sets_fn<F>(f: F, lo: f64, hi: f64, n: usize, zbar: f64) -> PositivityReport
where
    F: Fn(f64) -> f64,
{
    let dz = (hi - lo) / n as f64;
    classify(positive_intervals(f, lo, hi, n, 1e-10), zbar, dz)
}

/// `10 (dz^2 + dt)`.
pub fn default_zero_tol(dz: f64, dt: f64) -> f64 {
    10.0 * (dz * dz + dt)
}

/// Refined local maxima of `u` whose value is at least `-tol`.
pub fn zero_set(u: &Field1D, tol: f64) -> Vec<f64> {
    let v = u.values();
    let n = v.len();
    let dz = u.dz();
    let dom = u.domain();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        // Plateau [i, j].
        let mut j = i;
        while j + 1 < n && v[j + 1] == v[i] {
            j += 1;
        }
        let left_ok = i == 0 || v[i - 1] < v[i];
        let right_ok = j + 1 == n || v[j + 1] < v[j];
        if left_ok && right_ok && v[i] >= -tol {
            let z = if i == j && i > 0 && i + 1 < n {
                let (a, b, c) = (v[i - 1], v[i], v[i + 1]);
                let curv = a - 2.0 * b + c;
                let off = if curv < 0.0 { (0.5 * (a - c) / curv).clamp(-0.5, 0.5) } else { 0.0 };
                dom.node(i) + off * dz
            } else {
                0.5 * (dom.node(i) + dom.node(j))
            };
            out.push(z);
        }
        i = j + 1;
    }
    out
}

/// A jump of the dominant trait between consecutive records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraitJump {
    pub t: f64,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonomorphismReport {
    /// First recorded time with more than one maximum point.
    pub t_m: Option<f64>,
    /// `zbar` jumps larger than `jump_threshold`.
    pub jumps: Vec<TraitJump>,
    pub jump_threshold: f64,
    /// Maximal runs of consecutive records with more than one maximum.
    pub multi_peak_episodes: usize,
    /// Mean time between successive jumps.
    pub mean_jump_period: Option<f64>,
}

impl MonomorphismReport {
    pub fn clean(&self) -> bool {
        self.t_m.is_none() && self.jumps.is_empty()
    }

    pub fn discontinuous(&self) -> bool {
        !self.jumps.is_empty()
    }

    /// Jumps between maximum points.
    pub fn oscillation_events(&self) -> usize {
        self.jumps.len()
    }

    pub fn lines(&self) -> Vec<String> {
        let mut l = vec![
            format!(
                "t_m={}",
                self.t_m.map_or("none".to_string(), |t| format!("{t:.6}"))
            ),
            format!("jump_threshold={:.6e}", self.jump_threshold),
            format!("jumps={}", self.jumps.len()),
            format!("multi_peak_episodes={}", self.multi_peak_episodes),
            format!(
                "mean_jump_period={}",
                self.mean_jump_period.map_or("none".to_string(), |p| format!("{p:.6}"))
            ),
        ];
        for j in &self.jumps {
            l.push(format!("jump t={:.6} from={:.6} to={:.6}", j.t, j.from, j.to));
        }
        l
    }
}

impl fmt::Display for MonomorphismReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in self.lines() {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

/// Jump threshold `5 dz max(1, dt_out)`, with `dt_out` the record spacing.
pub fn jump_threshold(dz: f64, dt_out: f64) -> f64 {
    5.0 * dz * dt_out.max(1.0)
}

pub fn monomorphism_monitor(record: &RunRecord, dz: f64) -> MonomorphismReport {
    let rows = &record.rows;
    let dt_out = if rows.len() > 1 {
        rows.windows(2).map(|w| w[1].t - w[0].t).fold(0.0, f64::max)
    } else {
        0.0
    };
    let threshold = jump_threshold(dz, dt_out);
    let t_m = record
        .n_maxima
        .iter()
        .zip(rows)
        .find(|(&k, _)| k > 1)
        .map(|(_, r)| r.t);
    let jumps: Vec<TraitJump> = rows
        .windows(2)
        .filter(|w| (w[1].zbar - w[0].zbar).abs() > threshold)
        .map(|w| TraitJump {
            t: w[1].t,
            from: w[0].zbar,
            to: w[1].zbar,
        })
        .collect();
    let mut episodes = 0;
    let mut inside = false;
    for &k in &record.n_maxima {
        if k > 1 && !inside {
            episodes += 1;
        }
        inside = k > 1;
    }
    let mean_jump_period = (jumps.len() > 1)
        .then(|| (jumps[jumps.len() - 1].t - jumps[0].t) / (jumps.len() - 1) as f64);
    MonomorphismReport {
        t_m,
        jumps,
        jump_threshold: threshold,
        multi_peak_episodes: episodes,
        mean_jump_period,
    }
}
