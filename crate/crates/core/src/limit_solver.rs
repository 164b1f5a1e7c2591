//! The constrained Hamilton-Jacobi system at `eps = 0`:
//!
//! `u_t = |u_z|^2 + F(t, z)`, `F(t, z) = R(z) - R(zbar) + tau H(z - zbar)`,
//! `zbar' = F_z(t, zbar) / |u_zz(t, zbar)|`, `rho = max(R(zbar), 0)`,
//!
//! with `max u = u(t, zbar) = 0` enforced by renormalisation after each step.

use thiserror::Error;

use crate::config::config_hash;
use crate::diagnostics::{default_zero_tol, positivity_sets_fn, zero_set};
use crate::grid::{argmax_refined, second_derivative_at, Domain, Field1D};
use crate::model::{classify_initial_fitness_type, FitnessType, ModelConfig, ModelError};
use crate::record::{RecordRow, RunRecord, RunStatus, Snapshot};

/// Curvature at the peak must stay below `-CONCAVITY_FLOOR`.
pub const CONCAVITY_FLOOR: f64 = 1e-8;
/// `mu - zbar` below this is treated as arrival when checking monotonicity.
pub const MONOTONE_GAP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error("concavity lost at t = {t}: u_zz(zbar) = {d2u}")]
    ConcavityLoss { t: f64, d2u: f64 },
    #[error("maximum of u reached the boundary at t = {t}")]
    BoundaryArgmax { t: f64 },
    #[error("step rejected: dt = {dt:.4e} exceeds the stable step {suggested:.4e}")]
    StepRejected { dt: f64, suggested: f64 },
    #[error("non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitState {
    pub t: f64,
    pub u: Field1D,
    pub zbar: f64,
    pub rho: f64,
    /// `u_zz(t, zbar)`.
    pub d2u: f64,
    /// Running minimum of `|u_zz(zbar)| / 2`.
    pub lambda_run: f64,
    /// Running maximum of `|u_zz(zbar)|`.
    pub s_c_run: f64,
    /// `max u` before the last renormalisation.
    pub drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitRunOptions {
    pub output_dt: f64,
    pub snapshot_every: Option<usize>,
    /// Stop as soon as `|zbar - mu| < converge_tol`.
    pub stop_on_converge: bool,
    /// Label for a final state within this distance of `mu`.
    pub converge_tol: f64,
}

impl Default for LimitRunOptions {
    fn default() -> Self {
        LimitRunOptions {
            output_dt: 0.1,
            snapshot_every: None,
            stop_on_converge: false,
            converge_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichRow {
    pub t: f64,
    pub lower: f64,
    pub zbar: f64,
    pub upper: f64,
    pub margin_lo: f64,
    pub margin_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub lambda: f64,
    pub s_c: f64,
    pub tol: f64,
    pub rows: Vec<SandwichRow>,
    pub worst_margin_lo: f64,
    pub worst_margin_hi: f64,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.worst_margin_lo >= -self.tol && self.worst_margin_hi >= -self.tol
    }

    pub fn lines(&self) -> Vec<String> {
        let mut l = vec![
            format!("lambda={:.6e} s_c={:.6e} tol={:.3e}", self.lambda, self.s_c, self.tol),
            format!(
                "worst_margin_lo={:.3e} worst_margin_hi={:.3e} holds={}",
                self.worst_margin_lo,
                self.worst_margin_hi,
                self.holds()
            ),
            "t,lower,zbar,upper,margin_lo,margin_hi".to_string(),
        ];
        for r in &self.rows {
            l.push(format!(
                "{:.6},{:.9},{:.9},{:.9},{:.3e},{:.3e}",
                r.t, r.lower, r.zbar, r.upper, r.margin_lo, r.margin_hi
            ));
        }
        l
    }
}

#[derive(Debug, Clone)]
pub struct LimitRun {
    pub record: RunRecord,
    pub final_state: LimitState,
    pub zbar0: f64,
    /// `(t, zbar)` after every step.
    pub trajectory: Vec<(f64, f64)>,
    /// `(t, max u before renormalisation)` per step.
    pub drift: Vec<(f64, f64)>,
    /// Largest distance between the ODE trait and the argmax of `u`.
    pub max_argmax_gap: f64,
    pub sandwich: Option<SandwichReport>,
}

impl LimitRun {
    /// `zbar(t)` interpolated from the per-step trajectory.
    pub fn zbar_at(&self, t: f64) -> f64 {
        interpolate_pairs(&self.trajectory, t)
    }
}

pub(crate) fn interpolate_pairs(pts: &[(f64, f64)], t: f64) -> f64 {
    if t <= pts[0].0 {
        return pts[0].1;
    }
    let k = pts.partition_point(|p| p.0 <= t);
    if k >= pts.len() {
        return pts[pts.len() - 1].1;
    }
    let (a, b) = (pts[k - 1], pts[k]);
    a.1 + (t - a.0) / (b.0 - a.0) * (b.1 - a.1)
}

pub struct LimitSolver {
    cfg: ModelConfig,
    domain: Domain,
}

impl LimitSolver {
    pub fn new(cfg: &ModelConfig) -> Result<Self, LimitError> {
        cfg.validate()?;
        Ok(LimitSolver {
            domain: cfg.domain()?,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// `u0 = -c (z - z0)^2`, `zbar = z0`.
    pub fn initial_state(&self) -> Result<LimitState, LimitError> {
        let (c, z0) = (self.cfg.c, self.cfg.z0);
        let u = Field1D::from_parts(
            self.domain,
            self.domain.nodes().map(|z| -c * (z - z0) * (z - z0)).collect(),
        );
        self.state_from(0.0, u, z0)
    }

    /// State for a given `u` (renormalised to `max u = 0`) and trait.
    pub fn state_from(&self, t: f64, u: Field1D, zbar: f64) -> Result<LimitState, LimitError> {
        let top = argmax_refined(&u).value;
        let u = u.shifted(-top);
        let d2u = self.curvature(&u, zbar, t)?;
        Ok(LimitState {
            t,
            rho: self.cfg.growth.r(zbar).max(0.0),
            lambda_run: 0.5 * d2u.abs(),
            s_c_run: d2u.abs(),
            drift: 0.0,
            u,
            zbar,
            d2u,
        })
    }

    fn curvature(&self, u: &Field1D, zbar: f64, t: f64) -> Result<f64, LimitError> {
        let d2u = second_derivative_at(u, zbar).map_err(|_| LimitError::BoundaryArgmax { t })?;
        if d2u >= -CONCAVITY_FLOOR {
            return Err(LimitError::ConcavityLoss { t, d2u });
        }
        Ok(d2u)
    }

    /// `F_z(zbar, zbar) / |u_zz(zbar)|`; for quadratic growth
    /// `2 g (mu - zbar) / |u_zz(zbar)|`.
    pub fn trait_ode_rhs(&self, zbar: f64, d2u: f64) -> Result<f64, LimitError> {
        if d2u >= -CONCAVITY_FLOOR {
            return Err(LimitError::ConcavityLoss { t: f64::NAN, d2u });
        }
        Ok(self.slope_at_peak(zbar) / d2u.abs())
    }

    fn slope_at_peak(&self, zbar: f64) -> f64 {
        match self.cfg.growth.quadratic_g() {
            Some(g) => 2.0 * g * (self.cfg.mu() - zbar),
            None => self.cfg.fitness_dynamic_dz(zbar, zbar),
        }
    }

    fn rhs(&self, u: &[f64], zbar: f64, out: &mut [f64]) {
        self.cfg.options.hamiltonian.apply(u, self.domain.dz(), out);
        for (i, z) in self.domain.nodes().enumerate() {
            out[i] += self.cfg.fitness_dynamic(z, zbar);
        }
    }

    pub fn stable_dt(&self, state: &LimitState) -> f64 {
        self.domain.dz() / (2.0 * state.u.max_abs_gradient().max(1e-12))
    }

    pub fn step_dt(&self, s: &LimitState, dt: f64) -> Result<LimitState, LimitError> {
        let limit = self.stable_dt(s);
        if dt > limit {
            return Err(LimitError::StepRejected { dt, suggested: 0.9 * limit });
        }
        // Midpoint step for the trait with the peak curvature frozen.
        let k1 = self.trait_ode_rhs(s.zbar, s.d2u)?;
        let z_half = s.zbar + 0.5 * dt * k1;
        let zbar = s.zbar + dt * self.slope_at_peak(z_half) / s.d2u.abs();

        let u = s.u.values();
        let n = u.len();
        let mut r = vec![0.0; n];
        self.rhs(u, s.zbar, &mut r);
        let u1: Vec<f64> = u.iter().zip(&r).map(|(a, b)| a + dt * b).collect();
        self.rhs(&u1, zbar, &mut r);
        let next: Vec<f64> = u
            .iter()
            .zip(u1.iter().zip(&r))
            .map(|(a, (b, c))| 0.5 * (a + b + dt * c))
            .collect();
        let t = s.t + dt;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(LimitError::NonFinite { t });
        }
        let raw = Field1D::from_parts(self.domain, next);
        let top = argmax_refined(&raw);
        if top.boundary {
            return Err(LimitError::BoundaryArgmax { t });
        }
        let u = raw.shifted(-top.value);
        let d2u = self.curvature(&u, zbar, t)?;
        Ok(LimitState {
            t,
            rho: self.cfg.growth.r(zbar).max(0.0),
            lambda_run: s.lambda_run.min(0.5 * d2u.abs()),
            s_c_run: s.s_c_run.max(d2u.abs()),
            drift: top.value,
            u,
            zbar,
            d2u,
        })
    }

    pub fn step(&self, s: &LimitState) -> Result<LimitState, LimitError> {
        self.step_dt(s, self.cfg.dt)
    }

    fn row(&self, s: &LimitState) -> (RecordRow, usize) {
        let cfg = &self.cfg;
        let rep = positivity_sets_fn(
            |z| cfg.fitness_dynamic(z, s.zbar),
            self.domain.z_min(),
            self.domain.z_max(),
            self.domain.len() - 1,
            s.zbar,
        );
        let tol = default_zero_tol(self.domain.dz(), cfg.dt);
        let n_max = zero_set(&s.u, tol).len();
        (
            RecordRow {
                t: s.t,
                rho: s.rho,
                log_rho: s.rho.ln(),
                zbar: s.zbar,
                u_max: s.drift,
                d2u_zbar: s.d2u,
                n_positivity_components: rep.count(),
            },
            n_max,
        )
    }

    pub fn run(&self, opts: &LimitRunOptions) -> Result<LimitRun, LimitError> {
        let cfg = &self.cfg;
        let mu = cfg.mu();
        let hash = config_hash(cfg, &cfg.kernel.kind().to_string());
        let mut record = RunRecord::new(hash, None);
        let mut state = self.initial_state()?;
        let zbar0 = state.zbar;
        let mut out = LimitRun {
            record: RunRecord::new(String::new(), None),
            zbar0,
            trajectory: vec![(0.0, zbar0)],
            drift: Vec::new(),
            max_argmax_gap: 0.0,
            sandwich: None,
            final_state: state.clone(),
        };

        if zbar0 > mu {
            let cls = classify_initial_fitness_type(cfg);
            if cls.kind == FitnessType::TypeTwo {
                record.status = RunStatus::OpenRegime {
                    reason: format!(
                        "zbar(0) = {zbar0} > mu = {mu} with two positivity sets of F(0, .)"
                    ),
                };
                out.record = record;
                return Ok(out);
            }
        }

        let stride = ((opts.output_dt / cfg.dt).round() as usize).max(1);
        let mut rows_written = 0usize;
        let mut emit = |s: &LimitState, record: &mut RunRecord| {
            let (row, n_max) = self.row(s);
            record.push(row, n_max);
            if let Some(k) = opts.snapshot_every {
                if rows_written.is_multiple_of(k.max(1)) {
                    record.snapshots.push(Snapshot {
                        t: s.t,
                        field: s.u.clone(),
                    });
                }
            }
            rows_written += 1;
        };
        emit(&state, &mut record);

        let n_steps = (cfg.t_end / cfg.dt - 1e-9).ceil().max(0.0) as usize;
        let mut status = RunStatus::Completed;
        for k in 1..=n_steps {
            let dt = if k == n_steps { cfg.t_end - state.t } else { cfg.dt };
            if dt <= 0.0 {
                break;
            }
            let next = match self.step_dt(&state, dt) {
                Ok(s) => s,
                Err(LimitError::ConcavityLoss { d2u, .. }) => {
                    status = RunStatus::ConcavityLoss {
                        t: state.t,
                        zbar: state.zbar,
                    };
                    record.add_block("concavity", vec![format!("d2u={d2u:.6e}")]);
                    break;
                }
                Err(LimitError::BoundaryArgmax { t }) => {
                    status = RunStatus::BoundaryArgmax { t, zbar: state.zbar };
                    break;
                }
                Err(e) => {
                    status = RunStatus::NumericalAbort {
                        t: state.t,
                        reason: e.to_string(),
                    };
                    break;
                }
            };
            let (r_prev, r_next) = (cfg.growth.r(state.zbar), cfg.growth.r(next.zbar));
            out.drift.push((next.t, next.drift));
            out.trajectory.push((next.t, next.zbar));
            let gap = (argmax_refined(&next.u).z - next.zbar).abs();
            out.max_argmax_gap = out.max_argmax_gap.max(gap);
            if r_prev > 0.0 && r_next < 0.0 {
                let s = r_prev / (r_prev - r_next);
                let t_rho = state.t + s * (next.t - state.t);
                let z_rho = state.zbar + s * (next.zbar - state.zbar);
                state = next;
                emit(&state, &mut record);
                status = RunStatus::Extinct { t: t_rho, zbar: z_rho };
                break;
            }
            state = next;
            if opts.stop_on_converge && (state.zbar - mu).abs() < opts.converge_tol {
                emit(&state, &mut record);
                status = RunStatus::Converged {
                    t: state.t,
                    zbar: state.zbar,
                };
                break;
            }
            if k % stride == 0 || k == n_steps {
                emit(&state, &mut record);
            }
        }
        if status == RunStatus::Completed && (state.zbar - mu).abs() < opts.converge_tol {
            status = RunStatus::Converged {
                t: state.t,
                zbar: state.zbar,
            };
        }
        record.status = status;
        let max_drift = out.drift.iter().map(|d| d.1.abs()).fold(0.0, f64::max);
        let mean_drift = out.drift.iter().map(|d| d.1.abs()).sum::<f64>() / out.drift.len().max(1) as f64;
        record.add_block(
            "consistency",
            vec![
                format!("max_renormalisation_drift={max_drift:.3e}"),
                format!("mean_renormalisation_drift={mean_drift:.3e}"),
                format!("max_argmax_gap={:.3e}", out.max_argmax_gap),
                format!("lambda_run={:.6e} s_c_run={:.6e}", state.lambda_run, state.s_c_run),
            ],
        );
        out.final_state = state;
        out.record = record;
        let sandwich = sandwich_check(&out, cfg);
        out.record.add_block("sandwich", sandwich.lines());
        out.sandwich = Some(sandwich);
        Ok(out)
    }
}

/// Exponential bounds on `|zbar - mu|` from the measured curvature extrema:
/// `|zbar0 - mu| e^{-(g / lambda) t} <= |zbar - mu| <= |zbar0 - mu| e^{-(2 g / S_c) t}`,
/// checked at every recorded row with tolerance `2 dz + 10 dt`.
pub fn sandwich_check(run: &LimitRun, cfg: &ModelConfig) -> SandwichReport {
    let mu = cfg.mu();
    let g = cfg.g;
    let lambda = run.final_state.lambda_run;
    let s_c = run.final_state.s_c_run;
    let tol = 2.0 * cfg.dz() + 10.0 * cfg.dt;
    let gap0 = run.zbar0 - mu;
    let mut rows = Vec::new();
    let (mut worst_lo, mut worst_hi) = (f64::INFINITY, f64::INFINITY);
    for r in &run.record.rows {
        let fast = mu + gap0 * (-(g / lambda) * r.t).exp();
        let slow = mu + gap0 * (-(2.0 * g / s_c) * r.t).exp();
        let (lower, upper) = if gap0 <= 0.0 { (slow, fast) } else { (fast, slow) };
        let row = SandwichRow {
            t: r.t,
            lower,
            zbar: r.zbar,
            upper,
            margin_lo: r.zbar - lower,
            margin_hi: upper - r.zbar,
        };
        worst_lo = worst_lo.min(row.margin_lo);
        worst_hi = worst_hi.min(row.margin_hi);
        rows.push(row);
    }
    SandwichReport {
        lambda,
        s_c,
        tol,
        rows,
        worst_margin_lo: worst_lo,
        worst_margin_hi: worst_hi,
    }
}

/// `true` when `zbar` moves strictly towards `mu` between consecutive
/// entries until it is within [`MONOTONE_GAP`] of `mu`.
pub fn strictly_monotone_towards(traj: &[(f64, f64)], mu: f64) -> bool {
    traj.windows(2).all(|w| {
        let (a, b) = (w[0].1, w[1].1);
        if (mu - a).abs() <= MONOTONE_GAP {
            return true;
        }
        if a < mu {
            b > a
        } else {
            b < a
        }
    })
}

/// Runs `cfg` to its horizon with default output options.
pub fn run(cfg: &ModelConfig) -> Result<LimitRun, LimitError> {
    LimitSolver::new(cfg)?.run(&LimitRunOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(tau: f64, t_end: f64) -> ModelConfig {
        let mut c = ModelConfig::new(1.0, tau);
        c.n = 513;
        c.half_width = 5.5;
        c.dt = 5e-4;
        c.t_end = t_end;
        c
    }

    #[test]
    fn rhs_examples() {
        let c = cfg(1.0, 1.0);
        let s = LimitSolver::new(&c).unwrap();
        assert_eq!(s.trait_ode_rhs(0.5, -1.3).unwrap(), 0.0);
        let lam = 0.8;
        assert!((s.trait_ode_rhs(0.1, -2.0 * lam).unwrap() - 2.0 * 0.4 / (2.0 * lam)).abs() < 1e-15);
        assert!(s.trait_ode_rhs(0.7, -1.0).unwrap() < 0.0);
        assert!(matches!(s.trait_ode_rhs(0.1, 0.0), Err(LimitError::ConcavityLoss { .. })));
    }

    #[test]
    fn stationary_peak_stays() {
        let mut c = cfg(1.0, 2.0);
        c.z0 = 0.5;
        let run = LimitSolver::new(&c).unwrap().run(&LimitRunOptions::default()).unwrap();
        for &(_, z) in &run.trajectory {
            assert!((z - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn mean_drift_is_second_order() {
        let c = cfg(1.0, 0.2);
        let mean_drift = |dt: f64| {
            let mut c = c.clone();
            c.dt = dt;
            let run = LimitSolver::new(&c).unwrap().run(&LimitRunOptions::default()).unwrap();
            run.drift.iter().map(|d| d.1.abs()).sum::<f64>() / run.drift.len() as f64
        };
        let (a, b) = (mean_drift(4e-4), mean_drift(2e-4));
        assert!(a / b > 3.5, "{a} {b}");
    }

    #[test]
    fn converges_and_sandwich_holds() {
        let c = cfg(1.0, 12.0);
        let run = LimitSolver::new(&c).unwrap().run(&LimitRunOptions::default()).unwrap();
        assert!(matches!(run.record.status, RunStatus::Converged { .. }), "{}", run.record.status);
        assert!(strictly_monotone_towards(&run.trajectory, 0.5));
        assert!(run.sandwich.as_ref().unwrap().holds());
        assert!(run.record.n_maxima.iter().all(|&k| k == 1));
    }

    #[test]
    fn finite_time_extinction() {
        let c = cfg(2.2, 20.0);
        let run = LimitSolver::new(&c).unwrap().run(&LimitRunOptions::default()).unwrap();
        match run.record.status {
            RunStatus::Extinct { zbar, .. } => assert!((zbar - 1.0).abs() < 1e-3),
            ref s => panic!("{s}"),
        }
    }

    #[test]
    fn type_two_start_is_refused() {
        let g = 0.5 / 3.4;
        let mut c = ModelConfig::new(g, 0.5);
        c.t_end = 1.0;
        let mu = c.mu();
        let mu1 = crate::model::compute_mu1(&c.kernel).unwrap();
        let mut refused = false;
        for k in 1..40 {
            c.z0 = mu + (mu1 - mu) * k as f64 / 40.0;
            if classify_initial_fitness_type(&c).kind == FitnessType::TypeTwo {
                let run = LimitSolver::new(&c).unwrap().run(&LimitRunOptions::default()).unwrap();
                assert!(matches!(run.record.status, RunStatus::OpenRegime { .. }));
                refused = true;
                break;
            }
        }
        assert!(refused);
    }
}
