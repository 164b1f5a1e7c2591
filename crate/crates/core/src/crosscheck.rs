//! Solver-versus-oracle comparisons: Hopf-Lax DP against the limit solver,
//! shooting gradients against finite differences, and an `eps` sweep against
//! the limit trajectory.

use thiserror::Error;

use crate::eps_solver::{EpsError, EpsRunOptions, EpsSolver};
use crate::limit_solver::{interpolate_pairs, LimitError, LimitRun, LimitRunOptions, LimitSolver};
use crate::model::{classify_regime, ModelConfig, ModelError, Regime};
use crate::oracle::{
    euler_lagrange_shoot, hopf_lax_dp, DpOptions, OracleError, ShootOptions, TraitPathFitness,
};
use crate::parallel::Parallelism;
use crate::record::RunStatus;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrossCheckError {
    #[error("cross-check needs a monomorphic-convergence configuration, got {0}")]
    Regime(Regime),
    #[error("limit run aborted: {0}")]
    LimitAbort(String),
    #[error("eps run at eps = {eps} aborted: {reason}")]
    EpsAbort { eps: f64, reason: String },
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Eps(#[from] EpsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn below(name: &str, value: f64, tol: f64, detail: String) -> Self {
        Check {
            name: name.into(),
            value,
            tol,
            pass: value < tol,
            detail,
        }
    }

    fn above(name: &str, value: f64, tol: f64, detail: String) -> Self {
        Check {
            name: name.into(),
            value,
            tol,
            pass: value >= tol,
            detail,
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        format!("{verdict} {} value={:.6e} tol={:.6e} {}", self.name, self.value, self.tol, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct CrossCheckOptions {
    /// DP step as a multiple of the solver step.
    pub dp_dt_factor: f64,
    /// Length of the shooting window ending at `T`.
    pub shoot_horizon: f64,
    pub probes: usize,
    /// Repeat the DP comparison with `dt` and `dz` halved.
    pub refine: bool,
    /// Empty skips the `eps` sweep.
    pub eps_values: Vec<f64>,
    pub eps_n: Option<usize>,
    pub eps_dt: Option<f64>,
    pub parallelism: Parallelism,
}

impl Default for CrossCheckOptions {
    fn default() -> Self {
        CrossCheckOptions {
            dp_dt_factor: 20.0,
            shoot_horizon: 1.0,
            probes: 20,
            refine: true,
            eps_values: vec![4e-3, 2e-3, 1e-3],
            eps_n: None,
            eps_dt: None,
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpComparison {
    pub dz: f64,
    pub dt: f64,
    pub dp_dt: f64,
    pub window: (f64, f64),
    /// Sup-norm gap between the DP slice and `u(T, .)` over the window.
    pub gap: f64,
    pub zbar_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientComparison {
    pub probes: Vec<(f64, f64, f64)>,
    pub max_error: f64,
    pub multivalued: usize,
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsSweep {
    pub eps: Vec<f64>,
    /// `(t, zbar)` per `eps`.
    pub paths: Vec<Vec<(f64, f64)>>,
    /// `sup_t |zbar_{eps_k} - zbar_{eps_{k+1}}|`.
    pub pair_gaps: Vec<f64>,
    /// `sup_t |zbar_{eps_last} - zbar_limit|`.
    pub limit_gap: f64,
}

impl EpsSweep {
    pub fn gaps_decreasing(&self) -> bool {
        self.pair_gaps.windows(2).all(|w| w[1] < w[0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheckReport {
    pub checks: Vec<Check>,
    pub dp: Vec<DpComparison>,
    pub gradient: Option<GradientComparison>,
    pub sweep: Option<EpsSweep>,
}

impl CrossCheckReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self.checks.iter().map(Check::line).collect();
        for d in &self.dp {
            out.push(format!(
                "dp window_nodes={} dt={:.3e} dp_dt={:.3e} window=[{:.4}, {:.4}] gap={:.6e}",
                ((d.window.1 - d.window.0) / d.dz).round() as i64,
                d.dt,
                d.dp_dt,
                d.window.0,
                d.window.1,
                d.gap
            ));
        }
        if let Some(s) = &self.sweep {
            for (e, g) in s.eps.iter().zip(&s.pair_gaps) {
                out.push(format!("eps={e:.3e} gap_to_half={g:.6e}"));
            }
            out.push(format!("eps={:.3e} gap_to_limit={:.6e}", s.eps.last().unwrap_or(&0.0), s.limit_gap));
        }
        out
    }
}

fn require_limit_regime(cfg: &ModelConfig) -> Result<(), CrossCheckError> {
    let rep = classify_regime(cfg)?;
    if rep.regime != Regime::MonomorphicConvergence {
        return Err(CrossCheckError::Regime(rep.regime));
    }
    Ok(())
}

fn limit_run(cfg: &ModelConfig) -> Result<(LimitSolver, LimitRun), CrossCheckError> {
    let solver = LimitSolver::new(cfg)?;
    let run = solver.run(&LimitRunOptions::default())?;
    match &run.record.status {
        RunStatus::Completed | RunStatus::Converged { .. } => Ok((solver, run)),
        other => Err(CrossCheckError::LimitAbort(other.to_string())),
    }
}

/// Limit run followed by the DP recursion driven by its trait path.
pub fn dp_versus_limit(
    cfg: &ModelConfig,
    opts: &CrossCheckOptions,
) -> Result<(DpComparison, Option<GradientComparison>, Vec<(f64, f64)>), CrossCheckError> {
    let (solver, run) = limit_run(cfg)?;
    let u0 = solver.initial_state()?.u;
    let fitness = TraitPathFitness::new(cfg, &run.trajectory)?;
    let dp_dt = cfg.dt * opts.dp_dt_factor;
    let t_end = run.final_state.t;
    let keep = if opts.shoot_horizon > 0.0 {
        ((opts.shoot_horizon / dp_dt).round() as usize).max(1)
    } else {
        usize::MAX
    };
    let dp_opts = DpOptions {
        store_every: keep,
        full_scan: cfg.options.full_scan,
        parallelism: opts.parallelism,
        ..DpOptions::default()
    };
    let table = hopf_lax_dp(&u0, &fitness, dp_dt, t_end, &dp_opts)?;
    let last = table.last();
    let u_t = &run.final_state.u;
    let zbar_t = run.final_state.zbar;
    let window = (zbar_t - 1.0, cfg.mu() + 1.0);
    let dom = solver.domain();
    let gap = dom
        .nodes()
        .enumerate()
        .filter(|(_, z)| *z >= window.0 && *z <= window.1)
        .map(|(i, _)| (last.values()[i] - u_t.values()[i]).abs())
        .fold(0.0, f64::max);
    let dp = DpComparison {
        dz: dom.dz(),
        dt: cfg.dt,
        dp_dt,
        window,
        gap,
        zbar_t,
    };
    if opts.shoot_horizon <= 0.0 || opts.probes == 0 {
        return Ok((dp, None, run.trajectory.clone()));
    }

    let k0 = table.nearest_slice(t_end - opts.shoot_horizon);
    let slice = table.slice(k0);
    let t0 = table.times[k0];
    let shoot = ShootOptions {
        t0,
        ..ShootOptions::new(slice.max_abs_gradient())
    };
    let inner: Vec<usize> = (1..dom.len() - 1)
        .filter(|&i| dom.node(i) >= window.0 && dom.node(i) <= window.1)
        .collect();
    // Golden-ratio sequence: deterministic, well spread probe nodes.
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let picks: Vec<usize> = (0..opts.probes)
        .map(|k| inner[((k as f64 * phi).fract() * inner.len() as f64) as usize])
        .collect();
    let results = opts.parallelism.map(&picks, |&i| {
        let z = dom.node(i);
        let shot = euler_lagrange_shoot(
            t_end,
            z,
            &fitness,
            |y| slice.interpolate_cubic(y).0,
            |y| slice.interpolate_cubic(y).1,
            &shoot,
        );
        (z, u_t.gradient_at_node(i), shot)
    });
    let mut probes = Vec::with_capacity(results.len());
    let mut multivalued = 0;
    let mut max_error: f64 = 0.0;
    for (z, fd, shot) in results {
        let shot = shot?;
        if shot.is_multivalued() {
            multivalued += 1;
            max_error = f64::INFINITY;
        } else {
            max_error = max_error.max((shot.gradient - fd).abs());
        }
        probes.push((z, shot.gradient, fd));
    }
    Ok((
        dp,
        Some(GradientComparison {
            probes,
            max_error,
            multivalued,
            t0,
        }),
        run.trajectory.clone(),
    ))
}

/// Runs the `eps` solver at each value and compares the trait paths.
pub fn eps_sweep(
    cfg: &ModelConfig,
    eps_values: &[f64],
    limit_path: Option<&[(f64, f64)]>,
    par: Parallelism,
) -> Result<EpsSweep, CrossCheckError> {
    let runs = par.map(eps_values, |&eps| {
        let mut c = cfg.clone();
        c.eps = eps;
        let solver = EpsSolver::new(&c)?;
        let run = solver.run(&EpsRunOptions::default());
        if run.record.status.is_abort() {
            return Err(CrossCheckError::EpsAbort {
                eps,
                reason: run.record.status.to_string(),
            });
        }
        Ok(run.record.rows.iter().map(|r| (r.t, r.zbar)).collect::<Vec<_>>())
    });
    let paths = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let sup_gap = |a: &[(f64, f64)], b: &[(f64, f64)]| {
        a.iter()
            .map(|&(t, z)| (z - interpolate_pairs(b, t)).abs())
            .fold(0.0, f64::max)
    };
    let pair_gaps = paths.windows(2).map(|w| sup_gap(&w[1], &w[0])).collect();
    let limit_gap = match (limit_path, paths.last()) {
        (Some(lp), Some(p)) => sup_gap(p, lp),
        _ => f64::NAN,
    };
    Ok(EpsSweep {
        eps: eps_values.to_vec(),
        paths,
        pair_gaps,
        limit_gap,
    })
}

/// Halves the solver step and the mesh width.
pub fn refined(cfg: &ModelConfig) -> ModelConfig {
    let mut c = cfg.clone();
    c.n = 2 * (cfg.n - 1) + 1;
    c.dt = 0.5 * cfg.dt;
    c
}

pub fn cross_check(cfg: &ModelConfig, opts: &CrossCheckOptions) -> Result<CrossCheckReport, CrossCheckError> {
    require_limit_regime(cfg)?;
    let mut checks = Vec::new();
    let (dp, gradient, trajectory) = dp_versus_limit(cfg, opts)?;
    let tol = 5.0 * (dp.dt + dp.dz);
    checks.push(Check::below(
        "dp_vs_limit",
        dp.gap,
        tol,
        format!("window=[{:.4}, {:.4}]", dp.window.0, dp.window.1),
    ));
    let mut dps = vec![dp.clone()];
    if opts.refine {
        let fine_opts = CrossCheckOptions {
            shoot_horizon: 0.0,
            ..opts.clone()
        };
        let (fine, _, _) = dp_versus_limit(&refined(cfg), &fine_opts)?;
        let ratio = dp.gap / fine.gap;
        checks.push(Check::above(
            "dp_refinement_ratio",
            ratio,
            1.5,
            format!("gap {:.3e} -> {:.3e}", dp.gap, fine.gap),
        ));
        dps.push(fine);
    }
    if let Some(g) = &gradient {
        checks.push(Check::below(
            "shooting_gradient",
            g.max_error,
            5.0 * dp.dz * dp.dz,
            format!("probes={} multivalued={} t0={:.3}", g.probes.len(), g.multivalued, g.t0),
        ));
    }
    let sweep = if opts.eps_values.is_empty() {
        None
    } else {
        let mut c = cfg.clone();
        if let Some(n) = opts.eps_n {
            c.n = n;
        }
        if let Some(dt) = opts.eps_dt {
            c.dt = dt;
        }
        let sweep = eps_sweep(&c, &opts.eps_values, Some(&trajectory), opts.parallelism)?;
        checks.push(Check {
            name: "eps_gaps_decreasing".into(),
            value: sweep.pair_gaps.last().copied().unwrap_or(f64::NAN),
            tol: sweep.pair_gaps.first().copied().unwrap_or(f64::NAN),
            pass: sweep.gaps_decreasing(),
            detail: format!("gaps={:?}", sweep.pair_gaps),
        });
        checks.push(Check::below("eps_vs_limit", sweep.limit_gap, 0.05, String::new()));
        Some(sweep)
    };
    Ok(CrossCheckReport {
        checks,
        dp: dps,
        gradient,
        sweep,
    })
}
