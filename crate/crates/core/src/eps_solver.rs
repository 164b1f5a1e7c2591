//! Time stepping of the Hopf-Cole transformed equation at positive `eps`:
//!
//! `u_t = eps u_zz + |u_z|^2 + R(z) - rho(t) + Phi(t, z)`,
//! `rho = int exp(u / eps)`, `Phi = tau int p(y) H(z - y) dy`.
//!
//! Each step advances the Hamiltonian and reaction terms explicitly with
//! Heun's method (`rho`, `Phi` frozen at the step start) and then the
//! diffusion implicitly with a tridiagonal solve.

use thiserror::Error;

use crate::config::config_hash;
use crate::diagnostics::{default_zero_tol, monomorphism_monitor, positivity_sets, zero_set, PositivityReport};
use crate::grid::{
    argmax_refined, second_derivative_at, softmax_measure, zero_sum_residual, Argmax, Domain, Field1D,
    LatticeKernel,
};
use crate::model::{ModelConfig, ModelError};
use crate::record::{RecordRow, RunRecord, RunStatus, Snapshot};

/// Numerical extinction: `rho < EXTINCTION_FLOOR * rho(0)`.
pub const EXTINCTION_FLOOR: f64 = 1e-10;
/// Fraction of the `2 eps / rho` stability bound of the frozen mass.
const MASS_SAFETY: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpsError {
    #[error("initial trait z0 = {z0} is maladapted: R(z0) = {r} <= 0")]
    Maladapted { z0: f64, r: f64 },
    #[error("step rejected: dt = {dt:.4e} exceeds the stable step {suggested:.4e}")]
    StepRejected { dt: f64, suggested: f64 },
    #[error("non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsState {
    pub t: f64,
    pub u: Field1D,
    pub log_rho: f64,
    pub rho: f64,
    /// Normalised weights of `exp(u / eps)`.
    pub weights: Vec<f64>,
    pub phi: Field1D,
    pub argmax: Argmax,
    pub zbar: f64,
    /// `NaN` when the peak is within two cells of the boundary.
    pub d2u_zbar: f64,
    /// `sum_i p_i Phi(y_i)`.
    pub zero_sum: f64,
    /// `sum_i p_i R(y_i)`.
    pub mean_growth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsRunOptions {
    /// Spacing of the recorded rows.
    pub output_dt: f64,
    /// Keep a field snapshot every this many rows.
    pub snapshot_every: Option<usize>,
    pub stop_on_extinction: bool,
    /// Zero-set tolerance for `u - max u`; defaults to
    /// `10 (dz^2 + dt) + eps ln(1 / eps)`.
    pub zero_tol: Option<f64>,
}

impl Default for EpsRunOptions {
    fn default() -> Self {
        EpsRunOptions {
            output_dt: 0.1,
            snapshot_every: None,
            stop_on_extinction: true,
            zero_tol: None,
        }
    }
}

/// Per-step invariants collected along a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsStats {
    pub steps: usize,
    pub max_zero_sum: f64,
    pub rho_initial: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// `(t, eps (rho' forward difference) + rho^2 - rho sum p R)` per step.
    pub mass_residuals: Vec<(f64, f64)>,
    /// Smallest `upper - u` and `u - lower` over recorded rows and nodes.
    pub envelope_margin_upper: f64,
    pub envelope_margin_lower: f64,
    pub u_max_min: f64,
    pub u_max_max: f64,
    /// `(t, zbar, J)` for recorded rows with a positivity set left of `zbar`.
    pub left_sets: Vec<(f64, f64, (f64, f64))>,
}

impl EpsStats {
    pub fn rho_bound(&self) -> f64 {
        self.rho_initial.max(1.0)
    }

    pub fn max_mass_residual(&self) -> f64 {
        self.mass_residuals.iter().map(|r| r.1.abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct EpsRun {
    pub record: RunRecord,
    pub stats: EpsStats,
    /// Last state with finite values.
    pub final_state: EpsState,
}

/// Quadratic envelope `-A1 - B1 z^2 - C1 t <= u <= A2 - B2 z^2 + C2 t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
}

impl Envelope {
    pub fn lower(&self, z: f64, t: f64) -> f64 {
        -self.a1 - self.b1 * z * z - self.c1 * t
    }

    pub fn upper(&self, z: f64, t: f64) -> f64 {
        self.a2 - self.b2 * z * z + self.c2 * t
    }
}

pub struct EpsSolver {
    cfg: ModelConfig,
    domain: Domain,
    lattice: LatticeKernel,
    growth: Vec<f64>,
}

impl EpsSolver {
    pub fn new(cfg: &ModelConfig) -> Result<Self, EpsError> {
        let r0 = cfg.growth.r(cfg.z0);
        if !(r0 > 0.0) {
            return Err(EpsError::Maladapted { z0: cfg.z0, r: r0 });
        }
        cfg.validate()?;
        let domain = cfg.domain()?;
        let growth = domain.nodes().map(|z| cfg.growth.r(z)).collect();
        Ok(EpsSolver {
            lattice: LatticeKernel::new(&domain, &cfg.kernel),
            cfg: cfg.clone(),
            domain,
            growth,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Constant added to `-c (z - z0)^2` in the initial datum.
    pub fn initial_shift(&self) -> f64 {
        let cfg = &self.cfg;
        let mut s = -0.5 * cfg.eps * cfg.eps.ln();
        if cfg.options.normalize_mass {
            s += cfg.eps * (cfg.growth.r(cfg.z0) * (cfg.c / std::f64::consts::PI).sqrt()).ln();
        }
        s
    }

    /// `u0 = eps ln(eps^{-1/2} exp(-c (z - z0)^2 / eps))`, optionally shifted so
    /// that the initial mass is `R(z0)`.
    pub fn init_gaussian(&self) -> EpsState {
        let (c, z0) = (self.cfg.c, self.cfg.z0);
        let shift = self.initial_shift();
        let u = self
            .domain
            .nodes()
            .map(|z| -c * (z - z0) * (z - z0) + shift)
            .collect();
        self.state_from(0.0, Field1D::from_parts(self.domain, u))
    }

    /// Derived quantities for a given `u`.
    pub fn state_from(&self, t: f64, u: Field1D) -> EpsState {
        let m = softmax_measure(&u, self.cfg.eps);
        let phi = self
            .lattice
            .apply(&m.weights, self.cfg.tau, self.cfg.options.parallelism);
        let argmax = argmax_refined(&u);
        let d2u_zbar = second_derivative_at(&u, argmax.z).unwrap_or(f64::NAN);
        let zero_sum = zero_sum_residual(&m.weights, &phi);
        let mean_growth = m.weights.iter().zip(&self.growth).map(|(p, r)| p * r).sum();
        EpsState {
            t,
            log_rho: m.log_rho,
            rho: m.rho,
            weights: m.weights,
            zbar: argmax.z,
            argmax,
            d2u_zbar,
            zero_sum,
            mean_growth,
            phi,
            u,
        }
    }

    /// Largest stable step for `state`: the Hamiltonian CFL bound and the
    /// frozen-mass bound `2 eps / rho`.
    pub fn stable_dt(&self, state: &EpsState) -> f64 {
        let p = state.u.max_abs_gradient().max(1e-12);
        let cfl = self.domain.dz() / (2.0 * p);
        let mass = MASS_SAFETY * 2.0 * self.cfg.eps / state.rho.max(1e-300);
        cfl.min(mass)
    }

    fn source(&self, u: &[f64], rho: f64, phi: &[f64], out: &mut [f64]) {
        self.cfg.options.hamiltonian.apply(u, self.domain.dz(), out);
        for i in 0..u.len() {
            out[i] += self.growth[i] - rho + phi[i];
        }
    }

    /// One step of length `dt`.
    pub fn step_dt(&self, state: &EpsState, dt: f64) -> Result<EpsState, EpsError> {
        let limit = self.stable_dt(state);
        if dt > limit {
            return Err(EpsError::StepRejected { dt, suggested: 0.9 * limit });
        }
        let n = self.domain.len();
        let dz = self.domain.dz();
        let eps = self.cfg.eps;
        let u = state.u.values();
        let phi = state.phi.values();
        let mut s = vec![0.0; n];
        self.source(u, state.rho, phi, &mut s);
        let u1: Vec<f64> = u.iter().zip(&s).map(|(a, b)| a + dt * b).collect();
        self.source(&u1, state.rho, phi, &mut s);
        let mut ue: Vec<f64> = u
            .iter()
            .zip(u1.iter().zip(&s))
            .map(|(a, (b, c))| 0.5 * (a + b + dt * c))
            .collect();

        // Boundary nodes take the neighbouring second difference explicitly.
        let d2 = |i: usize| (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (dz * dz);
        ue[0] += dt * eps * d2(1);
        ue[n - 1] += dt * eps * d2(n - 2);
        let r = dt * eps / (dz * dz);
        solve_diffusion(&mut ue, r);

        if ue.iter().any(|v| !v.is_finite()) {
            return Err(EpsError::NonFinite { t: state.t + dt });
        }
        Ok(self.state_from(state.t + dt, Field1D::from_parts(self.domain, ue)))
    }

    pub fn step(&self, state: &EpsState) -> Result<EpsState, EpsError> {
        self.step_dt(state, self.cfg.dt)
    }

    /// Envelope constants with `C1 = C2 = rho_max + tau + 1`.
    pub fn envelope(&self, rho_max: f64) -> Envelope {
        let cfg = &self.cfg;
        let (c, z0) = (cfg.c, cfg.z0);
        let sg = cfg.g.sqrt();
        let shift = self.initial_shift();
        let b2 = (0.5 * c).min(0.5 * sg);
        let b1 = (2.0 * c).max(sg);
        Envelope {
            a1: -shift + c * b1 * z0 * z0 / (b1 - c),
            b1,
            c1: rho_max + cfg.tau + 1.0,
            a2: shift + c * b2 * z0 * z0 / (c - b2),
            b2,
            c2: rho_max + cfg.tau + 1.0,
        }
    }

    fn row(&self, s: &EpsState) -> (RecordRow, PositivityReport) {
        let fitness: Vec<f64> = self
            .growth
            .iter()
            .zip(s.phi.values())
            .map(|(r, p)| r - s.rho + p)
            .collect();
        let f = Field1D::from_parts(self.domain, fitness);
        let rep = positivity_sets(&f, s.zbar);
        (
            RecordRow {
                t: s.t,
                rho: s.rho,
                log_rho: s.log_rho,
                zbar: s.zbar,
                u_max: s.argmax.value,
                d2u_zbar: s.d2u_zbar,
                n_positivity_components: rep.count(),
            },
            rep,
        )
    }

    pub fn zero_tol(&self) -> f64 {
        let eps = self.cfg.eps;
        default_zero_tol(self.domain.dz(), self.cfg.dt) + eps * (1.0 / eps).ln()
    }

    pub fn run(&self, opts: &EpsRunOptions) -> EpsRun {
        let cfg = &self.cfg;
        let hash = config_hash(cfg, &cfg.kernel.kind().to_string());
        let mut record = RunRecord::new(hash, Some(cfg.eps));
        let zero_tol = opts.zero_tol.unwrap_or_else(|| self.zero_tol());
        let stride = ((opts.output_dt / cfg.dt).round() as usize).max(1);

        let mut state = self.init_gaussian();
        let rho0 = state.rho;
        let env = self.envelope(rho0.max(1.0));
        let log_floor = EXTINCTION_FLOOR.ln() + state.log_rho;
        let mut stats = EpsStats {
            steps: 0,
            max_zero_sum: state.zero_sum.abs(),
            rho_initial: rho0,
            rho_min: rho0,
            rho_max: rho0,
            mass_residuals: Vec::new(),
            envelope_margin_upper: f64::INFINITY,
            envelope_margin_lower: f64::INFINITY,
            u_max_min: f64::INFINITY,
            u_max_max: f64::NEG_INFINITY,
            left_sets: Vec::new(),
        };

        let mut rows_written = 0usize;
        let mut emit = |st: &EpsState, stats: &mut EpsStats, record: &mut RunRecord| {
            let (row, rep) = self.row(st);
            if let Some(j) = rep.left_set_j {
                stats.left_sets.push((st.t, st.zbar, j));
            }
            let shifted = st.u.shifted(-st.argmax.value);
            let n_max = zero_set(&shifted, zero_tol).len().max(1);
            record.push(row, n_max);
            for (z, &v) in self.domain.nodes().zip(st.u.values()) {
                stats.envelope_margin_upper = stats.envelope_margin_upper.min(env.upper(z, st.t) - v);
                stats.envelope_margin_lower = stats.envelope_margin_lower.min(v - env.lower(z, st.t));
            }
            stats.u_max_min = stats.u_max_min.min(st.argmax.value);
            stats.u_max_max = stats.u_max_max.max(st.argmax.value);
            if let Some(k) = opts.snapshot_every {
                if rows_written.is_multiple_of(k.max(1)) {
                    record.snapshots.push(Snapshot {
                        t: st.t,
                        field: st.u.clone(),
                    });
                }
            }
            rows_written += 1;
        };
        emit(&state, &mut stats, &mut record);

        let n_steps = (cfg.t_end / cfg.dt - 1e-9).ceil().max(0.0) as usize;
        let mut status = RunStatus::Completed;
        for k in 1..=n_steps {
            let dt = if k == n_steps { cfg.t_end - state.t } else { cfg.dt };
            if dt <= 0.0 {
                break;
            }
            let next = match self.step_dt(&state, dt) {
                Ok(s) => s,
                Err(e) => {
                    status = RunStatus::NumericalAbort {
                        t: state.t,
                        reason: e.to_string(),
                    };
                    break;
                }
            };
            let residual = cfg.eps * (next.rho - state.rho) / dt + state.rho * state.rho
                - state.rho * state.mean_growth;
            stats.mass_residuals.push((state.t, residual));
            stats.steps += 1;
            stats.max_zero_sum = stats.max_zero_sum.max(next.zero_sum.abs());
            stats.rho_min = stats.rho_min.min(next.rho);
            stats.rho_max = stats.rho_max.max(next.rho);
            state = next;

            if state.argmax.boundary {
                status = RunStatus::BoundaryArgmax {
                    t: state.t,
                    zbar: state.zbar,
                };
                emit(&state, &mut stats, &mut record);
                break;
            }
            if opts.stop_on_extinction && state.log_rho < log_floor {
                status = RunStatus::Extinct {
                    t: state.t,
                    zbar: state.zbar,
                };
                emit(&state, &mut stats, &mut record);
                break;
            }
            if k % stride == 0 || k == n_steps {
                emit(&state, &mut stats, &mut record);
            }
        }
        record.status = status;
        record.add_block(
            "invariants",
            vec![
                format!("steps={}", stats.steps),
                format!("max_zero_sum={:.3e}", stats.max_zero_sum),
                format!("rho_min={:.6e} rho_max={:.6e} rho_bound={:.6e}", stats.rho_min, stats.rho_max, stats.rho_bound()),
                format!("max_mass_residual={:.3e}", stats.max_mass_residual()),
                format!(
                    "envelope_margin_lower={:.3e} envelope_margin_upper={:.3e}",
                    stats.envelope_margin_lower, stats.envelope_margin_upper
                ),
                format!("u_max_range=[{:.6e}, {:.6e}]", stats.u_max_min, stats.u_max_max),
                match stats.left_sets.first() {
                    Some((t, z, j)) => format!("first_j t={t:.6} zbar={z:.6} J=[{:.6}, {:.6}] rows_with_j={}", j.0, j.1, stats.left_sets.len()),
                    None => "first_j none".to_string(),
                },
            ],
        );
        let monitor = monomorphism_monitor(&record, self.domain.dz());
        record.add_block("monomorphism", monitor.lines());
        EpsRun {
            record,
            stats,
            final_state: state,
        }
    }
}

/// Solves `(1 + 2r) x_i - r (x_{i-1} + x_{i+1}) = b_i` for the interior nodes
/// with the two end values of `b` held fixed; overwrites `b` with `x`.
fn solve_diffusion(b: &mut [f64], r: f64) {
    let n = b.len();
    if n < 3 || r == 0.0 {
        return;
    }
    let m = n - 2;
    let diag = 1.0 + 2.0 * r;
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    for k in 0..m {
        let i = k + 1;
        let mut rhs = b[i];
        if i == 1 {
            rhs += r * b[0];
        }
        if i == n - 2 {
            rhs += r * b[n - 1];
        }
        if k == 0 {
            cp[0] = -r / diag;
            dp[0] = rhs / diag;
        } else {
            let denom = diag + r * cp[k - 1];
            cp[k] = -r / denom;
            dp[k] = (rhs + r * dp[k - 1]) / denom;
        }
    }
    b[m] = dp[m - 1];
    for k in (0..m - 1).rev() {
        b[k + 1] = dp[k] - cp[k] * b[k + 2];
    }
}

/// Initial state of `cfg`.
pub fn init_gaussian(cfg: &ModelConfig) -> Result<EpsState, EpsError> {
    Ok(EpsSolver::new(cfg)?.init_gaussian())
}

/// Runs `cfg` to its horizon with default output options.
pub fn run(cfg: &ModelConfig) -> Result<EpsRun, EpsError> {
    Ok(EpsSolver::new(cfg)?.run(&EpsRunOptions::default()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{CustomGrowth, EnvelopeConstants, GrowthProfile};

    #[test]
    fn tridiagonal_matches_dense_solve() {
        let b0 = vec![1.0, 0.3, -0.2, 0.7, 0.1, 2.0];
        let r = 0.4;
        let mut x = b0.clone();
        solve_diffusion(&mut x, r);
        assert_eq!(x[0], b0[0]);
        assert_eq!(x[5], b0[5]);
        for i in 1..5 {
            let lhs = (1.0 + 2.0 * r) * x[i] - r * (x[i - 1] + x[i + 1]);
            assert!((lhs - b0[i]).abs() < 1e-14);
        }
    }

    fn base(eps: f64) -> ModelConfig {
        let mut cfg = ModelConfig::new(1.0, 1.0);
        cfg.eps = eps;
        cfg.n = 513;
        cfg.half_width = 5.5;
        cfg.dt = 2e-4;
        cfg
    }

    #[test]
    fn initial_state_of_gaussian() {
        let mut cfg = base(1e-2);
        cfg.options.normalize_mass = false;
        let st = init_gaussian(&cfg).unwrap();
        assert!(st.zbar.abs() < 1e-12);
        assert!((st.d2u_zbar + 2.0).abs() < 1e-9);
        let oracle = std::f64::consts::PI.sqrt();
        assert!(((st.rho - oracle) / oracle).abs() < 0.01);
        cfg.options.normalize_mass = true;
        let st = init_gaussian(&cfg).unwrap();
        assert!((st.rho - 1.0).abs() < 1e-9);
    }

    #[test]
    fn maladapted_start_rejected() {
        let mut cfg = base(1e-2);
        cfg.z0 = 1.2;
        assert!(matches!(EpsSolver::new(&cfg), Err(EpsError::Maladapted { .. })));
    }

    #[test]
    fn oversized_step_rejected() {
        let cfg = base(1e-2);
        let s = EpsSolver::new(&cfg).unwrap();
        let st = s.init_gaussian();
        assert!(matches!(s.step_dt(&st, 0.5), Err(EpsError::StepRejected { .. })));
    }

    #[test]
    fn symmetric_state_keeps_its_peak() {
        let mut cfg = base(1e-2);
        cfg.tau = 1e-9;
        let s = EpsSolver::new(&cfg).unwrap();
        let mut st = s.init_gaussian();
        for _ in 0..5 {
            st = s.step(&st).unwrap();
        }
        assert!(st.zbar.abs() < 1e-12, "{}", st.zbar);
    }

    /// With `R = 0` (up to 1e-14), `tau = 0` and no mass term, `u = -a(t) z^2 + b(t)` solves
    /// `u_t = eps u'' + u'^2` with `a' = -4 a^2`, `b' = -2 eps a`.
    #[test]
    fn quadratic_riccati_evolution() {
        let a0 = 0.5;
        let t_end = 0.5;
        // Oracle: RK4 on the coefficient ODE.
        let mut a = a0;
        let h = 1e-4;
        for _ in 0..(t_end / h) as usize {
            let f = |a: f64| -4.0 * a * a;
            let k1 = f(a);
            let k2 = f(a + 0.5 * h * k1);
            let k3 = f(a + 0.5 * h * k2);
            let k4 = f(a + h * k3);
            a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!((a - a0 / (1.0 + 4.0 * a0 * t_end)).abs() < 1e-10);

        let zero = GrowthProfile::custom(CustomGrowth {
            r: Box::new(|_| 1e-14),
            dr: Box::new(|_| 0.0),
            d2r: Box::new(|_| 0.0),
            envelope: EnvelopeConstants {
                k1: 0.0,
                k2: 0.0,
                k3: 0.0,
                k4: 0.0,
                k5: 0.0,
                k0_lower: 0.0,
                k0_upper: 0.0,
            },
        });
        let mut cfg = base(1e-2);
        cfg.growth = zero;
        cfg.tau = 1e-12;
        cfg.n = 801;
        cfg.half_width = 4.0;
        let s = EpsSolver::new(&cfg).unwrap();
        let d = *s.domain();
        let u0 = Field1D::from_fn(d, |z| -a0 * z * z).unwrap();
        // A vanishing mass term isolates the Riccati part.
        let mut st = s.state_from(0.0, u0);
        let dt = 2e-4;
        let steps = (t_end / dt).round() as usize;
        for _ in 0..steps {
            st.rho = 0.0;
            st = s.step_dt(&st, dt).unwrap();
        }
        let got = -second_derivative_at(&st.u, 0.0).unwrap() / 2.0;
        assert!((got - a).abs() < 2e-3, "{got} vs {a}");
    }

    #[test]
    fn short_run_invariants() {
        let mut cfg = base(1e-2);
        cfg.t_end = 1.0;
        let run = run(&cfg).unwrap();
        assert_eq!(run.record.status, RunStatus::Completed);
        assert!(run.stats.max_zero_sum < 1e-10);
        assert!(run.stats.rho_min > 0.0);
        assert!(run.stats.rho_max <= run.stats.rho_bound() + 1e-12);
        assert!(run.stats.envelope_margin_lower >= -1e-9);
        assert!(run.stats.envelope_margin_upper >= -1e-9);
        let rows = &run.record.rows;
        for w in rows.windows(2) {
            assert!(w[1].zbar >= w[0].zbar - cfg.dz());
        }
        assert!(rows.last().unwrap().zbar > 0.05);
    }
}
