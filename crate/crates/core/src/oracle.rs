//! Independent evaluators for the limit problem: discrete Hopf-Lax dynamic
//! programming, Euler-Lagrange shooting, and the closed-form mass relaxation.

use thiserror::Error;

use crate::grid::{format_snapshot, Domain, Field1D, SnapshotHeader};
use crate::limit_solver::interpolate_pairs;
use crate::model::ModelConfig;
use crate::parallel::Parallelism;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid oracle input: {0}")]
    InvalidInput(String),
    #[error("mass relaxation undefined at J0 = {j0}, Rz = {rz}, s = {s}")]
    Domain { j0: f64, rz: f64, s: f64 },
    #[error("non-finite DP value at step {step}, node {node}")]
    NonFinite { step: usize, node: usize },
}

/// Fitness `F(t, z)` with its trait derivative.
pub trait Fitness: Sync {
    fn value(&self, t: f64, z: f64) -> f64;

    fn grad(&self, t: f64, z: f64) -> f64 {
        let h = 1e-6 * (1.0 + z.abs());
        (self.value(t, z + h) - self.value(t, z - h)) / (2.0 * h)
    }
}

/// Wraps a closure; the gradient is a centered difference.
pub struct FnFitness<F>(pub F);

impl<F: Fn(f64, f64) -> f64 + Sync> Fitness for FnFitness<F> {
    fn value(&self, t: f64, z: f64) -> f64 {
        (self.0)(t, z)
    }
}

/// `F(t, z) = R(z) - R(zbar(t)) + tau H(z - zbar(t))` along a recorded trait path.
pub struct TraitPathFitness<'a> {
    cfg: &'a ModelConfig,
    path: &'a [(f64, f64)],
}

impl<'a> TraitPathFitness<'a> {
    pub fn new(cfg: &'a ModelConfig, path: &'a [(f64, f64)]) -> Result<Self, OracleError> {
        if path.is_empty() || path.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(OracleError::InvalidInput("trait path must be nonempty with increasing times".into()));
        }
        Ok(TraitPathFitness { cfg, path })
    }

    pub fn zbar(&self, t: f64) -> f64 {
        interpolate_pairs(self.path, t)
    }
}

impl Fitness for TraitPathFitness<'_> {
    fn value(&self, t: f64, z: f64) -> f64 {
        self.cfg.fitness_dynamic(z, self.zbar(t))
    }

    fn grad(&self, t: f64, z: f64) -> f64 {
        self.cfg.fitness_dynamic_dz(z, self.zbar(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpMode {
    /// `max_i [u_k(z_i) - (z_j - z_i)^2 / (4 dt)] + dt F(t_k, z_j)` over grid nodes.
    Literal,
    /// Off-grid maximisation on the cubic interpolant with trapezoidal action.
    Accurate,
}

#[derive(Debug, Clone, Copy)]
pub struct DpOptions {
    pub mode: DpMode,
    /// Scan every node at every step instead of the slope window.
    pub full_scan: bool,
    pub window_safety: f64,
    /// Keep every `store_every`-th slice (the last slice is always kept).
    pub store_every: usize,
    pub parallelism: Parallelism,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions {
            mode: DpMode::Accurate,
            full_scan: false,
            window_safety: 2.0,
            store_every: 1,
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpTable {
    pub domain: Domain,
    pub times: Vec<f64>,
    /// One row per stored time.
    pub values: Vec<Vec<f64>>,
}

impl DpTable {
    pub fn slice(&self, k: usize) -> Field1D {
        Field1D::from_parts(self.domain, self.values[k].clone())
    }

    pub fn last(&self) -> Field1D {
        self.slice(self.values.len() - 1)
    }

    /// Index of the stored slice closest to `t`.
    pub fn nearest_slice(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, &tk) in self.times.iter().enumerate() {
            if (tk - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }

    /// Snapshot text for every `stride`-th slice.
    pub fn snapshot_texts(&self, config_hash: &str, stride: usize) -> Vec<(f64, String)> {
        (0..self.times.len())
            .step_by(stride.max(1))
            .map(|k| {
                let hdr = SnapshotHeader {
                    t: self.times[k],
                    eps: None,
                    config_hash: config_hash.to_string(),
                };
                (self.times[k], format_snapshot(&self.slice(k), &hdr))
            })
            .collect()
    }
}

/// Discrete Lax-Oleinik recursion from `u0` up to `t_end`.
pub fn hopf_lax_dp<F: Fitness>(
    u0: &Field1D,
    fitness: &F,
    dt: f64,
    t_end: f64,
    opts: &DpOptions,
) -> Result<DpTable, OracleError> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= 0.0) {
        return Err(OracleError::InvalidInput(format!("dt = {dt}, T = {t_end}")));
    }
    let domain = *u0.domain();
    let n = domain.len();
    let dz = domain.dz();
    let nodes: Vec<f64> = domain.nodes().collect();
    let n_steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut table = DpTable {
        domain,
        times: vec![0.0],
        values: vec![u0.values().to_vec()],
    };
    let mut cur = u0.clone();
    let mut next = vec![0.0; n];
    let mut t = 0.0;
    for step in 1..=n_steps {
        let h = if step == n_steps { t_end - t } else { dt };
        let width = if opts.full_scan || step == 1 {
            n
        } else {
            let w = 2.0 * cur.max_abs_gradient() * h * opts.window_safety;
            (w / dz).ceil() as usize + 2
        };
        let u = cur.values();
        let cost = 1.0 / (4.0 * h);
        let mut f_now = vec![0.0; n];
        opts.parallelism.fill(&mut f_now, |i| fitness.value(t, nodes[i]));
        match opts.mode {
            DpMode::Literal => opts.parallelism.fill(&mut next, |j| {
                let zj = nodes[j];
                let (lo, hi) = (j.saturating_sub(width), (j + width).min(n - 1));
                let best = (lo..=hi)
                    .map(|i| u[i] - (zj - nodes[i]).powi(2) * cost)
                    .fold(f64::NEG_INFINITY, f64::max);
                best + h * f_now[j]
            }),
            DpMode::Accurate => {
                // Off-node source values come from cubic interpolation of u + (h/2) F.
                let src: Vec<f64> = (0..n).map(|i| u[i] + 0.5 * h * f_now[i]).collect();
                let src = Field1D::from_parts(domain, src);
                let src_v = src.values();
                opts.parallelism.fill(&mut next, |j| {
                    let zj = nodes[j];
                    let (lo, hi) = (j.saturating_sub(width), (j + width).min(n - 1));
                    let mut i_best = lo;
                    let mut v_best = f64::NEG_INFINITY;
                    for i in lo..=hi {
                        let v = src_v[i] - (zj - nodes[i]).powi(2) * cost;
                        if v > v_best {
                            v_best = v;
                            i_best = i;
                        }
                    }
                    let obj = |y: f64| src.interpolate_cubic(y).0 - (zj - y).powi(2) * cost;
                    let a = nodes[i_best.saturating_sub(1)];
                    let b = nodes[(i_best + 1).min(n - 1)];
                    let refined = golden_max(obj, a, b, 48).max(v_best);
                    refined + 0.5 * h * fitness.value(t + h, zj)
                });
            }
        }
        t += h;
        if let Some(node) = next.iter().position(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite { step, node });
        }
        cur = Field1D::from_parts(domain, next.clone());
        if step % opts.store_every.max(1) == 0 || step == n_steps {
            table.times.push(t);
            table.values.push(next.clone());
        }
    }
    Ok(table)
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd).max(f(a)).max(f(b))
}

#[derive(Debug, Clone, Copy)]
pub struct ShootOptions {
    /// Start time of the trajectory; the initial data lives here.
    pub t0: f64,
    /// Slope bound setting the bracket `z -/+ 2 (t - t0) p_max`.
    pub p_max: f64,
    pub rk_steps: usize,
    /// Subintervals scanned for sign changes of the endpoint residual.
    pub scan: usize,
    pub tol: f64,
}

impl ShootOptions {
    pub fn new(p_max: f64) -> Self {
        ShootOptions {
            t0: 0.0,
            p_max,
            rk_steps: 400,
            scan: 64,
            tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotStatus {
    Unique,
    /// Several starting points reach the target; the best action is kept.
    Multivalued { roots: usize },
    NoBracket,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub status: ShotStatus,
    /// `(s, gamma, gamma')`.
    pub trajectory: Vec<(f64, f64, f64)>,
    pub start: f64,
    /// `u0(gamma(t0)) + int (-gamma'^2 / 4 + F) ds`.
    pub action: f64,
    /// `-gamma'(t) / 2`.
    pub gradient: f64,
}

impl Shot {
    pub fn is_multivalued(&self) -> bool {
        self.status != ShotStatus::Unique
    }
}

/// Integrates `gamma'' = -2 F_z` from `gamma(t0) = y`, `gamma'(t0) = -2 u0'(y)`.
fn integrate<F: Fitness>(
    fitness: &F,
    y: f64,
    v0: f64,
    t0: f64,
    t: f64,
    steps: usize,
    keep: bool,
) -> (f64, f64, f64, Vec<(f64, f64, f64)>) {
    let h = (t - t0) / steps as f64;
    let rhs = |s: f64, g: f64, v: f64| (v, -2.0 * fitness.grad(s, g), -0.25 * v * v + fitness.value(s, g));
    let (mut g, mut v, mut a) = (y, v0, 0.0);
    let mut path = Vec::new();
    if keep {
        path.reserve(steps + 1);
        path.push((t0, g, v));
    }
    for k in 0..steps {
        let s = t0 + k as f64 * h;
        let k1 = rhs(s, g, v);
        let k2 = rhs(s + 0.5 * h, g + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
        let k3 = rhs(s + 0.5 * h, g + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
        let k4 = rhs(s + h, g + h * k3.0, v + h * k3.1);
        g += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        a += h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
        if keep {
            path.push((s + h, g, v));
        }
    }
    (g, v, a, path)
}

/// Shoots on `gamma(t0)` so that `gamma(t) = z`.
pub fn euler_lagrange_shoot<F, U, DU>(
    t: f64,
    z: f64,
    fitness: &F,
    u0: U,
    du0: DU,
    opts: &ShootOptions,
) -> Result<Shot, OracleError>
where
    F: Fitness,
    U: Fn(f64) -> f64,
    DU: Fn(f64) -> f64,
{
    let span = t - opts.t0;
    if !(span > 0.0) || !(opts.p_max >= 0.0) || opts.rk_steps == 0 || opts.scan == 0 {
        return Err(OracleError::InvalidInput(format!("t - t0 = {span}, p_max = {}", opts.p_max)));
    }
    let residual = |y: f64| integrate(fitness, y, -2.0 * du0(y), opts.t0, t, opts.rk_steps, false).0 - z;
    let half = 2.0 * span * opts.p_max + 1e-12;
    let (lo, hi) = (z - half, z + half);
    let ys: Vec<f64> = (0..=opts.scan)
        .map(|k| lo + (hi - lo) * k as f64 / opts.scan as f64)
        .collect();
    let rs: Vec<f64> = ys.iter().map(|&y| residual(y)).collect();
    let mut roots = Vec::new();
    for k in 0..opts.scan {
        if rs[k] == 0.0 {
            roots.push(ys[k]);
        } else if rs[k] * rs[k + 1] < 0.0 {
            let (mut a, mut b, mut ra) = (ys[k], ys[k + 1], rs[k]);
            while b - a > opts.tol {
                let m = 0.5 * (a + b);
                let rm = residual(m);
                if rm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if (rm < 0.0) == (ra < 0.0) {
                    a = m;
                    ra = rm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    if rs[opts.scan] == 0.0 {
        roots.push(ys[opts.scan]);
    }
    if roots.is_empty() {
        return Ok(Shot {
            status: ShotStatus::NoBracket,
            trajectory: Vec::new(),
            start: f64::NAN,
            action: f64::NAN,
            gradient: f64::NAN,
        });
    }
    let mut best: Option<Shot> = None;
    for &y in &roots {
        let (_, v, a, path) = integrate(fitness, y, -2.0 * du0(y), opts.t0, t, opts.rk_steps, true);
        let shot = Shot {
            status: ShotStatus::Unique,
            trajectory: path,
            start: y,
            action: u0(y) + a,
            gradient: -0.5 * v,
        };
        if best.as_ref().is_none_or(|b| shot.action > b.action) {
            best = Some(shot);
        }
    }
    let mut shot = best.expect("at least one root");
    if roots.len() > 1 {
        shot.status = ShotStatus::Multivalued { roots: roots.len() };
    }
    Ok(shot)
}

/// Closed-form solution of `J' = Rz - e^J`, `J(0) = J0`:
/// `J(s) = Rz s - ln(e^{-J0} + (e^{Rz s} - 1) / Rz)`.
pub fn mass_relaxation(j0: f64, rz: f64, s: f64) -> Result<f64, OracleError> {
    let err = OracleError::Domain { j0, rz, s };
    if !(j0.is_finite() && rz.is_finite() && s.is_finite()) {
        return Err(err);
    }
    let x = rz * s;
    if x > 30.0 {
        // e^{Rz s} dominates; factor it out to avoid overflow.
        let q = (rz * (-j0).exp() - 1.0) * (-x).exp();
        if q <= -1.0 {
            return Err(err);
        }
        return Ok(rz.ln() - q.ln_1p());
    }
    let growth = if x.abs() < 1e-12 { s * (1.0 + 0.5 * x) } else { x.exp_m1() / rz };
    let arg = (-j0).exp() + growth;
    if !(arg > 0.0) || !arg.is_finite() {
        return Err(err);
    }
    Ok(x - arg.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dom(l: f64, n: usize) -> Domain {
        Domain::symmetric(l, n).unwrap()
    }

    #[test]
    fn literal_dp_quadratic_data() {
        let c = 1.0;
        let d = dom(3.0, 301);
        let u0 = Field1D::from_fn(d, |z| -c * z * z).unwrap();
        let zero = FnFitness(|_: f64, _: f64| 0.0);
        let dt = 0.05;
        let opts = DpOptions {
            mode: DpMode::Literal,
            ..DpOptions::default()
        };
        let tab = hopf_lax_dp(&u0, &zero, dt, 1.0, &opts).unwrap();
        let last = tab.last();
        let t = *tab.times.last().unwrap();
        let tol = 2.0 * (dt + d.dz().powi(2) / dt);
        for (i, z) in d.nodes().enumerate() {
            if z.abs() < 1.0 {
                let exact = -c * z * z / (1.0 + 4.0 * c * t);
                assert!((last.values()[i] - exact).abs() < tol, "z={z}");
            }
        }
        assert_eq!(tab.values[0], u0.values());
    }

    #[test]
    fn accurate_dp_is_exact_for_quadratics() {
        let d = dom(3.0, 121);
        let u0 = Field1D::from_fn(d, |z| -0.5 * z * z).unwrap();
        let zero = FnFitness(|_: f64, _: f64| 0.0);
        let tab = hopf_lax_dp(&u0, &zero, 0.1, 2.0, &DpOptions::default()).unwrap();
        let last = tab.last();
        for (i, z) in d.nodes().enumerate() {
            if z.abs() < 1.5 {
                assert!((last.values()[i] + 0.5 * z * z / 5.0).abs() < 1e-9, "z={z}");
            }
        }
    }

    #[test]
    fn constant_fitness_shifts_uniformly() {
        let d = dom(2.0, 81);
        let u0 = Field1D::from_fn(d, |z| -(z - 0.3).powi(2)).unwrap();
        let zero = FnFitness(|_: f64, _: f64| 0.0);
        let a = FnFitness(|_: f64, _: f64| 0.7);
        for mode in [DpMode::Literal, DpMode::Accurate] {
            let opts = DpOptions { mode, ..DpOptions::default() };
            let p = hopf_lax_dp(&u0, &zero, 0.05, 1.0, &opts).unwrap().last();
            let q = hopf_lax_dp(&u0, &a, 0.05, 1.0, &opts).unwrap().last();
            for (x, y) in p.values().iter().zip(q.values()) {
                assert_relative_eq!(y - x, 0.7, epsilon = 1e-12);
            }
            let ia = crate::grid::argmax_refined(&p).index;
            assert_eq!(ia, crate::grid::argmax_refined(&q).index);
        }
    }

    #[test]
    fn single_spike_gives_quadratic_cone() {
        let d = dom(1.0, 41);
        let mut v = vec![-1e6; 41];
        v[17] = 0.25;
        let u0 = Field1D::new(d, v).unwrap();
        let f = FnFitness(|_: f64, _: f64| 0.5);
        let dt = 0.2;
        let opts = DpOptions {
            mode: DpMode::Literal,
            ..DpOptions::default()
        };
        let tab = hopf_lax_dp(&u0, &f, dt, dt, &opts).unwrap();
        let z17 = d.node(17);
        for (j, z) in d.nodes().enumerate() {
            let cone = 0.25 - (z - z17).powi(2) / (4.0 * dt) + dt * 0.5;
            assert_relative_eq!(tab.values[1][j], cone, epsilon = 1e-12);
        }
    }

    #[test]
    fn windowed_matches_full_scan_on_concave_data() {
        let d = dom(3.0, 201);
        let u0 = Field1D::from_fn(d, |z| -(z - 0.2).powi(2)).unwrap();
        let f = FnFitness(|_: f64, z: f64| -0.5 * z * z + (z - 0.1).tanh());
        let windowed = hopf_lax_dp(&u0, &f, 0.02, 1.0, &DpOptions::default()).unwrap();
        let full = hopf_lax_dp(
            &u0,
            &f,
            0.02,
            1.0,
            &DpOptions {
                full_scan: true,
                ..DpOptions::default()
            },
        )
        .unwrap();
        assert_eq!(windowed.values, full.values);
    }

    #[test]
    fn store_every_keeps_last_slice() {
        let d = dom(1.0, 21);
        let u0 = Field1D::from_fn(d, |z| -z * z).unwrap();
        let f = FnFitness(|_: f64, _: f64| 0.0);
        let opts = DpOptions {
            store_every: 4,
            ..DpOptions::default()
        };
        let tab = hopf_lax_dp(&u0, &f, 0.1, 1.0, &opts).unwrap();
        assert_eq!(tab.times.len(), 4);
        assert_relative_eq!(*tab.times.last().unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(tab.snapshot_texts("h", 2).len(), 2);
        assert!(hopf_lax_dp(&u0, &f, 0.0, 1.0, &opts).is_err());
    }

    #[test]
    fn shooting_free_quadratic() {
        let c = 0.8;
        let f = FnFitness(|_: f64, _: f64| 0.0);
        let (t, z) = (1.5, 0.9);
        let opts = ShootOptions::new(2.0 * c * 4.0);
        let shot = euler_lagrange_shoot(t, z, &f, |y| -c * y * y, |y| -2.0 * c * y, &opts).unwrap();
        assert_eq!(shot.status, ShotStatus::Unique);
        let k = 1.0 + 4.0 * c * t;
        assert_relative_eq!(shot.action, -c * z * z / k, epsilon = 1e-10);
        assert_relative_eq!(shot.gradient, -2.0 * c * z / k, epsilon = 1e-10);
        for &(s, g, _) in &shot.trajectory {
            assert_relative_eq!(g, z * (1.0 + 4.0 * c * s) / k, epsilon = 1e-10);
        }
    }

    #[test]
    fn shooting_stationary_peak() {
        let mu = 0.5;
        let f = FnFitness(|_: f64, z: f64| -(z - mu) * (z - mu));
        let opts = ShootOptions::new(4.0);
        let shot = euler_lagrange_shoot(2.0, mu, &f, |y| -(y - mu).powi(2), |y| -2.0 * (y - mu), &opts).unwrap();
        assert!(shot.action.abs() < 1e-12);
        assert!(shot.trajectory.iter().all(|p| (p.1 - mu).abs() < 1e-10));
    }

    #[test]
    fn shooting_flags_multiple_trajectories() {
        // Two symmetric peaks in the initial data: the midpoint is reached from both.
        let u0 = |y: f64| -(y * y - 1.0).powi(2);
        let du0 = |y: f64| -4.0 * y * (y * y - 1.0);
        let f = FnFitness(|_: f64, _: f64| 0.0);
        let opts = ShootOptions::new(8.0);
        let shot = euler_lagrange_shoot(0.5, 0.0, &f, u0, du0, &opts).unwrap();
        assert!(shot.is_multivalued(), "{:?}", shot.status);
    }

    #[test]
    fn shot_action_is_below_dp_value() {
        let d = dom(3.0, 241);
        let f = FnFitness(|_: f64, z: f64| -0.5 * z * z + 0.5 * z.tanh());
        let u0 = Field1D::from_fn(d, |z| -z * z).unwrap();
        let t = 1.0;
        let dt = 0.02;
        let tab = hopf_lax_dp(&u0, &f, dt, t, &DpOptions::default()).unwrap();
        let last = tab.last();
        let opts = ShootOptions::new(u0.max_abs_gradient());
        let tol = 2.0 * (d.dz().powi(2) / (4.0 * dt) + dt * 1.5);
        for &z in &[-0.8, -0.2, 0.0, 0.4, 1.1] {
            let shot = euler_lagrange_shoot(t, z, &f, |y| -y * y, |y| -2.0 * y, &opts).unwrap();
            assert!(shot.action <= last.interpolate_cubic(z).0 + tol, "z={z}");
            assert!((shot.action - last.interpolate_cubic(z).0).abs() < 1e-3, "z={z}");
        }
    }

    #[test]
    fn mass_relaxation_fixed_point_and_limits() {
        for &r in &[0.1f64, 0.75, 2.0] {
            for &s in &[0.0, 1.0, 10.0, 100.0] {
                assert_relative_eq!(mass_relaxation(r.ln(), r, s).unwrap(), r.ln(), epsilon = 1e-12);
            }
        }
        assert!((mass_relaxation(0.0, 0.75, 40.0).unwrap() - 0.75f64.ln()).abs() < 1e-6);
        let a = mass_relaxation(0.0, -0.21, 40.0).unwrap();
        let b = mass_relaxation(0.0, -0.21, 41.0).unwrap();
        assert!(a < -8.0 && b < a);
        assert_relative_eq!(mass_relaxation(0.3, 0.0, 2.0).unwrap(), -((-0.3f64).exp() + 2.0).ln(), epsilon = 1e-15);
        assert!(mass_relaxation(2.0, 1.0, -5.0).is_err());
        assert!(mass_relaxation(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn mass_relaxation_continuous_through_zero_rate() {
        let j = |r: f64| mass_relaxation(-0.4, r, 3.0).unwrap();
        assert_relative_eq!(j(1e-13), j(0.0), epsilon = 1e-11);
        assert_relative_eq!(j(-1e-13), j(0.0), epsilon = 1e-11);
        assert_relative_eq!(j(1e-6), j(0.0), epsilon = 1e-5);
    }

    proptest! {
        #[test]
        fn mass_relaxation_solves_its_ode(j0 in -3.0f64..3.0, rz in -1.5f64..1.5, s in 0.1f64..20.0) {
            let h = 1e-4;
            let d = (mass_relaxation(j0, rz, s + h).unwrap() - mass_relaxation(j0, rz, s - h).unwrap()) / (2.0 * h);
            let rhs = rz - mass_relaxation(j0, rz, s).unwrap().exp();
            prop_assert!((d - rhs).abs() < 1e-6, "{} vs {}", d, rhs);
        }

        #[test]
        fn mass_relaxation_converges_to_log_rate(j0 in -3.0f64..3.0, rz in 0.2f64..2.0) {
            prop_assert!((mass_relaxation(j0, rz, 200.0).unwrap() - rz.ln()).abs() < 1e-9);
        }
    }
}
