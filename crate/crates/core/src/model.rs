//! Parameter set, fitness functions, the thresholds `d1` and `mu1`, and the
//! regime predicted for a parameter set.

use std::fmt;

use thiserror::Error;

use crate::grid::{Domain, HamiltonianScheme};
use crate::kernels::{GrowthProfile, KernelError, TransferKernel};
use crate::parallel::Parallelism;
use crate::roots::{bisect, positive_intervals};

/// Upper end of the `d1` bracket.
pub const D1_BRACKET_HI: f64 = 50.0;
/// `d1` bracketing gives up below this.
pub const D1_BRACKET_FLOOR: f64 = 1e-6;
/// Relative distance to `tau = 2 sqrt(g)` treated as the critical case.
pub const CRITICAL_REL_TOL: f64 = 1e-12;
/// Endpoint accuracy of positivity intervals.
pub const INTERVAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),
    #[error("degenerate kernel: H'(d1) = {0} >= 1")]
    DegenerateKernel(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Numerical switches shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub hamiltonian: HamiltonianScheme,
    /// Shift the initial datum so that the initial mass equals `R(z0)`.
    pub normalize_mass: bool,
    /// Full-lattice maximisation in the dynamic programming oracle.
    pub full_scan: bool,
    pub parallelism: Parallelism,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            hamiltonian: HamiltonianScheme::Eno2,
            normalize_mass: true,
            full_scan: false,
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub g: f64,
    pub tau: f64,
    pub eps: f64,
    pub z0: f64,
    /// Stiffness of the initial datum `-c (z - z0)^2`.
    pub c: f64,
    /// Domain half-width.
    pub half_width: f64,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub kernel: TransferKernel,
    pub growth: GrowthProfile,
    pub options: SolverOptions,
}

impl ModelConfig {
    /// Quadratic growth and tanh transfer with every other value derived from
    /// the defaults.
    pub fn new(g: f64, tau: f64) -> Self {
        let mut cfg = ModelConfig {
            g,
            tau,
            eps: 1e-2,
            z0: 0.0,
            c: 1.0,
            half_width: 0.0,
            n: 1025,
            dt: 0.0,
            t_end: 20.0,
            kernel: TransferKernel::tanh(),
            growth: GrowthProfile::quadratic(g),
            options: SolverOptions::default(),
        };
        cfg.half_width = cfg.default_half_width();
        cfg.dt = cfg.default_dt();
        cfg
    }

    pub fn mu(&self) -> f64 {
        self.tau / (2.0 * self.g)
    }

    /// `max(3 / sqrt g, |z0| + 5, mu + 5)`.
    pub fn default_half_width(&self) -> f64 {
        (3.0 / self.g.sqrt())
            .max(self.z0.abs() + 5.0)
            .max(self.mu().abs() + 5.0)
    }

    /// Time step under the CFL bound of the Hamiltonian with the initial
    /// slope bound `2 c (L + |z0|)`.
    pub fn default_dt(&self) -> f64 {
        let dz = 2.0 * self.half_width / (self.n as f64 - 1.0);
        let slope = self.c.max(self.g.sqrt() + self.tau) * 2.0 * (self.half_width + self.z0.abs());
        0.8 * dz / (2.0 * slope)
    }

    pub fn domain(&self) -> Result<Domain, ModelError> {
        Domain::symmetric(self.half_width, self.n).map_err(|e| ModelError::InvalidConfig(e.to_string()))
    }

    pub fn dz(&self) -> f64 {
        2.0 * self.half_width / (self.n as f64 - 1.0)
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        for (name, v) in [
            ("g", self.g),
            ("tau", self.tau),
            ("epsilon", self.eps),
            ("c", self.c),
            ("L", self.half_width),
            ("dt", self.dt),
            ("T", self.t_end),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !self.z0.is_finite() {
            return bad(format!("z0 must be finite, got {}", self.z0));
        }
        if self.n < crate::grid::MIN_NODES {
            return bad(format!(
                "grid-resolution invariant violated: N must be at least {}, got {}",
                crate::grid::MIN_NODES,
                self.n
            ));
        }
        let mu = self.mu();
        if !(mu.is_finite() && mu > 0.0) {
            return bad(format!("mu = tau / (2 g) must be positive and finite, got {mu}"));
        }
        let z_h = self.kernel.z_h()?;
        if self.dz() > z_h / 10.0 {
            return bad(format!(
                "grid-resolution invariant violated: dz = {:.4e} > z_H / 10 = {:.4e}",
                self.dz(),
                z_h / 10.0
            ));
        }
        if self.growth.r(self.z0) <= 0.0 {
            return bad(format!("z0 = {} lies outside the viable set R > 0", self.z0));
        }
        if self.z0.abs() >= self.half_width {
            return bad(format!("z0 = {} lies outside [-L, L]", self.z0));
        }
        Ok(())
    }

    /// `F_mu(z) = R(z) - R(mu) + tau H(z - mu)`.
    pub fn fitness_stationary(&self, z: f64, mu: f64) -> f64 {
        self.growth.r(z) - self.growth.r(mu) + self.tau * self.kernel.h(z - mu)
    }

    /// `F(z; zbar) = R(z) - R(zbar) + tau H(z - zbar)`.
    pub fn fitness_dynamic(&self, z: f64, zbar: f64) -> f64 {
        self.growth.r(z) - self.growth.r(zbar) + self.tau * self.kernel.h(z - zbar)
    }

    pub fn fitness_dynamic_dz(&self, z: f64, zbar: f64) -> f64 {
        self.growth.dr(z) + self.tau * self.kernel.dh(z - zbar)
    }

    pub fn fitness_dynamic_d2z(&self, z: f64, zbar: f64) -> f64 {
        self.growth.d2r(z) + self.tau * self.kernel.d2h(z - zbar)
    }
}

/// `phi(d) = d (1 + H'(d)) - 2 H(d)`.
pub fn d1_residual(k: &TransferKernel, d: f64) -> f64 {
    d * (1.0 + k.dh(d)) - 2.0 * k.h(d)
}

/// Positive root of `d (1 + H'(d)) - 2 H(d)`.
pub fn compute_d1(k: &TransferKernel, tol: f64) -> Result<f64, ModelError> {
    let phi = |d: f64| d1_residual(k, d);
    let z_h = k.z_h()?;
    let mut lo = z_h.max(0.1);
    while phi(lo) >= 0.0 {
        lo *= 0.5;
        if lo < D1_BRACKET_FLOOR {
            return Err(ModelError::Hypothesis(format!(
                "no bracket for d1 on ({D1_BRACKET_FLOOR}, {D1_BRACKET_HI})"
            )));
        }
    }
    if !(phi(D1_BRACKET_HI) > 0.0) {
        return Err(ModelError::Hypothesis(format!(
            "no bracket for d1 on ({D1_BRACKET_FLOOR}, {D1_BRACKET_HI})"
        )));
    }
    let d1 = bisect(phi, lo, D1_BRACKET_HI, 0.0, tol).map_err(|e| ModelError::Hypothesis(e.to_string()))?;
    let probe = 1e-6 * d1;
    if !(phi(d1 - probe) < 0.0 && phi(d1 + probe) > 0.0) {
        return Err(ModelError::Hypothesis(format!(
            "d1 = {d1} is not a simple crossing from negative to positive"
        )));
    }
    Ok(d1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub d1: f64,
    pub mu1: f64,
    /// `2 H(d1) / ((1 - H'(d1)) (1 + H'(d1)))`.
    pub mu1_alt: f64,
    pub z_h: f64,
}

impl Thresholds {
    pub fn d1_exceeds_z_h(&self) -> bool {
        self.d1 > self.z_h
    }
}

pub fn compute_thresholds(k: &TransferKernel) -> Result<Thresholds, ModelError> {
    let d1 = compute_d1(k, 1e-14)?;
    let hp = k.dh(d1);
    if hp >= 1.0 {
        return Err(ModelError::DegenerateKernel(hp));
    }
    let mu1 = d1 / (1.0 - hp);
    let mu1_alt = 2.0 * k.h(d1) / ((1.0 - hp) * (1.0 + hp));
    if (mu1 - mu1_alt).abs() > 1e-9 * mu1.abs().max(1.0) {
        return Err(ModelError::Hypothesis(format!(
            "closed forms of mu1 disagree: {mu1} vs {mu1_alt}"
        )));
    }
    Ok(Thresholds {
        d1,
        mu1,
        mu1_alt,
        z_h: k.z_h()?,
    })
}

/// `mu1 = d1 / (1 - H'(d1))`.
pub fn compute_mu1(k: &TransferKernel) -> Result<f64, ModelError> {
    compute_thresholds(k).map(|t| t.mu1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    MonomorphicConvergence,
    SuicideFiniteTime,
    SuicideAsymptotic,
    BeyondMu1,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::MonomorphicConvergence => "monomorphic-convergence",
            Regime::SuicideFiniteTime => "suicide-finite-time",
            Regime::SuicideAsymptotic => "suicide-asymptotic",
            Regime::BeyondMu1 => "beyond-mu1",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub mu: f64,
    pub mu1: f64,
    pub d1: f64,
    pub regime: Regime,
    /// Every regime compatible with the parameters; two entries at
    /// `tau = 2 sqrt(g)`.
    pub flags: Vec<Regime>,
    pub predicted_limit_trait: Option<f64>,
    pub predicted_extinction_trait: Option<f64>,
}

pub fn classify_regime(cfg: &ModelConfig) -> Result<RegimeReport, ModelError> {
    let th = compute_thresholds(&cfg.kernel)?;
    Ok(regime_from(cfg.g, cfg.tau, &th))
}

/// Regime for `(g, tau)` given precomputed thresholds.
pub fn regime_from(g: f64, tau: f64, th: &Thresholds) -> RegimeReport {
    let mu = tau / (2.0 * g);
    let critical = 2.0 * g.sqrt();
    let mut report = RegimeReport {
        mu,
        mu1: th.mu1,
        d1: th.d1,
        regime: Regime::BeyondMu1,
        flags: vec![Regime::BeyondMu1],
        predicted_limit_trait: None,
        predicted_extinction_trait: None,
    };
    if mu > th.mu1 {
        return report;
    }
    if ((tau - critical) / critical).abs() <= CRITICAL_REL_TOL {
        report.regime = Regime::SuicideAsymptotic;
        report.flags = vec![Regime::MonomorphicConvergence, Regime::SuicideAsymptotic];
        report.predicted_limit_trait = Some(mu);
        report.predicted_extinction_trait = Some(1.0 / g.sqrt());
    } else if tau < critical {
        report.regime = Regime::MonomorphicConvergence;
        report.flags = vec![Regime::MonomorphicConvergence];
        report.predicted_limit_trait = Some(mu);
    } else {
        report.regime = Regime::SuicideFiniteTime;
        report.flags = vec![Regime::SuicideFiniteTime];
        report.predicted_extinction_trait = Some(1.0 / g.sqrt());
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitnessType {
    TypeOne,
    TypeTwo,
    Degenerate,
}

impl FitnessType {
    pub fn name(&self) -> &'static str {
        match self {
            FitnessType::TypeOne => "type-one",
            FitnessType::TypeTwo => "type-two",
            FitnessType::Degenerate => "degenerate",
        }
    }
}

impl fmt::Display for FitnessType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessClassification {
    pub kind: FitnessType,
    pub intervals: Vec<(f64, f64)>,
}

/// Values of `F` below this (relative to its scale) count as zero, so that
/// rounding noise at a double root does not create spurious components.
fn fitness_zero_tol(cfg: &ModelConfig, zbar: f64) -> f64 {
    1e-13 * (1.0 + cfg.tau + cfg.growth.r(zbar).abs() + cfg.g * cfg.half_width * cfg.half_width)
}

/// Positivity intervals of `F(., zbar)` on `[-L, L]`.
pub fn fitness_positive_intervals(cfg: &ModelConfig, zbar: f64) -> Vec<(f64, f64)> {
    let tol = fitness_zero_tol(cfg, zbar);
    positive_intervals(
        |z| cfg.fitness_dynamic(z, zbar) - tol,
        -cfg.half_width,
        cfg.half_width,
        cfg.n - 1,
        INTERVAL_TOL,
    )
}

/// Number of positivity components of `F(0, .)` with `zbar(0) = z0`.
pub fn classify_initial_fitness_type(cfg: &ModelConfig) -> FitnessClassification {
    let intervals = fitness_positive_intervals(cfg, cfg.z0);
    let kind = match intervals.len() {
        0 => FitnessType::Degenerate,
        1 => FitnessType::TypeOne,
        _ => FitnessType::TypeTwo,
    };
    FitnessClassification { kind, intervals }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Independent oracle: plain bisection on the closed form for tanh.
    fn tanh_d1_oracle() -> f64 {
        let phi = |d: f64| d * (1.0 + 1.0 / (d.cosh() * d.cosh())) - 2.0 * d.tanh();
        let (mut a, mut b) = (0.1, 10.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if phi(m) < 0.0 {
                a = m
            } else {
                b = m
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn tanh_d1_matches_oracle() {
        let k = TransferKernel::tanh();
        let d1 = compute_d1(&k, 1e-14).unwrap();
        assert!((d1 - tanh_d1_oracle()).abs() < 1e-12);
        assert!((d1 - 1.606_115_298_802_767_8).abs() < 1e-12);
        assert!(d1_residual(&k, d1).abs() < 1e-14);
        assert!(d1_residual(&k, d1 / 2.0) < 0.0);
        assert!(d1_residual(&k, 2.0 * d1) > 0.0);
    }

    #[test]
    fn tanh_mu1_forms_agree() {
        let k = TransferKernel::tanh();
        let th = compute_thresholds(&k).unwrap();
        let d = tanh_d1_oracle();
        let s = 1.0 / (d.cosh() * d.cosh());
        let oracle_a = d / (1.0 - s);
        let oracle_b = 2.0 * d.tanh() / ((1.0 - s) * (1.0 + s));
        assert!((th.mu1 - oracle_a).abs() < 1e-11);
        assert!((th.mu1 - oracle_b).abs() < 1e-9);
        assert!((th.mu1 - 1.886_969_907_085_753_7).abs() < 1e-11);
        assert!(th.d1_exceeds_z_h());
    }

    #[test]
    fn stationary_fitness_vanishes_at_mu1_minus_d1() {
        let th = compute_thresholds(&TransferKernel::tanh()).unwrap();
        let cfg = ModelConfig::new(1.0, 2.0 * th.mu1);
        assert!(cfg.fitness_stationary(th.mu1 - th.d1, th.mu1).abs() < 1e-9);
        assert_eq!(cfg.fitness_stationary(th.mu1, th.mu1), 0.0);
    }

    #[test]
    fn arctan_thresholds() {
        let th = compute_thresholds(&TransferKernel::scaled_arctan()).unwrap();
        assert!((th.d1 - 0.964_475_521_234_902_8).abs() < 1e-11);
        assert!((th.mu1 - 1.384_688_088_216_830_4).abs() < 1e-10);
    }

    #[test]
    fn stretched_tanh_has_no_threshold() {
        // For H(x) = tanh(x / 2), phi(2x) = 2x + x sech^2 x - 2 tanh x > 0 for
        // all x > 0, so there is no positive root to compare against.
        let xs: Vec<f64> = (0..=4000).map(|i| i as f64 * 0.01).collect();
        let wide: Vec<f64> = xs.iter().map(|x| (x / 2.0).tanh()).collect();
        let k2 = TransferKernel::from_table(xs, wide).unwrap();
        for d in [0.01, 0.5, 1.0, 3.0, 10.0, 39.0] {
            assert!(d1_residual(&k2, d) > 0.0);
        }
        assert!(matches!(compute_d1(&k2, 1e-10), Err(ModelError::Hypothesis(_))));
    }

    #[test]
    fn regime_examples() {
        let r = classify_regime(&ModelConfig::new(1.0, 1.0)).unwrap();
        assert_eq!(r.regime, Regime::MonomorphicConvergence);
        assert_eq!(r.predicted_limit_trait, Some(0.5));
        let r = classify_regime(&ModelConfig::new(0.065, 0.5)).unwrap();
        assert_eq!(r.regime, Regime::BeyondMu1);
        assert!((r.mu - 3.846).abs() < 1e-3);
        let r = classify_regime(&ModelConfig::new(1.0, 2.2)).unwrap();
        assert_eq!(r.regime, Regime::SuicideFiniteTime);
        assert_eq!(r.predicted_extinction_trait, Some(1.0));
        let r = classify_regime(&ModelConfig::new(1.0, 2.0)).unwrap();
        assert_eq!(r.regime, Regime::SuicideAsymptotic);
        assert_eq!(r.flags.len(), 2);
    }

    #[test]
    fn fitness_dynamic_slope_at_zbar() {
        let cfg = ModelConfig::new(0.7, 1.1);
        for &zb in &[-0.4, 0.0, 0.3, 0.9] {
            assert_eq!(cfg.fitness_dynamic(zb, zb), 0.0);
            assert_relative_eq!(cfg.fitness_dynamic_dz(zb, zb), 2.0 * cfg.g * (cfg.mu() - zb), epsilon = 1e-14);
        }
    }

    #[test]
    fn initial_type_examples() {
        let mut cfg = ModelConfig::new(1.0, 1.0);
        cfg.z0 = cfg.mu();
        assert_eq!(classify_initial_fitness_type(&cfg).kind, FitnessType::Degenerate);
        cfg.z0 = 0.1;
        let c = classify_initial_fitness_type(&cfg);
        assert_eq!(c.kind, FitnessType::TypeOne);
        let (a, b) = c.intervals[0];
        assert!((a - 0.1).abs() < 1e-8 && b >= cfg.mu());
    }

    #[test]
    fn both_types_occur_above_mu() {
        // tau = 0.5 and mu = 1.7: g = tau / (2 mu).
        let g = 0.5 / 3.4;
        let mu1 = compute_mu1(&TransferKernel::tanh()).unwrap();
        let mut cfg = ModelConfig::new(g, 0.5);
        let mut seen = Vec::new();
        let steps = 40;
        for k in 1..steps {
            cfg.z0 = cfg.mu() + (mu1 - cfg.mu()) * k as f64 / steps as f64;
            seen.push(classify_initial_fitness_type(&cfg).kind);
        }
        assert!(seen.contains(&FitnessType::TypeOne));
        assert!(seen.contains(&FitnessType::TypeTwo));
    }

    #[test]
    fn validate_rejects_coarse_grid_and_bad_z0() {
        let mut cfg = ModelConfig::new(1.0, 1.0);
        assert!(cfg.validate().is_ok());
        cfg.n = 33;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::new(1.0, 1.0);
        cfg.z0 = 1.5;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn stationary_fitness_negative_below_mu1(frac in 0.01f64..0.99, z in -6.0f64..6.0) {
            let mu1 = compute_mu1(&TransferKernel::tanh()).unwrap();
            let mu = frac * mu1;
            let cfg = ModelConfig::new(1.0, 2.0 * mu);
            prop_assume!((z - mu).abs() > 1e-3);
            prop_assert!(cfg.fitness_stationary(z, mu) < 0.0);
        }

        #[test]
        fn lemma_inequality_on_grid(x in 0.0f64..8.0, frac in 0.0f64..1.0) {
            let mu1 = compute_mu1(&TransferKernel::tanh()).unwrap();
            let mu = frac * mu1;
            prop_assert!(mu * x.tanh() - x * (mu - x / 2.0) >= -1e-12);
        }

        #[test]
        fn regime_depends_on_mu_and_scaled_tau(g in 0.01f64..5.0, tau in 0.01f64..5.0) {
            let th = compute_thresholds(&TransferKernel::tanh()).unwrap();
            let got = regime_from(g, tau, &th).regime;
            let (mu, r) = (tau / (2.0 * g), tau / g.sqrt());
            let expected = if mu > th.mu1 {
                Regime::BeyondMu1
            } else if r < 2.0 {
                Regime::MonomorphicConvergence
            } else {
                Regime::SuicideFiniteTime
            };
            prop_assume!((r - 2.0).abs() > 1e-9);
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn single_zero_below_mu(zb_frac in 0.0f64..0.95, g in 0.2f64..2.0) {
            let cfg = ModelConfig::new(g, 1.0);
            let zb = zb_frac * cfg.mu();
            let dom = cfg.half_width;
            let changes = crate::roots::sign_changes(|z| cfg.fitness_dynamic(z, zb), -dom, dom, 4000);
            let near: Vec<_> = changes.iter().filter(|(a, b)| *a <= zb + 1e-9 && *b >= zb - 1e-9).collect();
            prop_assert_eq!(near.len(), 1);
            prop_assert!(cfg.fitness_dynamic_dz(zb, zb) > 0.0);
            for (a, _) in &changes {
                prop_assert!(*a >= zb - 2.0 * dom / 4000.0);
            }
        }
    }
}
