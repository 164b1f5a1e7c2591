//! Transfer kernels `H` and growth profiles `R`.
//!
//! Built-in kernels evaluate closed-form derivatives up to third order and
//! compute parity from `|x|` so that `H(-x) = -H(x)` holds bit for bit.
//! Tabulated kernels go through a monotone cubic (PCHIP) interpolant; their
//! second and third derivatives are only piecewise linear / piecewise constant
//! and should be treated as low accuracy.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::grid::Domain;
use crate::roots::{bisect, RootError};

/// Bracket searched for the positive root of `H'''`.
pub const Z_H_BRACKET: (f64, f64) = (1e-6, 10.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("x = {x} outside tabulated range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("derivative order {0} not supported (expected 0..=3)")]
    BadOrder(usize),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("invalid kernel table: {0}")]
    Table(String),
    #[error("io error reading kernel table: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Tanh,
    /// `(2/pi) arctan(pi z / 2)`, normalised so that `H'(0) = 1`.
    ScaledArctan,
    /// `(2/pi) arctan(z)`; `H'(0) = 2/pi`, shipped to exercise the hypothesis check.
    RawArctan,
    Tabulated,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelKind::Tanh => "tanh",
            KernelKind::ScaledArctan => "arctan",
            KernelKind::RawArctan => "arctan-raw",
            KernelKind::Tabulated => "table",
        };
        f.write_str(s)
    }
}

#[derive(Debug)]
enum Family {
    Tanh,
    /// `(2/pi) arctan(a z)`.
    Arctan { a: f64 },
    Table(MonotoneCubic),
}

#[derive(Debug)]
struct KernelInner {
    kind: KernelKind,
    family: Family,
    z_h: OnceLock<Result<f64, KernelError>>,
}

/// The odd saturating transfer flux `H`.
#[derive(Debug, Clone)]
pub struct TransferKernel {
    inner: Arc<KernelInner>,
}

impl TransferKernel {
    fn new(kind: KernelKind, family: Family) -> Self {
        TransferKernel {
            inner: Arc::new(KernelInner {
                kind,
                family,
                z_h: OnceLock::new(),
            }),
        }
    }

    pub fn tanh() -> Self {
        Self::new(KernelKind::Tanh, Family::Tanh)
    }

    pub fn scaled_arctan() -> Self {
        Self::new(KernelKind::ScaledArctan, Family::Arctan { a: PI / 2.0 })
    }

    pub fn raw_arctan() -> Self {
        Self::new(KernelKind::RawArctan, Family::Arctan { a: 1.0 })
    }

    /// Builds a kernel from samples `(x, H(x))`. If every `x >= 0` the table is
    /// extended to negative arguments by oddness (this requires `H(0) = 0`
    /// at the first sample).
    pub fn from_table(xs: Vec<f64>, hs: Vec<f64>) -> Result<Self, KernelError> {
        let table = MonotoneCubic::new(xs, hs)?;
        Ok(Self::new(KernelKind::Tabulated, Family::Table(table)))
    }

    /// Reads a two-column table (comma, tab, semicolon or whitespace separated;
    /// `#` starts a comment).
    pub fn load_table(path: &Path) -> Result<Self, KernelError> {
        let text = std::fs::read_to_string(path).map_err(|e| KernelError::Io(e.to_string()))?;
        let (xs, hs) = parse_two_columns(&text)?;
        Self::from_table(xs, hs)
    }

    /// Resolves a kernel name as used in config files: `tanh`, `arctan`,
    /// `arctan-raw`, or `table:PATH`.
    pub fn by_name(name: &str) -> Result<Self, KernelError> {
        match name {
            "tanh" => Ok(Self::tanh()),
            "arctan" | "scaled-arctan" => Ok(Self::scaled_arctan()),
            "arctan-raw" | "raw-arctan" => Ok(Self::raw_arctan()),
            other => match other.strip_prefix("table:") {
                Some(path) => Self::load_table(Path::new(path)),
                None => Err(KernelError::Table(format!("unknown kernel `{other}`"))),
            },
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.inner.kind
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self.inner.family, Family::Table(_))
    }

    /// Argument range over which the kernel is defined.
    pub fn range(&self) -> (f64, f64) {
        match &self.inner.family {
            Family::Table(t) => t.range(),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `H^(order)(x)` with range checking for tabulated kernels.
    pub fn eval(&self, x: f64, order: usize) -> Result<f64, KernelError> {
        if order > 3 {
            return Err(KernelError::BadOrder(order));
        }
        let (lo, hi) = self.range();
        if x < lo || x > hi {
            return Err(KernelError::OutOfRange { x, lo, hi });
        }
        Ok(self.derivative(x, order))
    }

    #[inline]
    fn derivative(&self, x: f64, order: usize) -> f64 {
        let a = x.abs();
        let s = if x < 0.0 { -1.0 } else { 1.0 };
        // Orders 0 and 2 are odd, orders 1 and 3 even.
        let odd = order.is_multiple_of(2);
        let v = match &self.inner.family {
            Family::Tanh => tanh_derivative(a, order),
            Family::Arctan { a: scale } => arctan_derivative(a, *scale, order),
            Family::Table(t) => return t.eval(x, order),
        };
        if odd {
            s * v
        } else {
            v
        }
    }

    /// `H(x)`; tabulated kernels saturate outside their range.
    #[inline]
    pub fn h(&self, x: f64) -> f64 {
        self.derivative(x, 0)
    }

    #[inline]
    pub fn dh(&self, x: f64) -> f64 {
        self.derivative(x, 1)
    }

    #[inline]
    pub fn d2h(&self, x: f64) -> f64 {
        self.derivative(x, 2)
    }

    #[inline]
    pub fn d3h(&self, x: f64) -> f64 {
        self.derivative(x, 3)
    }

    /// Positive root `z_H` of `H'''`, located by bisection on
    /// [`Z_H_BRACKET`] and cached.
    pub fn z_h(&self) -> Result<f64, KernelError> {
        self.inner
            .z_h
            .get_or_init(|| {
                let (lo, hi) = Z_H_BRACKET;
                if let Family::Table(t) = &self.inner.family {
                    return t.min_curvature_point(lo, hi).ok_or_else(|| {
                        KernelError::Hypothesis(format!("H'' has no interior minimum on ({lo}, {hi})"))
                    });
                }
                bisect(|x| self.d3h(x), lo, hi, 1e-15, 0.0).map_err(|e| match e {
                    RootError::NoBracket { .. } => KernelError::Hypothesis(format!(
                        "H''' has no sign change on ({lo}, {hi})"
                    )),
                    other => KernelError::Hypothesis(other.to_string()),
                })
            })
            .clone()
    }
}

#[inline]
fn tanh_derivative(a: f64, order: usize) -> f64 {
    let t = a.tanh();
    let sech = 1.0 / a.cosh();
    let sech2 = sech * sech;
    match order {
        0 => t,
        1 => sech2,
        2 => -2.0 * t * sech2,
        _ => 2.0 * sech2 * (3.0 * t * t - 1.0),
    }
}

#[inline]
fn arctan_derivative(a: f64, scale: f64, order: usize) -> f64 {
    let c = 2.0 * scale / PI;
    let w = scale * scale * a * a;
    let q = 1.0 + w;
    match order {
        0 => 2.0 / PI * (scale * a).atan(),
        1 => c / q,
        2 => -c * 2.0 * scale * scale * a / (q * q),
        _ => c * 2.0 * scale * scale * (3.0 * w - 1.0) / (q * q * q),
    }
}

fn parse_two_columns(text: &str) -> Result<(Vec<f64>, Vec<f64>), KernelError> {
    let mut xs = Vec::new();
    let mut hs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if cols.len() != 2 {
            return Err(KernelError::Table(format!(
                "line {}: expected 2 columns, found {}",
                lineno + 1,
                cols.len()
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| KernelError::Table(format!("line {}: {e}", lineno + 1)))
        };
        xs.push(parse(cols[0])?);
        hs.push(parse(cols[1])?);
    }
    Ok((xs, hs))
}

/// Fritsch-Carlson monotone cubic Hermite interpolant.
#[derive(Debug)]
struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
    odd_extension: bool,
}

impl MonotoneCubic {
    fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, KernelError> {
        if xs.len() != ys.len() || xs.len() < 4 {
            return Err(KernelError::Table("need at least 4 (x, H) rows".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KernelError::Table("x column must be strictly increasing".into()));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(KernelError::Table("non-finite entry".into()));
        }
        let odd_extension = xs[0] >= 0.0;
        if odd_extension && (xs[0] != 0.0 || ys[0] != 0.0) {
            return Err(KernelError::Table(
                "a one-sided table must start at (0, 0)".into(),
            ));
        }
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut ds = vec![0.0; n];
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                ds[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        // For a one-sided table the mirrored secant at 0 equals delta[0], so
        // the harmonic-mean rule also gives delta[0] there.
        ds[0] = delta[0];
        ds[n - 1] = delta[n - 2];
        Ok(MonotoneCubic {
            xs,
            ys,
            ds,
            odd_extension,
        })
    }

    /// Knot in `(lo, hi)` where `H''` is smallest; `None` when the minimum sits
    /// on the edge of the scanned range.
    fn min_curvature_point(&self, lo: f64, hi: f64) -> Option<f64> {
        let knots: Vec<f64> = self.xs.iter().copied().filter(|&x| x > lo && x < hi).collect();
        let (mut best, mut arg) = (f64::INFINITY, 0);
        for (i, &x) in knots.iter().enumerate() {
            let v = self.eval(x, 2);
            if v < best {
                best = v;
                arg = i;
            }
        }
        (arg > 0 && arg + 1 < knots.len()).then(|| knots[arg])
    }

    fn range(&self) -> (f64, f64) {
        let hi = *self.xs.last().unwrap();
        let lo = if self.odd_extension { -hi } else { self.xs[0] };
        (lo, hi)
    }

    fn eval(&self, x: f64, order: usize) -> f64 {
        if self.odd_extension && x < 0.0 {
            let v = self.eval_direct(-x, order);
            return if order.is_multiple_of(2) { -v } else { v };
        }
        self.eval_direct(x, order)
    }

    fn eval_direct(&self, x: f64, order: usize) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return if order == 0 { self.ys[0] } else if x == self.xs[0] { self.piece(0, x, order) } else { 0.0 };
        }
        if x >= self.xs[n - 1] {
            return if order == 0 { self.ys[n - 1] } else if x == self.xs[n - 1] { self.piece(n - 2, x, order) } else { 0.0 };
        }
        let k = match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        self.piece(k, x, order)
    }

    fn piece(&self, k: usize, x: f64, order: usize) -> f64 {
        let h = self.xs[k + 1] - self.xs[k];
        let delta = (self.ys[k + 1] - self.ys[k]) / h;
        let (d0, d1) = (self.ds[k], self.ds[k + 1]);
        let c2 = (3.0 * delta - 2.0 * d0 - d1) / h;
        let c3 = (d0 + d1 - 2.0 * delta) / (h * h);
        let s = x - self.xs[k];
        match order {
            0 => self.ys[k] + s * (d0 + s * (c2 + s * c3)),
            1 => d0 + s * (2.0 * c2 + 3.0 * c3 * s),
            2 => 2.0 * c2 + 6.0 * c3 * s,
            _ => 6.0 * c3,
        }
    }
}

/// Quadratic-envelope constants of the growth hypothesis:
/// `K3 - K4 z^2 <= R <= K1 - K2 z^2`, `-K0_lower <= R'' <= -K0_upper`,
/// `|R'''| <= K5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k0_lower: f64,
    pub k0_upper: f64,
}

/// User-supplied concave growth rate.
pub struct CustomGrowth {
    pub r: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub dr: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub d2r: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub envelope: EnvelopeConstants,
}

impl fmt::Debug for CustomGrowth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomGrowth")
            .field("envelope", &self.envelope)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum GrowthProfile {
    /// `R(z) = 1 - g z^2`.
    Quadratic { g: f64 },
    Custom(Arc<CustomGrowth>),
}

impl GrowthProfile {
    pub fn quadratic(g: f64) -> Self {
        GrowthProfile::Quadratic { g }
    }

    pub fn custom(growth: CustomGrowth) -> Self {
        GrowthProfile::Custom(Arc::new(growth))
    }

    #[inline]
    pub fn r(&self, z: f64) -> f64 {
        match self {
            GrowthProfile::Quadratic { g } => 1.0 - g * z * z,
            GrowthProfile::Custom(c) => (c.r)(z),
        }
    }

    #[inline]
    pub fn dr(&self, z: f64) -> f64 {
        match self {
            GrowthProfile::Quadratic { g } => -2.0 * g * z,
            GrowthProfile::Custom(c) => (c.dr)(z),
        }
    }

    #[inline]
    pub fn d2r(&self, z: f64) -> f64 {
        match self {
            GrowthProfile::Quadratic { g } => -2.0 * g,
            GrowthProfile::Custom(c) => (c.d2r)(z),
        }
    }

    pub fn envelope(&self) -> EnvelopeConstants {
        match self {
            GrowthProfile::Quadratic { g } => EnvelopeConstants {
                k1: 1.0,
                k2: *g,
                k3: 1.0,
                k4: *g,
                k5: 0.0,
                k0_lower: 2.0 * g,
                k0_upper: 2.0 * g,
            },
            GrowthProfile::Custom(c) => c.envelope,
        }
    }

    /// The curvature `g` for the quadratic family.
    pub fn quadratic_g(&self) -> Option<f64> {
        match self {
            GrowthProfile::Quadratic { g } => Some(*g),
            GrowthProfile::Custom(_) => None,
        }
    }

    /// Point where `R` peaks (root of `R'`).
    pub fn argmax(&self) -> f64 {
        match self {
            GrowthProfile::Quadratic { .. } => 0.0,
            GrowthProfile::Custom(_) => {
                let (lo, hi) = self.expand_bracket(|z| self.dr(z), 0.0);
                bisect(|z| self.dr(z), lo, hi, 1e-14, 0.0).unwrap_or(0.0)
            }
        }
    }

    /// The open interval `D_R` on which `R > 0`, or `None` if `R <= 0`.
    pub fn positive_set(&self) -> Option<(f64, f64)> {
        match self {
            GrowthProfile::Quadratic { g } => {
                let w = 1.0 / g.sqrt();
                Some((-w, w))
            }
            GrowthProfile::Custom(_) => {
                let top = self.argmax();
                if self.r(top) <= 0.0 {
                    return None;
                }
                let f = |z: f64| self.r(z);
                let mut step = 1.0;
                while f(top + step) > 0.0 && step < 1e8 {
                    step *= 2.0;
                }
                let right = bisect(f, top, top + step, 1e-14, 0.0).ok()?;
                let mut step = 1.0;
                while f(top - step) > 0.0 && step < 1e8 {
                    step *= 2.0;
                }
                let left = bisect(f, top - step, top, 1e-14, 0.0).ok()?;
                Some((left, right))
            }
        }
    }

    /// `z_mu` solving `tau + R'(z_mu) = 0`.
    pub fn z_mu(&self, tau: f64) -> f64 {
        match self {
            GrowthProfile::Quadratic { g } => tau / (2.0 * g),
            GrowthProfile::Custom(_) => {
                let f = |z: f64| tau + self.dr(z);
                let (lo, hi) = self.expand_bracket(f, self.argmax());
                bisect(f, lo, hi, 1e-14, 0.0).unwrap_or(f64::NAN)
            }
        }
    }

    fn expand_bracket<F: Fn(f64) -> f64>(&self, f: F, centre: f64) -> (f64, f64) {
        let mut w = 1.0;
        while w < 1e8 {
            let (lo, hi) = (centre - w, centre + w);
            if f(lo).signum() != f(hi).signum() {
                return (lo, hi);
            }
            w *= 2.0;
        }
        (centre - w, centre + w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisCheck {
    pub id: &'static str,
    pub description: &'static str,
    pub passed: bool,
    /// Sample point with the largest violation (or smallest margin).
    pub worst_point: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, id: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.id == id)
    }
}

impl fmt::Display for HypothesisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "pass" } else { "FAIL" };
            write!(f, "{:<14} {status:<4}  {}", c.id, c.description)?;
            if let Some(z) = c.worst_point {
                write!(f, "  [worst at {z:.6}]")?;
            }
            if !c.detail.is_empty() {
                write!(f, "  {}", c.detail)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Tracks the sample with the worst signed margin (negative = violation).
struct Worst {
    margin: f64,
    at: Option<f64>,
}

impl Worst {
    fn new() -> Self {
        Worst {
            margin: f64::INFINITY,
            at: None,
        }
    }

    fn update(&mut self, margin: f64, x: f64) {
        if margin < self.margin || margin.is_nan() {
            self.margin = margin;
            self.at = Some(x);
        }
    }

    fn check(self, id: &'static str, description: &'static str, strict: bool) -> HypothesisCheck {
        let passed = if strict { self.margin > 0.0 } else { self.margin >= 0.0 };
        HypothesisCheck {
            id,
            description,
            passed,
            worst_point: if passed { None } else { self.at },
            detail: if self.margin.is_finite() {
                format!("min margin {:.3e}", self.margin)
            } else {
                String::new()
            },
        }
    }
}

/// Checks the kernel and growth hypotheses on the nodes of `grid`.
/// Failures are reported, never raised.
pub fn verify_hypotheses(
    kernel: &TransferKernel,
    growth: &GrowthProfile,
    grid: &Domain,
    tau: f64,
) -> HypothesisReport {
    let tol = if kernel.is_builtin() { 1e-12 } else { 1e-6 };
    let xs: Vec<f64> = grid.nodes().collect();
    let mut checks = Vec::new();

    let mut odd = Worst::new();
    let mut range = Worst::new();
    let mut mono = Worst::new();
    let mut concave = Worst::new();
    for (i, &x) in xs.iter().enumerate() {
        let hx = kernel.h(x);
        odd.update(tol - (kernel.h(-x) + hx).abs(), x);
        range.update(1.0 - hx.abs(), x);
        if i + 1 < xs.len() {
            let step = kernel.h(xs[i + 1]) - hx;
            // Flat floating-point steps are accepted where H' is still positive.
            let margin = if step > 0.0 { step } else { kernel.dh(x).min(step) };
            mono.update(margin, x);
        }
        if x > 0.0 {
            concave.update(-kernel.d2h(x), x);
        }
    }
    checks.push(odd.check("HT.odd", "H(-x) = -H(x)", false));
    checks.push(range.check("HT.range", "-1 < H < 1", true));
    checks.push(mono.check("HT.monotone", "H strictly increasing", true));

    let h0 = kernel.h(0.0);
    let dh0 = kernel.dh(0.0);
    let origin_ok = h0.abs() <= tol && (dh0 - 1.0).abs() <= tol;
    checks.push(HypothesisCheck {
        id: "HT.origin",
        description: "H(0) = 0 and H'(0) = 1",
        passed: origin_ok,
        worst_point: if origin_ok { None } else { Some(0.0) },
        detail: format!("H(0) = {h0:.3e}, H'(0) = {dh0:.12}"),
    });
    checks.push(concave.check("HT.concave", "H''(x) < 0 for x > 0", true));

    match kernel.z_h() {
        Ok(z_h) => {
            let mut third = Worst::new();
            for &x in xs.iter().filter(|&&x| x > 0.0) {
                let d3 = kernel.d3h(x);
                if x <= z_h {
                    third.update(-d3 + tol, x);
                } else {
                    third.update(d3, x);
                }
            }
            let mut c = third.check(
                "HT.third",
                "H''' <= 0 on (0, z_H], H''' > 0 beyond",
                true,
            );
            c.detail = format!("z_H = {z_h:.10}; {}", c.detail);
            checks.push(c);
        }
        Err(e) => checks.push(HypothesisCheck {
            id: "HT.third",
            description: "H''' <= 0 on (0, z_H], H''' > 0 beyond",
            passed: false,
            worst_point: None,
            detail: e.to_string(),
        }),
    }

    let env = growth.envelope();
    let mut envelope = Worst::new();
    let mut curvature = Worst::new();
    for &z in &xs {
        let r = growth.r(z);
        let scale = 1.0 + r.abs();
        let margin = (r - (env.k3 - env.k4 * z * z)).min(env.k1 - env.k2 * z * z - r);
        envelope.update(margin + 1e-12 * scale, z);
        let r2 = growth.d2r(z);
        curvature.update((r2 + env.k0_lower).min(-env.k0_upper - r2) + 1e-12, z);
    }
    checks.push(envelope.check("HR1.envelope", "K3 - K4 z^2 <= R <= K1 - K2 z^2", false));
    checks.push(curvature.check("HR1.curvature", "-K0_lower <= R'' <= -K0_upper", false));

    let z_mu = growth.z_mu(tau);
    let (hr2_ok, detail) = match growth.positive_set() {
        Some((lo, hi)) => (
            z_mu > lo && z_mu < hi,
            format!("z_mu = {z_mu:.6}, D_R = ({lo:.6}, {hi:.6})"),
        ),
        None => (false, "R <= 0 everywhere".to_string()),
    };
    checks.push(HypothesisCheck {
        id: "HR2",
        description: "z_mu in D_R",
        passed: hr2_ok,
        worst_point: if hr2_ok { None } else { Some(z_mu) },
        detail,
    });

    HypothesisReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn builtins() -> Vec<TransferKernel> {
        vec![
            TransferKernel::tanh(),
            TransferKernel::scaled_arctan(),
            TransferKernel::raw_arctan(),
        ]
    }

    #[test]
    fn tanh_reference_values() {
        let k = TransferKernel::tanh();
        assert_eq!(k.eval(0.0, 0).unwrap(), 0.0);
        assert_eq!(k.eval(0.0, 1).unwrap(), 1.0);
        assert_relative_eq!(k.eval(1.0, 0).unwrap(), 0.761_594_155_955_764_9, epsilon = 1e-15);
    }

    #[test]
    fn bad_order_rejected() {
        assert_eq!(
            TransferKernel::tanh().eval(0.3, 4),
            Err(KernelError::BadOrder(4))
        );
    }

    #[test]
    fn parity_is_exact_for_builtins() {
        for k in builtins() {
            for i in 0..200 {
                let x = 0.037 * i as f64 + 1e-3;
                for order in 0..4 {
                    let sign = if order % 2 == 0 { -1.0 } else { 1.0 };
                    assert_eq!(k.eval(-x, order).unwrap(), sign * k.eval(x, order).unwrap());
                }
            }
        }
    }

    #[test]
    fn derivatives_match_central_differences_at_second_order() {
        for k in builtins() {
            for &x in &[-2.3, -0.7, 0.4, 1.1, 3.0] {
                for order in 0..3 {
                    let err = |h: f64| {
                        let fd = (k.eval(x + h, order).unwrap() - k.eval(x - h, order).unwrap())
                            / (2.0 * h);
                        (fd - k.eval(x, order + 1).unwrap()).abs()
                    };
                    let (e3, e4) = (err(1e-3), err(1e-4));
                    // Skip points where the O(h^2) term happens to vanish.
                    if e3 > 1e-9 {
                        let ratio = e3 / e4;
                        assert!(
                            (80.0..125.0).contains(&ratio),
                            "{:?} order {order} at {x}: ratio {ratio}",
                            k.kind()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn tanh_z_h_is_atanh_inverse_sqrt3() {
        let k = TransferKernel::tanh();
        let z_h = k.z_h().unwrap();
        assert_relative_eq!(z_h, (1.0 / 3f64.sqrt()).atanh(), epsilon = 1e-12);
        assert_relative_eq!(z_h, 0.658_479, epsilon = 1e-6);
        assert!(k.d3h(z_h).abs() < 1e-10);
        // Cached value is returned unchanged.
        assert_eq!(k.z_h().unwrap(), z_h);
    }

    #[test]
    fn scaled_arctan_z_h_matches_closed_form() {
        // H''' changes sign where 3 (pi z / 2)^2 = 1.
        let z_h = TransferKernel::scaled_arctan().z_h().unwrap();
        assert!(z_h.is_finite() && z_h > 0.0);
        assert_relative_eq!(z_h, 2.0 / (PI * 3f64.sqrt()), epsilon = 1e-12);
    }

    #[test]
    fn quadratic_growth_identities() {
        let r = GrowthProfile::quadratic(0.3);
        for &z in &[-2.0, -0.1, 0.0, 1.7] {
            assert_eq!(r.r(z), 1.0 - 0.3 * z * z);
            assert_eq!(r.dr(z), -0.6 * z);
            assert_eq!(r.d2r(z), -0.6);
        }
        let (lo, hi) = r.positive_set().unwrap();
        assert_relative_eq!(hi, 1.0 / 0.3f64.sqrt());
        assert_relative_eq!(lo, -hi);
        assert_relative_eq!(r.z_mu(1.2), 2.0);
    }

    #[test]
    fn custom_growth_matches_quadratic() {
        let g = 0.5;
        let custom = GrowthProfile::custom(CustomGrowth {
            r: Box::new(move |z| 1.0 - g * z * z),
            dr: Box::new(move |z| -2.0 * g * z),
            d2r: Box::new(move |_| -2.0 * g),
            envelope: GrowthProfile::quadratic(g).envelope(),
        });
        let (lo, hi) = custom.positive_set().unwrap();
        assert_relative_eq!(hi, 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(lo, -2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(custom.z_mu(1.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hypotheses_pass_for_tanh_and_unit_quadratic() {
        let grid = Domain::new(-10.0, 10.0, 2001).unwrap();
        let rep = verify_hypotheses(&TransferKernel::tanh(), &GrowthProfile::quadratic(1.0), &grid, 1.0);
        assert!(rep.all_passed(), "{rep}");
        assert!(rep.get("HR2").unwrap().detail.contains("z_mu = 0.500000"));
    }

    #[test]
    fn figure_six_parameters_satisfy_hr2() {
        // 0.5 / (2 * 0.065) = 3.846 < 1 / sqrt(0.065) = 3.922
        let grid = Domain::new(-10.0, 10.0, 1001).unwrap();
        let rep = verify_hypotheses(&TransferKernel::tanh(), &GrowthProfile::quadratic(0.065), &grid, 0.5);
        assert!(rep.get("HR2").unwrap().passed);
        let rep = verify_hypotheses(&TransferKernel::tanh(), &GrowthProfile::quadratic(1.0), &grid, 2.2);
        assert!(!rep.get("HR2").unwrap().passed);
    }

    #[test]
    fn raw_arctan_fails_origin_slope() {
        let grid = Domain::new(-10.0, 10.0, 1001).unwrap();
        let rep = verify_hypotheses(&TransferKernel::raw_arctan(), &GrowthProfile::quadratic(1.0), &grid, 1.0);
        let origin = rep.get("HT.origin").unwrap();
        assert!(!origin.passed);
        assert!(rep.failures().all(|c| c.id == "HT.origin"));
        assert_relative_eq!(TransferKernel::raw_arctan().dh(0.0), 2.0 / PI);
        let rep = verify_hypotheses(&TransferKernel::scaled_arctan(), &GrowthProfile::quadratic(1.0), &grid, 1.0);
        assert!(rep.all_passed(), "{rep}");
    }

    #[test]
    fn tabulated_tanh_tracks_closed_form() {
        let xs: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.01).collect();
        let hs: Vec<f64> = xs.iter().map(|x| x.tanh()).collect();
        let k = TransferKernel::from_table(xs, hs).unwrap();
        assert_eq!(k.range(), (-20.0, 20.0));
        for &x in &[-3.3, -0.51, 0.0, 0.25, 1.0, 7.0] {
            assert!((k.h(x) - x.tanh()).abs() < 1e-6);
            assert!((k.dh(x) - TransferKernel::tanh().dh(x)).abs() < 1e-3);
            assert_eq!(k.h(-x), -k.h(x));
        }
        assert!((k.z_h().unwrap() - 0.658_479).abs() < 0.02);
        assert!(matches!(
            k.eval(25.0, 0),
            Err(KernelError::OutOfRange { .. })
        ));
    }

    #[test]
    fn table_parser_handles_delimiters_and_comments() {
        let (xs, hs) = parse_two_columns("# x h\n0,0\n1\t0.5\n2 0.8 # tail\n3;0.9\n\n").unwrap();
        assert_eq!(xs, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(hs, vec![0.0, 0.5, 0.8, 0.9]);
        assert!(parse_two_columns("0 1 2\n").is_err());
    }

    #[test]
    fn table_must_increase() {
        let err = TransferKernel::from_table(vec![0.0, 1.0, 1.0, 2.0], vec![0.0, 0.5, 0.6, 0.7]);
        assert!(matches!(err, Err(KernelError::Table(_))));
    }
}
