//! Uniform one-dimensional grids and the field operations shared by every
//! solver: refined argmax, stencil curvature, the exponential-weight measure,
//! the transfer convolution and the upwind Hamiltonians for `p -> p^2`.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::kernels::TransferKernel;
use crate::parallel::Parallelism;

pub const MIN_NODES: usize = 8;

/// Weights below this are skipped in the transfer sum; their contribution is
/// under the f64 resolution of any O(1) quantity.
const NEGLIGIBLE_WEIGHT: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least {MIN_NODES} nodes, got {0}")]
    TooFewNodes(usize),
    #[error("empty or inverted interval [{0}, {1}]")]
    BadInterval(f64, f64),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("z = {z} is within two cells of the boundary")]
    NearBoundary { z: f64 },
    #[error("snapshot parse error: {0}")]
    Parse(String),
}

/// Node layout `z_i = z_min + i * dz`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    z_min: f64,
    z_max: f64,
    n: usize,
}

impl Domain {
    pub fn new(z_min: f64, z_max: f64, n: usize) -> Result<Self, GridError> {
        if n < MIN_NODES {
            return Err(GridError::TooFewNodes(n));
        }
        if !(z_max > z_min) || !z_min.is_finite() || !z_max.is_finite() {
            return Err(GridError::BadInterval(z_min, z_max));
        }
        Ok(Domain { z_min, z_max, n })
    }

    /// `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self, GridError> {
        Self::new(-half_width, half_width, n)
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dz(&self) -> f64 {
        (self.z_max - self.z_min) / (self.n - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.z_max
        } else {
            self.z_min + i as f64 * self.dz()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    /// Index of the node closest to `z` (clamped to the grid).
    pub fn nearest(&self, z: f64) -> usize {
        let r = ((z - self.z_min) / self.dz()).round();
        r.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Index `i` with `z_i <= z < z_{i+1}` (clamped so that `i + 1` is valid).
    pub fn cell(&self, z: f64) -> usize {
        let r = ((z - self.z_min) / self.dz()).floor();
        r.clamp(0.0, (self.n - 2) as f64) as usize
    }

    pub fn contains(&self, z: f64) -> bool {
        z >= self.z_min && z <= self.z_max
    }
}

/// A sampled function on a [`Domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field1D {
    domain: Domain,
    values: Vec<f64>,
}

impl Field1D {
    pub fn new(domain: Domain, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != domain.len() {
            return Err(GridError::Length {
                expected: domain.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Field1D { domain, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(domain: Domain, f: F) -> Result<Self, GridError> {
        Self::new(domain, domain.nodes().map(f).collect())
    }

    /// Skips the finiteness scan; callers guarantee finite values.
    pub(crate) fn from_parts(domain: Domain, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.len());
        Field1D { domain, values }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dz(&self) -> f64 {
        self.domain.dz()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    /// Linear interpolation; clamps outside the grid.
    pub fn interpolate(&self, z: f64) -> f64 {
        if z <= self.domain.z_min {
            return self.values[0];
        }
        if z >= self.domain.z_max {
            return self.values[self.len() - 1];
        }
        let i = self.domain.cell(z);
        let s = (z - self.domain.node(i)) / self.dz();
        self.values[i] * (1.0 - s) + self.values[i + 1] * s
    }

    /// Four-point Lagrange interpolant and its slope; clamps outside the grid.
    pub fn interpolate_cubic(&self, z: f64) -> (f64, f64) {
        let n = self.len();
        let dz = self.dz();
        let z = z.clamp(self.domain.z_min, self.domain.z_max);
        let i = self.domain.cell(z).saturating_sub(1).min(n - 4);
        let x = (z - self.domain.node(i)) / dz;
        let v = &self.values[i..i + 4];
        let (a, b, c, d) = (x, x - 1.0, x - 2.0, x - 3.0);
        let w = [-b * c * d / 6.0, a * c * d / 2.0, -a * b * d / 2.0, a * b * c / 6.0];
        let dw = [
            -(c * d + b * d + b * c) / 6.0,
            (c * d + a * d + a * c) / 2.0,
            -(b * d + a * d + a * b) / 2.0,
            (b * c + a * c + a * b) / 6.0,
        ];
        let val = (0..4).map(|k| w[k] * v[k]).sum();
        let der = (0..4).map(|k| dw[k] * v[k]).sum::<f64>() / dz;
        (val, der)
    }

    /// Centered first difference at node `i` (one-sided at the ends).
    pub fn gradient_at_node(&self, i: usize) -> f64 {
        let n = self.len();
        let dz = self.dz();
        let v = &self.values;
        if i == 0 {
            (v[1] - v[0]) / dz
        } else if i + 1 == n {
            (v[n - 1] - v[n - 2]) / dz
        } else {
            (v[i + 1] - v[i - 1]) / (2.0 * dz)
        }
    }

    /// Largest one-sided slope magnitude.
    pub fn max_abs_gradient(&self) -> f64 {
        let dz = self.dz();
        self.values
            .windows(2)
            .map(|w| ((w[1] - w[0]) / dz).abs())
            .fold(0.0, f64::max)
    }

    /// Trapezoid rule.
    pub fn integrate(&self) -> f64 {
        let n = self.len();
        let inner: f64 = self.values[1..n - 1].iter().sum();
        self.dz() * (inner + 0.5 * (self.values[0] + self.values[n - 1]))
    }

    pub fn map<F: Fn(f64, f64) -> f64>(&self, f: F) -> Field1D {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(self.domain.node(i), v))
            .collect();
        Field1D::from_parts(self.domain, values)
    }

    pub fn shifted(&self, by: f64) -> Field1D {
        Field1D::from_parts(self.domain, self.values.iter().map(|v| v + by).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Argmax {
    pub z: f64,
    pub value: f64,
    pub index: usize,
    /// Maximum attained at more than one node; the leftmost was returned.
    pub flat: bool,
    /// Maximum on the first or last node: the domain is too small.
    pub boundary: bool,
}

/// Grid argmax refined by the vertex of the parabola through the three
/// surrounding samples, clamped to the half-cells around the maximising node.
pub fn argmax_refined(f: &Field1D) -> Argmax {
    let v = f.values();
    let n = v.len();
    let mut index = 0;
    let mut best = v[0];
    let mut ties = 0usize;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > best {
            best = x;
            index = i;
            ties = 0;
        } else if x == best {
            ties += 1;
        }
    }
    let flat = ties > 0;
    let boundary = index == 0 || index + 1 == n;
    let z0 = f.domain().node(index);
    if boundary || flat {
        return Argmax {
            z: z0,
            value: best,
            index,
            flat,
            boundary,
        };
    }
    let (a, b, c) = (v[index - 1], v[index], v[index + 1]);
    let curv = a - 2.0 * b + c;
    if curv >= 0.0 {
        return Argmax {
            z: z0,
            value: best,
            index,
            flat,
            boundary,
        };
    }
    let offset = (0.5 * (a - c) / curv).clamp(-0.5, 0.5);
    let value = b - 0.125 * (a - c) * (a - c) / curv;
    Argmax {
        z: z0 + offset * f.dz(),
        value: value.max(b),
        index,
        flat,
        boundary,
    }
}

/// Five-point second difference at the node nearest to `z`.
pub fn second_derivative_at(f: &Field1D, z: f64) -> Result<f64, GridError> {
    let dom = f.domain();
    let dz = dom.dz();
    if z < dom.z_min() + 2.0 * dz || z > dom.z_max() - 2.0 * dz {
        return Err(GridError::NearBoundary { z });
    }
    let i = dom.nearest(z).clamp(2, dom.len() - 3);
    Ok(five_point(f.values(), i, dz))
}

#[inline]
pub(crate) fn five_point(v: &[f64], i: usize, dz: f64) -> f64 {
    (-v[i + 2] + 16.0 * v[i + 1] - 30.0 * v[i] + 16.0 * v[i - 1] - v[i - 2]) / (12.0 * dz * dz)
}

/// Mass `rho = int exp(u / eps)` together with the normalised trapezoid
/// integrand.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    pub log_rho: f64,
    pub rho: f64,
    /// Probability weights `p_i` (sum to one).
    pub weights: Vec<f64>,
    pub max_u: f64,
}

/// Computes `rho` in shifted log space so that no scale of `u` overflows.
pub fn softmax_measure(u: &Field1D, eps: f64) -> Measure {
    assert!(eps > 0.0, "eps must be positive");
    let v = u.values();
    let n = v.len();
    let dz = u.dz();
    let max_u = u.max();
    let mut weights: Vec<f64> = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
            w * ((x - max_u) / eps).exp()
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    let log_rho = max_u / eps + (dz * sum).ln();
    Measure {
        log_rho,
        rho: log_rho.exp(),
        weights,
        max_u,
    }
}

/// `Phi(z_j) = tau * sum_i p_i H(z_j - y_i)` by direct summation over the
/// atoms with non-negligible weight.
pub fn transfer_field(
    weights: &[f64],
    domain: &Domain,
    kernel: &TransferKernel,
    tau: f64,
    par: Parallelism,
) -> Field1D {
    assert_eq!(weights.len(), domain.len());
    let atoms: Vec<(f64, f64)> = weights
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > NEGLIGIBLE_WEIGHT)
        .map(|(i, &p)| (domain.node(i), p))
        .collect();
    let mut out = vec![0.0; domain.len()];
    par.fill(&mut out, |j| {
        let z = domain.node(j);
        let s: f64 = atoms.iter().map(|&(y, p)| p * kernel.h(z - y)).sum();
        tau * s
    });
    Field1D::from_parts(*domain, out)
}

/// `H` sampled at every lattice offset `k dz`, `|k| < n`, so that the transfer
/// sum on the grid becomes a discrete convolution. Odd by construction.
#[derive(Debug, Clone)]
pub struct LatticeKernel {
    domain: Domain,
    /// `table[k + n - 1] = H(k dz)`.
    table: Vec<f64>,
}

impl LatticeKernel {
    pub fn new(domain: &Domain, kernel: &TransferKernel) -> Self {
        let n = domain.len();
        let dz = domain.dz();
        let mut table = vec![0.0; 2 * n - 1];
        for k in 1..n {
            let h = kernel.h(k as f64 * dz);
            table[n - 1 + k] = h;
            table[n - 1 - k] = -h;
        }
        LatticeKernel { domain: *domain, table }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Same sum as [`transfer_field`] with lattice-exact offsets.
    pub fn apply(&self, weights: &[f64], tau: f64, par: Parallelism) -> Field1D {
        let n = self.domain.len();
        assert_eq!(weights.len(), n);
        let atoms: Vec<(usize, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > NEGLIGIBLE_WEIGHT)
            .map(|(i, &p)| (i, p))
            .collect();
        let mut out = vec![0.0; n];
        par.fill(&mut out, |j| {
            let base = j + n - 1;
            let s: f64 = atoms.iter().map(|&(i, p)| p * self.table[base - i]).sum();
            tau * s
        });
        Field1D::from_parts(self.domain, out)
    }
}

/// `sum_i p_i Phi(y_i)`; vanishes for an odd kernel.
pub fn zero_sum_residual(weights: &[f64], phi: &Field1D) -> f64 {
    weights
        .iter()
        .zip(phi.values())
        .map(|(p, f)| p * f)
        .sum()
}

/// Godunov flux for `+p^2` from backward/forward slopes.
#[inline]
pub fn godunov_square(p_minus: f64, p_plus: f64) -> f64 {
    let a = p_minus.min(0.0);
    let b = p_plus.max(0.0);
    (a * a).max(b * b)
}

/// Numerical Hamiltonian used for the `|u_z|^2` term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HamiltonianScheme {
    /// First-order one-sided differences.
    Upwind1,
    /// Second-order ENO one-sided differences (first order at the two end
    /// nodes on each side).
    #[default]
    Eno2,
}

impl HamiltonianScheme {
    pub fn name(&self) -> &'static str {
        match self {
            HamiltonianScheme::Upwind1 => "upwind1",
            HamiltonianScheme::Eno2 => "eno2",
        }
    }

    /// Writes the numerical `|u_z|^2` at every node into `out`.
    pub fn apply(&self, u: &[f64], dz: f64, out: &mut [f64]) {
        match self {
            HamiltonianScheme::Upwind1 => upwind1_into(u, dz, out),
            HamiltonianScheme::Eno2 => eno2_into(u, dz, out),
        }
    }
}

fn upwind1_into(u: &[f64], dz: f64, out: &mut [f64]) {
    let n = u.len();
    for i in 0..n {
        let back = if i > 0 { Some((u[i] - u[i - 1]) / dz) } else { None };
        let fwd = if i + 1 < n { Some((u[i + 1] - u[i]) / dz) } else { None };
        let pm = back.or(fwd).unwrap();
        let pp = fwd.or(back).unwrap();
        out[i] = godunov_square(pm, pp);
    }
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

fn eno2_into(u: &[f64], dz: f64, out: &mut [f64]) {
    let n = u.len();
    // q[i] = (u[i+1] - 2u[i] + u[i-1]) / dz, defined for 1 <= i <= n-2.
    let q = |i: usize| (u[i + 1] - 2.0 * u[i] + u[i - 1]) / dz;
    for i in 0..n {
        let back = if i >= 2 && i + 1 < n {
            Some((u[i] - u[i - 1]) / dz + 0.5 * minmod(q(i - 1), q(i)))
        } else if i >= 1 {
            Some((u[i] - u[i - 1]) / dz)
        } else {
            None
        };
        let fwd = if i >= 1 && i + 2 < n {
            Some((u[i + 1] - u[i]) / dz - 0.5 * minmod(q(i), q(i + 1)))
        } else if i + 1 < n {
            Some((u[i + 1] - u[i]) / dz)
        } else {
            None
        };
        let pm = back.or(fwd).unwrap();
        let pp = fwd.or(back).unwrap();
        out[i] = godunov_square(pm, pp);
    }
}

/// First-order monotone Godunov approximation of `|u_z|^2`.
pub fn upwind_hamiltonian(u: &Field1D) -> Field1D {
    let mut out = vec![0.0; u.len()];
    upwind1_into(u.values(), u.dz(), &mut out);
    Field1D::from_parts(*u.domain(), out)
}

/// Second-order ENO variant of [`upwind_hamiltonian`]; exact on quadratics.
pub fn eno2_hamiltonian(u: &Field1D) -> Field1D {
    let mut out = vec![0.0; u.len()];
    eno2_into(u.values(), u.dz(), &mut out);
    Field1D::from_parts(*u.domain(), out)
}

/// Header carried by snapshot files.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub t: f64,
    pub eps: Option<f64>,
    pub config_hash: String,
}

/// Two-column text: comment header with `t`, `epsilon` and `config_hash`,
/// then a `z,value` header row and one row per node.
pub fn format_snapshot(field: &Field1D, header: &SnapshotHeader) -> String {
    let mut s = String::with_capacity(32 * field.len() + 128);
    let _ = writeln!(s, "# t={:.12e}", header.t);
    match header.eps {
        Some(e) => {
            let _ = writeln!(s, "# epsilon={e:.6e}");
        }
        None => s.push_str("# epsilon=0\n"),
    }
    let _ = writeln!(s, "# config_hash={}", header.config_hash);
    s.push_str("z,value\n");
    for (z, v) in field.domain().nodes().zip(field.values()) {
        let _ = writeln!(s, "{z:.12e},{v:.15e}");
    }
    s
}

pub fn parse_snapshot(text: &str) -> Result<(SnapshotHeader, Vec<(f64, f64)>), GridError> {
    let mut header = SnapshotHeader {
        t: f64::NAN,
        eps: None,
        config_hash: String::new(),
    };
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(meta) = line.strip_prefix('#') {
            let meta = meta.trim();
            if let Some((k, v)) = meta.split_once('=') {
                match k.trim() {
                    "t" => header.t = v.trim().parse().map_err(|e| GridError::Parse(format!("{e}")))?,
                    "epsilon" => {
                        let e: f64 = v.trim().parse().map_err(|e| GridError::Parse(format!("{e}")))?;
                        header.eps = (e > 0.0).then_some(e);
                    }
                    "config_hash" => header.config_hash = v.trim().to_string(),
                    _ => {}
                }
            }
            continue;
        }
        if line.starts_with("z,") || line.trim().is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| GridError::Parse(format!("bad row `{line}`")))?;
        let z = a.trim().parse().map_err(|e| GridError::Parse(format!("{e}")))?;
        let v = b.trim().parse().map_err(|e| GridError::Parse(format!("{e}")))?;
        rows.push((z, v));
    }
    Ok((header, rows))
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}
