//! Marchenko kernels, the discretized Marchenko systems and field reconstruction.
//!
//! Stations sit at x_m = m dy / 2 and the kernel grid at z_k = k dy, so the
//! kernel argument x + y = 2x + (i + j) dy is always an exact node. Right of the
//! soliton center the right system is solved directly. Left of it the same solver
//! runs on the data of the reflected potential -q*(-x), whose right system at -x
//! carries the left kernel. Both are solved on an overlap band as a cross-check.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::GpistError;
use crate::evolution::{evolve, EvolvedData};
use crate::jost::{DiscreteData, ScatteringData};
use crate::linalg::LuSolver;
use crate::profile::FieldProfile;
use crate::spectral_core::{Grid1D, SheetPoint, I};
use crate::tolerances::Tolerances;
use crate::C64;

/// End corrections of the 6th-order Gregory rule.
pub const GREGORY6: [f64; 5] = [95.0 / 288.0, 317.0 / 240.0, 23.0 / 30.0, 793.0 / 720.0, 157.0 / 160.0];

/// Gregory quadrature weights for `n` equispaced nodes with spacing `h`.
pub fn gregory_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 2 * GREGORY6.len(), "Gregory rule needs at least 10 nodes");
    let mut w = vec![h; n];
    for (k, c) in GREGORY6.iter().enumerate() {
        w[k] *= c;
        w[n - 1 - k] *= c;
    }
    w
}

/// Kernels F1, F2, F2' on z_k = k dz for k in [k0, k0 + len).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    pub dz: f64,
    pub k0: i64,
    /// Continuous (real-axis transform) parts.
    pub f1c: Vec<f64>,
    pub f2c: Vec<f64>,
    pub f2pc: Vec<f64>,
    /// Full kernels including the discrete terms.
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub f2p: Vec<f64>,
    /// Largest imaginary part seen in the transforms.
    pub max_imag: f64,
    pub lambda0: f64,
    pub nu0: f64,
    pub mu0: f64,
}

impl KernelSet {
    pub fn len(&self) -> usize {
        self.f1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f1.is_empty()
    }

    pub fn z(&self, i: usize) -> f64 {
        (self.k0 + i as i64) as f64 * self.dz
    }

    #[inline]
    fn at(&self, k: i64) -> usize {
        (k - self.k0) as usize
    }

    /// Integral over z >= m of |F1c| + |F2c| + |F2pc| by the trapezoid rule.
    pub fn tail_integral(&self, m: f64) -> f64 {
        let mut s = 0.0;
        let n = self.len();
        for i in 0..n {
            let z = self.z(i);
            if z < m {
                continue;
            }
            let w = if i + 1 == n || self.z(i.saturating_sub(1)) < m || i == 0 { 0.5 } else { 1.0 };
            s += w * self.dz * (self.f1c[i].abs() + self.f2c[i].abs() + self.f2pc[i].abs());
        }
        s
    }

    /// Squared L2 norm of the continuous part of F1 over the covered range.
    pub fn f1c_l2_sq(&self) -> f64 {
        self.f1c.iter().map(|v| v * v).sum::<f64>() * self.dz
    }
}

/// Build kernels from data already evolved to the time of interest.
pub fn kernel_set(data: &ScatteringData, k_lo: i64, k_hi: i64, dz: f64, tol_leak: f64) -> Result<KernelSet, GpistError> {
    if k_hi < k_lo || !(dz > 0.0) {
        return Err(GpistError::InvalidInput("empty kernel range".into()));
    }
    let c = &data.continuous;
    let g = &c.grid;
    let cp = c.c(1);
    let cm = c.c(-1);
    // Weighted integrand values for c1, c2 and i zeta c2; zero-weight nodes are skipped.
    let mut nodes: Vec<(f64, C64, C64, C64)> = Vec::with_capacity(g.len());
    for j in 0..g.len() {
        if g.weight[j] == 0.0 {
            continue;
        }
        let z = g.zeta[j];
        let lam = SheetPoint::real(z, 1).lambda.re;
        let w = g.weight[j] / (2.0 * PI);
        let c1 = cp[j] + cm[j];
        let c2 = (cp[j] - cm[j]) / lam;
        nodes.push((z, c1 * w, c2 * w, I * z * c2 * w));
    }
    let d = &data.discrete;
    let (lambda0, nu0, mu0) = (d.lambda0, d.nu0, d.mu0);
    let ks: Vec<i64> = (k_lo..=k_hi).collect();
    let vals: Vec<[C64; 3]> = ks
        .par_iter()
        .map(|&k| {
            let z = k as f64 * dz;
            let mut s = [C64::new(0.0, 0.0); 3];
            for &(zeta, a, b, c) in &nodes {
                let e = C64::from_polar(1.0, zeta * z);
                s[0] += a * e;
                s[1] += b * e;
                s[2] += c * e;
            }
            s
        })
        .collect();
    let max_imag = vals.iter().fold(0.0f64, |m, v| m.max(v[0].im.abs()).max(v[1].im.abs()).max(v[2].im.abs()));
    if max_imag > tol_leak {
        return Err(GpistError::ImaginaryLeak { max_imag, tol: tol_leak });
    }
    let mut out = KernelSet {
        dz,
        k0: k_lo,
        f1c: vals.iter().map(|v| v[0].re).collect(),
        f2c: vals.iter().map(|v| v[1].re).collect(),
        f2pc: vals.iter().map(|v| v[2].re).collect(),
        f1: Vec::new(),
        f2: Vec::new(),
        f2p: Vec::new(),
        max_imag,
        lambda0,
        nu0,
        mu0,
    };
    let n = out.f1c.len();
    out.f1 = (0..n).map(|i| out.f1c[i] - mu0 * lambda0 * (-nu0 * out.z(i)).exp()).collect();
    out.f2 = (0..n).map(|i| out.f2c[i] - mu0 * (-nu0 * out.z(i)).exp()).collect();
    out.f2p = (0..n).map(|i| out.f2pc[i] + mu0 * nu0 * (-nu0 * out.z(i)).exp()).collect();
    Ok(out)
}

/// Right kernels of the evolved data and, when requested, the kernels of the
/// reflected data used for the left reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct MarchenkoKernels {
    pub t: f64,
    pub source: String,
    pub right: KernelSet,
    pub reflected: Option<KernelSet>,
}

impl MarchenkoKernels {
    /// Left kernels on z <= 0 style grids: F~(z) = F^(-z), F~'(z) = -F^'(-z), in increasing z.
    pub fn left_samples(&self) -> Option<Vec<[f64; 4]>> {
        self.reflected.as_ref().map(|r| {
            (0..r.len())
                .rev()
                .map(|i| [-r.z(i), r.f1[i], r.f2[i], -r.f2p[i]])
                .collect()
        })
    }
}

/// Build kernels for an evolved state on [z_min, z_max] with spacing dz; the
/// grid is snapped outward to multiples of dz.
pub fn build_kernels(evolved: &EvolvedData, z_min: f64, z_max: f64, dz: f64, tol: &Tolerances) -> Result<MarchenkoKernels, GpistError> {
    let k_lo = (z_min / dz).floor() as i64;
    let k_hi = (z_max / dz).ceil() as i64;
    let data = evolved.materialize();
    let right = kernel_set(&data, k_lo, k_hi, dz, tol.tol_leak)?;
    let refl = evolved.reflected_at_t();
    let reflected = Some(kernel_set(&refl, -k_hi, -k_lo, dz, tol.tol_leak)?);
    Ok(MarchenkoKernels { t: evolved.t, source: "forward".into(), right, reflected })
}

/// Psi^(1)(x, x + 2p) for the discrete data at the time of interest, as (Psi11, Psi12).
pub fn finite_rank_solution(d: &DiscreteData, x: f64, p_grid: &[f64]) -> Result<(Vec<C64>, Vec<C64>), GpistError> {
    let den = 1.0 - (2.0 * SQRT_2 * d.nu0 / d.mu0) * (2.0 * d.nu0 * x).exp();
    if !(den.abs() > 1e-10) || !den.is_finite() {
        return Err(GpistError::PoleHit { x });
    }
    let nu0 = d.nu0;
    let c12 = C64::new(d.lambda0, -nu0) * (SQRT_2 * nu0);
    let a: Vec<C64> = p_grid.iter().map(|p| C64::new(nu0 * (-2.0 * nu0 * p).exp() / den, 0.0)).collect();
    let b = a.iter().map(|v| c12 * (v.re / nu0)).collect();
    Ok((a, b))
}

/// Discretization and gate settings for the Marchenko solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarchenkoSettings {
    pub p_max: f64,
    pub n_p: usize,
    /// Half-width of the band around the soliton center solved by both systems.
    pub overlap: f64,
    /// Solve the conjugated system at every station for the symmetry and boundary checks.
    pub symmetry_check: bool,
    /// Use the reflected (left) system left of the soliton center; otherwise the
    /// right system is solved everywhere.
    pub use_left: bool,
}

impl Default for MarchenkoSettings {
    fn default() -> Self {
        MarchenkoSettings { p_max: 12.0, n_p: 400, overlap: 1.0, symmetry_check: true, use_left: true }
    }
}

impl MarchenkoSettings {
    pub fn dy(&self) -> f64 {
        2.0 * self.p_max / (self.n_p - 1) as f64
    }

    pub fn p_grid(&self) -> Vec<f64> {
        let dp = self.dy() / 2.0;
        (0..self.n_p).map(|j| j as f64 * dp).collect()
    }

    pub fn validate(&self) -> Result<(), GpistError> {
        if self.n_p < 16 || !(self.p_max > 0.0) {
            return Err(GpistError::InvalidInput(format!("need n_p >= 16 and p_max > 0 (got {}, {})", self.n_p, self.p_max)));
        }
        Ok(())
    }
}

/// Solution of one Marchenko system at one station.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSolution {
    pub m: i64,
    pub x: f64,
    /// First block: Psi11 (or Psi22 for the conjugated system).
    pub first: Vec<C64>,
    /// Second block: Psi12 (or Psi21 for the conjugated system).
    pub second: Vec<C64>,
    pub cond: f64,
    pub residual: f64,
}

/// Real form of one station system.
///
/// The complex system is [[B, P - iQ], [P + iQ, B]] [a; b] = [f; p + iq] with B, P, Q
/// real. With s = Re(a + b), d = Im(a - b), s' = Re(a - b), d' = Im(a + b) it splits into
/// K [s; -d] = [f + p; q] and K [d'; s'] = [q; f - p] for the single real matrix
/// K = [[B + P, Q], [Q, B - P]].
fn assemble(ks: &KernelSet, m: i64, w: &[f64], conjugate: bool) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = w.len();
    let d = 2.0 * SQRT_2;
    let sgn = if conjugate { -1.0 } else { 1.0 };
    let mut mat = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let k = ks.at(m + (i + j) as i64);
            let b = ks.f2[k] * w[j];
            let p = SQRT_2 * ks.f1[k] * w[j];
            let q = sgn * SQRT_2 * ks.f2p[k] * w[j];
            mat[(i, j)] = b + p;
            mat[(i, n + j)] = q;
            mat[(n + i, j)] = q;
            mat[(n + i, n + j)] = b - p;
        }
        mat[(j, j)] += d;
        mat[(n + j, n + j)] += d;
    }
    let mut rhs = DMatrix::<f64>::zeros(2 * n, 2);
    for i in 0..n {
        let k = ks.at(m + i as i64);
        let (f, p, q) = (ks.f2[k], SQRT_2 * ks.f1[k], sgn * SQRT_2 * ks.f2p[k]);
        rhs[(i, 0)] = f + p;
        rhs[(n + i, 0)] = q;
        rhs[(i, 1)] = q;
        rhs[(n + i, 1)] = f - p;
    }
    (mat, rhs)
}

/// Relative residual of the discrete integral equations, recomputed from the kernels.
fn station_residual(ks: &KernelSet, m: i64, w: &[f64], conjugate: bool, a: &[C64], b: &[C64]) -> f64 {
    let n = w.len();
    let sgn = if conjugate { -1.0 } else { 1.0 };
    let mut rmax: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..n {
        let mut r1 = a[i] * (2.0 * SQRT_2);
        let mut r2 = b[i] * (2.0 * SQRT_2);
        for j in 0..n {
            let k = ks.at(m + (i + j) as i64);
            r1 += (a[j] * ks.f2[k] + b[j] * C64::new(ks.f1[k], -sgn * ks.f2p[k]) * SQRT_2) * w[j];
            r2 += (a[j] * C64::new(ks.f1[k], sgn * ks.f2p[k]) * SQRT_2 + b[j] * ks.f2[k]) * w[j];
        }
        let k = ks.at(m + i as i64);
        let rhs1 = C64::new(ks.f2[k], 0.0);
        let rhs2 = C64::new(ks.f1[k], sgn * ks.f2p[k]) * SQRT_2;
        rmax = rmax.max((r1 - rhs1).norm()).max((r2 - rhs2).norm());
        scale = scale.max(rhs1.norm()).max(rhs2.norm());
    }
    if scale == 0.0 {
        rmax
    } else {
        rmax / scale
    }
}

/// Solve the right system (or its conjugate) at station x = m dz / 2.
pub fn solve_station(ks: &KernelSet, m: i64, n_p: usize, conjugate: bool, tol: &Tolerances) -> Result<StationSolution, GpistError> {
    let x = m as f64 * ks.dz / 2.0;
    let last = m + 2 * (n_p as i64 - 1);
    if m < ks.k0 || last >= ks.k0 + ks.len() as i64 {
        return Err(GpistError::InvalidInput(format!("kernels do not cover station x = {x}")));
    }
    let w = gregory_weights(n_p, ks.dz);
    let (mat, rhs) = assemble(ks, m, &w, conjugate);
    let lu = LuSolver::new(mat)?;
    let cond = lu.condition_estimate()?;
    if cond > tol.cond_limit {
        return Err(GpistError::IllConditioned { x, cond, limit: tol.cond_limit });
    }
    let sol = lu.solve_many(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(GpistError::Singular);
    }
    let n = n_p;
    let (first, second): (Vec<C64>, Vec<C64>) = (0..n)
        .map(|i| {
            let (s, d, s2, d2) = (sol[(i, 0)], -sol[(n + i, 0)], sol[(n + i, 1)], sol[(i, 1)]);
            (C64::new(s + s2, d2 + d) / 2.0, C64::new(s - s2, d2 - d) / 2.0)
        })
        .unzip();
    let residual = station_residual(ks, m, &w, conjugate, &first, &second);
    if residual > tol.tol_res {
        return Err(GpistError::ResidualTooLarge { x, residual, tol: tol.tol_res });
    }
    Ok(StationSolution { m, x, first, second, cond, residual })
}

/// Solution of the conjugated system taken as the conjugate of `sol`.
///
/// The kernels are real, so the conjugated matrix is the entrywise conjugate and no
/// second factorization is needed; the candidate is still checked against the
/// conjugated equations assembled independently.
pub fn conjugate_solution(ks: &KernelSet, sol: &StationSolution, n_p: usize, tol: &Tolerances) -> Result<StationSolution, GpistError> {
    let w = gregory_weights(n_p, ks.dz);
    let first: Vec<C64> = sol.first.iter().map(|v| v.conj()).collect();
    let second: Vec<C64> = sol.second.iter().map(|v| v.conj()).collect();
    let residual = station_residual(ks, sol.m, &w, true, &first, &second);
    if residual > tol.tol_res {
        return Err(GpistError::ResidualTooLarge { x: sol.x, residual, tol: tol.tol_res });
    }
    Ok(StationSolution { m: sol.m, x: sol.x, first, second, cond: sol.cond, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum System {
    /// Right system of the data itself; values are Psi(x, x + 2p).
    Right,
    /// Right system of the reflected data at -x; values are Psi^(-x, -x + 2p).
    Reflected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationKernel {
    pub x: f64,
    pub system: System,
    pub psi11: Vec<C64>,
    pub psi12: Vec<C64>,
    pub finite_rank11: Vec<C64>,
    pub finite_rank12: Vec<C64>,
    pub cond: f64,
    pub residual: f64,
}

impl StationKernel {
    /// Discrete L2 norm over y of the remainder Psi - Psi^(1).
    pub fn remainder_norm(&self, dy: f64) -> f64 {
        let w = gregory_weights(self.psi11.len(), dy);
        let mut s = 0.0;
        for j in 0..w.len() {
            s += w[j] * ((self.psi11[j] - self.finite_rank11[j]).norm_sqr() + (self.psi12[j] - self.finite_rank12[j]).norm_sqr());
        }
        s.sqrt()
    }

    /// Largest ratio |Psi(p)| / (max |Psi| e^{-nu0 p / 2}) over p >= p_max / 2.
    pub fn decay_envelope_ratio(&self, p_grid: &[f64], nu0: f64) -> f64 {
        let mag: Vec<f64> = self.psi11.iter().zip(&self.psi12).map(|(a, b)| a.norm().max(b.norm())).collect();
        let top = mag.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            return 0.0;
        }
        let half = p_grid[p_grid.len() - 1] / 2.0;
        p_grid
            .iter()
            .zip(&mag)
            .filter(|(p, _)| **p >= half)
            .map(|(p, m)| m / (top * (-nu0 * p / 2.0).exp()))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelField {
    pub p_grid: Vec<f64>,
    pub stations: Vec<StationKernel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub t: f64,
    pub profile: FieldProfile,
    pub x_center: f64,
    /// max |Psi21(x,x) + (i/2)(q(x) - sqrt 2 / 2)| with Psi21 from the conjugated solve.
    pub boundary_residual: f64,
    /// max |u from Psi12* - u from the conjugated solve|.
    pub symmetry_gap: f64,
    /// max |u_right - u_left| over the overlap band.
    pub left_right_gap: f64,
    pub max_cond: f64,
    pub max_residual: f64,
    pub max_imag: f64,
    pub residual_ode: Option<f64>,
    pub residual_time: Option<f64>,
}

/// Station indices m (x = m dy / 2) on a symmetric window |x| <= half_width with
/// spacing close to `spacing` and always including x = 0.
pub fn station_indices(half_width: f64, spacing: f64, dy: f64) -> Vec<i64> {
    let half = dy / 2.0;
    let stride = ((spacing / half).round() as i64).max(1);
    let kmax = (half_width / (half * stride as f64) + 1e-9).floor() as i64;
    (-kmax..=kmax).map(|k| k * stride).collect()
}

fn u_right(sol: &StationSolution) -> C64 {
    I * sol.second[0].conj() * (2.0 * SQRT_2) + 1.0
}

fn u_left(sol: &StationSolution) -> C64 {
    I * sol.second[0] * (2.0 * SQRT_2) - 1.0
}

/// Reconstruct u(t, x) at stations m (x = m dy/2) from evolved data.
pub fn reconstruct_stations(
    evolved: &EvolvedData,
    stations: &[i64],
    settings: &MarchenkoSettings,
    tol: &Tolerances,
) -> Result<(MarchenkoKernels, KernelField, ReconstructionResult), GpistError> {
    settings.validate()?;
    if stations.is_empty() {
        return Err(GpistError::InvalidInput("no stations".into()));
    }
    let dy = settings.dy();
    let half = dy / 2.0;
    let n = settings.n_p;
    let span = 2 * (n as i64 - 1);
    let xc = evolved.soliton_center();
    let d_t = evolved.discrete_t();
    let refl_data = evolved.reflected_at_t();
    let d_hat = refl_data.discrete;

    let (right_ms, left_ms): (Vec<i64>, Vec<i64>) = if settings.use_left {
        (
            stations.iter().copied().filter(|&m| m as f64 * half >= xc - settings.overlap).collect(),
            stations.iter().copied().filter(|&m| m as f64 * half <= xc + settings.overlap).collect(),
        )
    } else {
        (stations.to_vec(), Vec::new())
    };

    let data_t = evolved.materialize();
    let empty = |d: &DiscreteData| KernelSet {
        dz: dy,
        k0: 0,
        f1c: vec![],
        f2c: vec![],
        f2pc: vec![],
        f1: vec![],
        f2: vec![],
        f2p: vec![],
        max_imag: 0.0,
        lambda0: d.lambda0,
        nu0: d.nu0,
        mu0: d.mu0,
    };
    let right = match (right_ms.iter().min(), right_ms.iter().max()) {
        (Some(&lo), Some(&hi)) => kernel_set(&data_t, lo, hi + span, dy, tol.tol_leak)?,
        _ => empty(&d_t),
    };
    let reflected = match (left_ms.iter().map(|m| -m).min(), left_ms.iter().map(|m| -m).max()) {
        (Some(lo), Some(hi)) => kernel_set(&refl_data, lo, hi + span, dy, tol.tol_leak)?,
        _ => empty(&d_hat),
    };

    // (system, m) jobs; reflected jobs are solved at -m.
    let mut jobs: Vec<(System, i64)> = right_ms.iter().map(|&m| (System::Right, m)).collect();
    jobs.extend(left_ms.iter().map(|&m| (System::Reflected, m)));
    let solved: Result<Vec<(System, i64, StationSolution, Option<StationSolution>)>, GpistError> = jobs
        .par_iter()
        .map(|&(sys, m)| {
            let (ks, mm) = match sys {
                System::Right => (&right, m),
                System::Reflected => (&reflected, -m),
            };
            let s = solve_station(ks, mm, n, false, tol)?;
            let c = if settings.symmetry_check { Some(conjugate_solution(ks, &s, n, tol)?) } else { None };
            Ok((sys, m, s, c))
        })
        .collect();
    let solved = solved?;

    let p_grid = settings.p_grid();
    let mut field = KernelField { p_grid: p_grid.clone(), stations: Vec::with_capacity(solved.len()) };
    let mut u_r = std::collections::HashMap::new();
    let mut u_l = std::collections::HashMap::new();
    let (mut bc, mut sym, mut max_cond, mut max_res) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (sys, m, s, c) in &solved {
        let x = *m as f64 * half;
        let (u, fr_data, xs) = match sys {
            System::Right => (u_right(s), &d_t, x),
            System::Reflected => (u_left(s), &d_hat, -x),
        };
        max_cond = max_cond.max(s.cond);
        max_res = max_res.max(s.residual);
        if let Some(c) = c {
            max_cond = max_cond.max(c.cond);
            max_res = max_res.max(c.residual);
            // Psi21 of the solved system, and q of that system at its station.
            let psi21 = c.second[0];
            let q_sys = match sys {
                System::Right => u / SQRT_2,
                System::Reflected => -u.conj() / SQRT_2,
            };
            bc = bc.max((psi21 + I * 0.5 * (q_sys - C64::new(SQRT_2 / 2.0, 0.0))).norm());
            let u_c = match sys {
                System::Right => I * psi21 * (2.0 * SQRT_2) + 1.0,
                System::Reflected => -(I * psi21 * (2.0 * SQRT_2) + 1.0).conj(),
            };
            sym = sym.max((u_c - u).norm());
        }
        match sys {
            System::Right => u_r.insert(*m, u),
            System::Reflected => u_l.insert(*m, u),
        };
        let (f11, f12) = finite_rank_solution(fr_data, xs, &p_grid)?;
        field.stations.push(StationKernel {
            x,
            system: *sys,
            psi11: s.first.clone(),
            psi12: s.second.clone(),
            finite_rank11: f11,
            finite_rank12: f12,
            cond: s.cond,
            residual: s.residual,
        });
    }
    field.stations.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then((a.system as u8).cmp(&(b.system as u8))));

    let mut lr: f64 = 0.0;
    let mut u = Vec::with_capacity(stations.len());
    for &m in stations {
        let x = m as f64 * half;
        if let (Some(a), Some(b)) = (u_r.get(&m), u_l.get(&m)) {
            lr = lr.max((a - b).norm());
        }
        let v = if x >= xc { u_r.get(&m).or(u_l.get(&m)) } else { u_l.get(&m).or(u_r.get(&m)) };
        u.push(*v.expect("every station is solved by at least one system"));
    }
    let profile = station_profile(stations, half, u)?;
    let max_imag = right.max_imag.max(reflected.max_imag);
    let kernels = MarchenkoKernels { t: evolved.t, source: "forward".into(), right, reflected: Some(reflected) };
    let result = ReconstructionResult {
        t: evolved.t,
        profile,
        x_center: xc,
        boundary_residual: bc,
        symmetry_gap: sym,
        left_right_gap: lr,
        max_cond,
        max_residual: max_res,
        max_imag,
        residual_ode: None,
        residual_time: None,
    };
    Ok((kernels, field, result))
}

fn station_profile(stations: &[i64], half: f64, u: Vec<C64>) -> Result<FieldProfile, GpistError> {
    let n = stations.len();
    let uniform = n >= 2 && stations.windows(2).all(|w| w[1] - w[0] == stations[1] - stations[0]);
    let grid = Grid1D { x_min: stations[0] as f64 * half, x_max: stations[n - 1] as f64 * half, n };
    if uniform && n >= 16 && stations[0] == -stations[n - 1] {
        FieldProfile::new(grid, u)
    } else {
        // Irregular station sets are still returned; validation of the grid is skipped.
        Ok(FieldProfile { grid, u })
    }
}

/// Reconstruct on a symmetric window |x| <= half_width with station spacing near `spacing`.
pub fn reconstruct(
    evolved: &EvolvedData,
    half_width: f64,
    spacing: f64,
    settings: &MarchenkoSettings,
    tol: &Tolerances,
) -> Result<(MarchenkoKernels, KernelField, ReconstructionResult), GpistError> {
    let ms = station_indices(half_width, spacing, settings.dy());
    reconstruct_stations(evolved, &ms, settings, tol)
}

/// h = e^{i zeta x} psi1(x) assembled from the kernel at one station of the right system.
fn jost_from_kernel(sol: &StationSolution, w: &[f64], dy: f64, p: &SheetPoint) -> [C64; 2] {
    let s = (p.lambda - p.zeta) * SQRT_2;
    let mut h1 = C64::new(1.0, 0.0);
    let mut h2 = s;
    for j in 0..w.len() {
        let e = (-I * p.zeta * (j as f64 * dy)).exp() * w[j];
        let (a, b) = (sol.first[j], sol.second[j]);
        h1 -= (a + b * s) * e;
        h2 -= (b.conj() + a.conj() * s) * e;
    }
    [h1, h2]
}

/// Defects of the first-order spectral problem and of the time equation for the
/// Jost solution psi1 assembled from the solved kernels, with the reconstructed q.
///
/// Uses station step `stride * dy / 2` for x differences and `dt` for the time
/// difference, at stations `ms` solved with the right system.
pub fn consistency_residuals(
    data: &ScatteringData,
    t: f64,
    ms: &[i64],
    stride: i64,
    dt: f64,
    zetas: &[(f64, i8)],
    settings: &MarchenkoSettings,
    tol: &Tolerances,
) -> Result<(f64, f64), GpistError> {
    settings.validate()?;
    let n = settings.n_p;
    let dy = settings.dy();
    let half = dy / 2.0;
    let delta = stride as f64 * half;
    let span = 2 * (n as i64 - 1);
    let w = gregory_weights(n, dy);
    let lo = ms.iter().min().copied().unwrap_or(0) - stride;
    let hi = ms.iter().max().copied().unwrap_or(0) + stride + span;
    let mut ks_t = Vec::new();
    for tt in [t - dt, t, t + dt] {
        let ev = evolve(data, tt).materialize();
        ks_t.push(kernel_set(&ev, lo, hi, dy, tol.tol_leak)?);
    }
    let jobs: Vec<(usize, i64)> = ms
        .iter()
        .flat_map(|&m| [(0usize, m), (2, m), (1, m - stride), (1, m), (1, m + stride)])
        .collect();
    let sols: Result<Vec<StationSolution>, GpistError> =
        jobs.par_iter().map(|&(ti, m)| solve_station(&ks_t[ti], m, n, false, tol)).collect();
    let sols = sols?;
    let s3 = 3f64.sqrt();
    let (cw1, cw2) = ((s3 - 1.0).sqrt(), (s3 + 1.0).sqrt());
    let mut r_ode: f64 = 0.0;
    let mut r_time: f64 = 0.0;
    for (k, &m) in ms.iter().enumerate() {
        let base = 5 * k;
        let (sm, sp) = (&sols[base], &sols[base + 1]);
        let (xl, x0, xr) = (&sols[base + 2], &sols[base + 3], &sols[base + 4]);
        let x = m as f64 * half;
        let u0 = u_right(x0);
        let ul = u_right(xl);
        let ur = u_right(xr);
        let ux = (ur - ul) / (2.0 * delta);
        let q = u0 / SQRT_2;
        for &(z, br) in zetas {
            let p = SheetPoint::real(z, br);
            let hl = jost_from_kernel(xl, &w, dy, &p);
            let h0 = jost_from_kernel(x0, &w, dy, &p);
            let hr = jost_from_kernel(xr, &w, dy, &p);
            let dh = [(hr[0] - hl[0]) / (2.0 * delta), (hr[1] - hl[1]) / (2.0 * delta)];
            let a11 = -I * p.lambda + I * p.zeta;
            let a22 = I * p.lambda + I * p.zeta;
            let e1 = dh[0] - (a11 * h0[0] + I * q.conj() * h0[1]);
            let e2 = dh[1] - (-I * q * h0[0] + a22 * h0[1]);
            let scale = h0[0].norm().max(h0[1].norm());
            r_ode = r_ode.max(e1.norm().max(e2.norm()) / scale);

            // chi = diag(sqrt(sqrt3 - 1), sqrt(sqrt3 + 1)) e^{i E x / 2} psi1.
            let e = p.energy();
            let chi = |h: [C64; 2], xx: f64| {
                let f = (I * e * xx / 2.0 - I * p.zeta * xx).exp();
                [h[0] * f * cw1, h[1] * f * cw2]
            };
            let c0 = chi(h0, x);
            let cl = chi(hl, x - delta);
            let cr = chi(hr, x + delta);
            let cm = chi(jost_from_kernel(sm, &w, dy, &p), x);
            let cp = chi(jost_from_kernel(sp, &w, dy, &p), x);
            let uu = u0.norm_sqr() - 1.0;
            let mut worst: f64 = 0.0;
            for r in 0..2 {
                let dtc = (cp[r] - cm[r]) / (2.0 * dt);
                let cxx = (cr[r] - 2.0 * c0[r] + cl[r]) / (delta * delta);
                let v = if r == 0 {
                    c0[0] * (uu / (s3 + 1.0)) + I * ux.conj() * c0[1]
                } else {
                    -I * ux * c0[0] + c0[1] * (uu / (s3 - 1.0))
                };
                let b = -s3 * cxx + v;
                let k = I * s3 * (e / 2.0 - p.zeta) * (e / 2.0 - p.zeta);
                worst = worst.max((dtc + I * b - k * c0[r]).norm());
            }
            r_time = r_time.max(worst / c0[0].norm().max(c0[1].norm()));
        }
    }
    Ok((r_ode, r_time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jost::ContinuousData;
    use crate::spectral_core::{black_soliton, unperturbed_a, unperturbed_kernel, SpectralGrid};

    fn exact_unperturbed(grid: SpectralGrid) -> ScatteringData {
        let n = grid.len();
        let a = |br: i8| grid.zeta.iter().map(|&z| unperturbed_a(&SheetPoint::real(z, br))).collect::<Vec<_>>();
        ScatteringData {
            continuous: ContinuousData {
                a_pos: a(1),
                a_neg: a(-1),
                b_pos: vec![C64::new(0.0, 0.0); n],
                b_neg: vec![C64::new(0.0, 0.0); n],
                grid,
            },
            discrete: DiscreteData::black_soliton(),
        }
    }

    #[test]
    fn gregory_weights_integrate_quintics_exactly() {
        let n = 21;
        let h = 0.1;
        let w = gregory_weights(n, h);
        for k in 0..6 {
            let s: f64 = (0..n).map(|j| w[j] * (j as f64 * h).powi(k)).sum();
            let exact = (2.0f64).powi(k as i32 + 1) / (k as f64 + 1.0);
            assert!((s - exact).abs() < 1e-12, "degree {k}: {s} vs {exact}");
        }
    }

    #[test]
    fn unperturbed_kernels_are_pure_exponential() {
        let grid = SpectralGrid::new(10.0, 256, 1e-3, 4).unwrap();
        let d = exact_unperturbed(grid);
        let ks = kernel_set(&d, -10, 40, 0.1, 1e-6).unwrap();
        for i in 0..ks.len() {
            let z = ks.z(i);
            assert!(ks.f1[i].abs() < 1e-15);
            assert!((ks.f2[i] - 2.0 * (-z / SQRT_2).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_rank_reduces_to_black_soliton_kernel() {
        let d = DiscreteData::black_soliton();
        let ps = [0.0, 0.3, 2.0, 7.5];
        for &x in &[-3.0, 0.0, 1.7] {
            let (a, b) = finite_rank_solution(&d, x, &ps).unwrap();
            for (k, &p) in ps.iter().enumerate() {
                let e = unperturbed_kernel(x, p).unwrap();
                assert!((a[k] - e[0][0]).norm() < 1e-15);
                assert!((b[k] - e[0][1]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn finite_rank_pole_is_reported() {
        let mut d = DiscreteData::black_soliton();
        d.mu0 = 2.0;
        // Denominator 1 - e^{sqrt 2 x} vanishes at x = 0.
        assert!(matches!(finite_rank_solution(&d, 0.0, &[0.0]), Err(GpistError::PoleHit { .. })));
    }

    #[test]
    fn zero_kernels_give_zero_solution() {
        let ks = KernelSet {
            dz: 0.1,
            k0: 0,
            f1c: vec![0.0; 80],
            f2c: vec![0.0; 80],
            f2pc: vec![0.0; 80],
            f1: vec![0.0; 80],
            f2: vec![0.0; 80],
            f2p: vec![0.0; 80],
            max_imag: 0.0,
            lambda0: 0.0,
            nu0: 0.5,
            mu0: 0.0,
        };
        let s = solve_station(&ks, 0, 30, false, &Tolerances::default()).unwrap();
        assert!(s.first.iter().chain(&s.second).all(|v| v.norm() == 0.0));
    }

    #[test]
    fn small_unperturbed_reconstruction() {
        let grid = SpectralGrid::new(10.0, 256, 1e-3, 4).unwrap();
        let d = exact_unperturbed(grid);
        let settings = MarchenkoSettings { n_p: 120, ..Default::default() };
        let (_, field, res) = reconstruct(&evolve(&d, 0.0), 8.0, 1.0, &settings, &Tolerances::default()).unwrap();
        let xs = res.profile.grid.xs();
        for (x, u) in xs.iter().zip(&res.profile.u) {
            assert!((u - black_soliton(*x)).norm() < 1e-5, "x = {x}: {u}");
        }
        assert!(res.symmetry_gap < 1e-10);
        assert!(res.boundary_residual < 1e-5);
        assert!(res.left_right_gap < 1e-5);
        for s in &field.stations {
            let xs = if s.system == System::Right { s.x } else { -s.x };
            let e = unperturbed_kernel(xs, 0.0).unwrap();
            assert!((s.psi12[0] - e[0][1]).norm() < 1e-5);
        }
    }

    #[test]
    fn station_indices_are_symmetric() {
        let ms = station_indices(3.0, 0.5, 0.1);
        assert_eq!(ms.first(), Some(&-60));
        assert_eq!(ms.last(), Some(&60));
        assert!(ms.contains(&0));
        assert!(ms.windows(2).all(|w| w[1] - w[0] == 10));
    }
}
