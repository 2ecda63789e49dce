//! Jost solutions, transition coefficients and discrete scattering data.
//!
//! Solutions are integrated inward from their normalization end in the
//! renormalized variable `w = exp(s i zeta x) v`, which removes the oscillation
//! of the free states. Each profile cell is crossed with two 4th-order Magnus
//! steps; the potential at the quarter points comes from 6-point interpolation.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::GpistError;
use crate::profile::FieldProfile;
use crate::spectral_core::{lift, wronskian2, wronskian_constant, Grid1D, JostKind, SheetPoint, SpectralGrid, I};
use crate::tolerances::Tolerances;
use crate::C64;

type M2 = [[C64; 2]; 2];

/// Potential q = u / sqrt 2 sampled at quarter-cell points.
#[derive(Debug, Clone)]
pub struct Potential {
    pub grid: Grid1D,
    qq: Vec<C64>,
}

impl Potential {
    pub fn new(profile: &FieldProfile) -> Potential {
        Potential { grid: profile.grid, qq: profile.q_quarter() }
    }
}

#[inline]
fn expm_step(d1: C64, d2: C64, q0: C64, qm: C64, q1: C64, hh: f64) -> M2 {
    let o12 = |q: C64| I * q.conj();
    let o21 = |q: C64| -I * q;
    let (a12, am12, b12) = (o12(q0), o12(qm), o12(q1));
    let (a21, am21, b21) = (o21(q0), o21(qm), o21(q1));
    // Omega = hh/6 (A0 + 4 Am + A1) + hh^2/12 [A1, A0]
    let c = hh * hh / 12.0;
    let delta = b12 * a21 - a12 * b21;
    let om11 = d1 * hh + delta * c;
    let om22 = d2 * hh - delta * c;
    let om12 = (a12 + am12 * 4.0 + b12) * (hh / 6.0) + (d1 - d2) * (a12 - b12) * c;
    let om21 = (a21 + am21 * 4.0 + b21) * (hh / 6.0) + (d2 - d1) * (a21 - b21) * c;
    let half_tr = (om11 + om22) * 0.5;
    let n11 = (om11 - om22) * 0.5;
    let s2 = n11 * n11 + om12 * om21;
    let (ch, shc) = if s2.norm() < 1e-6 {
        (
            1.0 + s2 * (0.5 + s2 * (1.0 / 24.0 + s2 / 720.0)),
            1.0 + s2 * (1.0 / 6.0 + s2 * (1.0 / 120.0 + s2 / 5040.0)),
        )
    } else {
        let s = s2.sqrt();
        (s.cosh(), s.sinh() / s)
    };
    let e = half_tr.exp();
    [
        [e * (ch + shc * n11), e * shc * om12],
        [e * shc * om21, e * (ch - shc * n11)],
    ]
}

#[inline]
fn apply(m: &M2, v: [C64; 2]) -> [C64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn check_growth(p: &SheetPoint, kind: JostKind) -> Result<(), GpistError> {
    let im = p.zeta.im;
    let bad = if im > 0.0 {
        matches!(kind, JostKind::Psi1 | JostKind::Phi2)
    } else if im < 0.0 {
        matches!(kind, JostKind::Psi2 | JostKind::Phi1)
    } else {
        false
    };
    if bad {
        Err(GpistError::GapGrowth { which: kind.name() })
    } else {
        Ok(())
    }
}

/// Integrate the renormalized solution from its normalization end to node `stop`,
/// optionally recording every node visited (ordered by node index).
fn integrate(pot: &Potential, p: &SheetPoint, kind: JostKind, stop: usize, record: bool) -> (Vec<[C64; 2]>, [C64; 2]) {
    let n = pot.grid.n;
    let h = pot.grid.h();
    let s = kind.renorm_sign();
    let shift = I * p.zeta * s;
    let d1 = -I * p.lambda + shift;
    let d2 = I * p.lambda + shift;
    let mut w = kind.asymptote(p);
    let mut rec = if record { vec![[C64::new(0.0, 0.0); 2]; n] } else { Vec::new() };
    let qq = &pot.qq;
    if kind.from_right() {
        let hh = -0.5 * h;
        let mut i = n - 1;
        if record {
            rec[i] = w;
        }
        while i > stop {
            let k = 4 * i;
            let m1 = expm_step(d1, d2, qq[k], qq[k - 1], qq[k - 2], hh);
            w = apply(&m1, w);
            let m2 = expm_step(d1, d2, qq[k - 2], qq[k - 3], qq[k - 4], hh);
            w = apply(&m2, w);
            i -= 1;
            if record {
                rec[i] = w;
            }
        }
    } else {
        let hh = 0.5 * h;
        let mut i = 0;
        if record {
            rec[i] = w;
        }
        while i < stop {
            let k = 4 * i;
            let m1 = expm_step(d1, d2, qq[k], qq[k + 1], qq[k + 2], hh);
            w = apply(&m1, w);
            let m2 = expm_step(d1, d2, qq[k + 2], qq[k + 3], qq[k + 4], hh);
            w = apply(&m2, w);
            i += 1;
            if record {
                rec[i] = w;
            }
        }
    }
    (rec, w)
}

/// Renormalized value of a Jost solution at x = 0 (equal to the raw value there).
pub fn jost_at_origin(pot: &Potential, p: &SheetPoint, kind: JostKind) -> Result<[C64; 2], GpistError> {
    check_growth(p, kind)?;
    Ok(integrate(pot, p, kind, pot.grid.origin_index(), false).1)
}

/// A Jost solution on the whole grid, stored in renormalized form.
#[derive(Debug, Clone)]
pub struct JostPair {
    pub point: SheetPoint,
    pub kind: JostKind,
    pub grid: Grid1D,
    /// exp(s i zeta x) v(x) at every node.
    pub values: Vec<[C64; 2]>,
    pub renormalized: bool,
}

impl JostPair {
    pub fn raw(&self, i: usize) -> [C64; 2] {
        let x = self.grid.x(i);
        let f = (-I * self.point.zeta * (self.kind.renorm_sign() * x)).exp();
        [self.values[i][0] * f, self.values[i][1] * f]
    }

    /// Defect of the first-order system at interior nodes by centered differences.
    pub fn ode_residual(&self, profile: &FieldProfile) -> f64 {
        let h = self.grid.h();
        let q = profile.q();
        let lam = self.point.lambda;
        let mut r: f64 = 0.0;
        for i in 1..self.grid.n - 1 {
            let v = self.raw(i);
            let vp = self.raw(i + 1);
            let vm = self.raw(i - 1);
            let d0 = (vp[0] - vm[0]) / (2.0 * h);
            let d1 = (vp[1] - vm[1]) / (2.0 * h);
            let e0 = I * d0 + q[i].conj() * v[1] - lam * v[0];
            let e1 = -I * d1 + q[i] * v[0] - lam * v[1];
            let scale = v[0].norm().max(v[1].norm()).max(1e-300);
            r = r.max(e0.norm().max(e1.norm()) / scale);
        }
        r
    }

    /// Apply the involution v -> (v2*, v1*) to the raw solution, returning raw samples.
    pub fn involution_raw(&self) -> Vec<[C64; 2]> {
        (0..self.grid.n)
            .map(|i| {
                let v = self.raw(i);
                [v[1].conj(), v[0].conj()]
            })
            .collect()
    }
}

/// Jost solution on the full grid of `profile`.
pub fn jost_solve(profile: &FieldProfile, point: SheetPoint, kind: JostKind) -> Result<JostPair, GpistError> {
    check_growth(&point, kind)?;
    let pot = Potential::new(profile);
    let stop = if kind.from_right() { 0 } else { profile.grid.n - 1 };
    let (values, _) = integrate(&pot, &point, kind, stop, true);
    Ok(JostPair { point, kind, grid: profile.grid, values, renormalized: true })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WronskianStats {
    pub mean: C64,
    pub max_deviation: f64,
}

/// Mean over the grid of v1 w2 - v2 w1, with its largest deviation from the mean.
pub fn wronskian(v: &JostPair, w: &JostPair) -> Result<WronskianStats, GpistError> {
    if !v.grid.same_as(&w.grid) || (v.point.lambda - w.point.lambda).norm() > 1e-14 || (v.point.zeta - w.point.zeta).norm() > 1e-14 {
        return Err(GpistError::MismatchedGrids);
    }
    let vals: Vec<C64> = (0..v.grid.n).map(|i| wronskian2(&v.raw(i), &w.raw(i))).collect();
    let mean = vals.iter().sum::<C64>() / vals.len() as f64;
    let max_deviation = vals.iter().fold(0.0f64, |m, x| m.max((x - mean).norm()));
    Ok(WronskianStats { mean, max_deviation })
}

/// (a, b) at a real-spectrum point.
pub fn transition_at(pot: &Potential, p: &SheetPoint) -> Result<(C64, C64), GpistError> {
    let phi1 = jost_at_origin(pot, p, JostKind::Phi1)?;
    let psi1 = jost_at_origin(pot, p, JostKind::Psi1)?;
    let psi2 = jost_at_origin(pot, p, JostKind::Psi2)?;
    let d = wronskian_constant(p);
    Ok((wronskian2(&phi1, &psi2) / d, -wronskian2(&phi1, &psi1) / d))
}

/// a at a point with Im zeta >= 0 (gap or upper sheet).
pub fn a_upper(pot: &Potential, p: &SheetPoint) -> Result<C64, GpistError> {
    let phi1 = jost_at_origin(pot, p, JostKind::Phi1)?;
    let psi2 = jost_at_origin(pot, p, JostKind::Psi2)?;
    Ok(wronskian2(&phi1, &psi2) / wronskian_constant(p))
}

/// a and b sampled on both real branches of a spectral grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousData {
    pub grid: SpectralGrid,
    pub a_pos: Vec<C64>,
    pub b_pos: Vec<C64>,
    pub a_neg: Vec<C64>,
    pub b_neg: Vec<C64>,
}

impl ContinuousData {
    pub fn branch(&self, branch: i8) -> (&[C64], &[C64]) {
        if branch >= 0 {
            (&self.a_pos, &self.b_pos)
        } else {
            (&self.a_neg, &self.b_neg)
        }
    }

    /// max | |a|^2 - |b|^2 - 1 | over both branches.
    pub fn normalization_defect(&self) -> f64 {
        let f = |a: &[C64], b: &[C64]| a.iter().zip(b).fold(0.0f64, |m, (a, b)| m.max((a.norm_sqr() - b.norm_sqr() - 1.0).abs()));
        f(&self.a_pos, &self.b_pos).max(f(&self.a_neg, &self.b_neg))
    }

    /// max over nodes of |a(-zeta) + a(zeta)*| and |b(-zeta) + b(zeta)*| on each branch.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.grid.len();
        let mut m: f64 = 0.0;
        for (a, b) in [(&self.a_pos, &self.b_pos), (&self.a_neg, &self.b_neg)] {
            for i in 0..n {
                let j = self.grid.mirror(i);
                m = m.max((a[j] + a[i].conj()).norm()).max((b[j] + b[i].conj()).norm());
            }
        }
        m
    }

    /// Reflection coefficient c = b/a on a branch.
    pub fn c(&self, branch: i8) -> Vec<C64> {
        let (a, b) = self.branch(branch);
        a.iter().zip(b).map(|(a, b)| b / a).collect()
    }
}

/// a and b on both branches of `grid`, computed in parallel over nodes.
pub fn transition_coefficients(profile: &FieldProfile, grid: &SpectralGrid) -> Result<ContinuousData, GpistError> {
    let pot = Potential::new(profile);
    let tasks: Vec<(i8, f64)> = [1i8, -1].iter().flat_map(|&br| grid.zeta.iter().map(move |&z| (br, z))).collect();
    let out: Result<Vec<(C64, C64)>, GpistError> =
        tasks.par_iter().map(|&(br, z)| transition_at(&pot, &SheetPoint::real(z, br))).collect();
    let out = out?;
    let n = grid.len();
    let (pos, neg) = out.split_at(n);
    Ok(ContinuousData {
        grid: grid.clone(),
        a_pos: pos.iter().map(|v| v.0).collect(),
        b_pos: pos.iter().map(|v| v.1).collect(),
        a_neg: neg.iter().map(|v| v.0).collect(),
        b_neg: neg.iter().map(|v| v.1).collect(),
    })
}

/// The single gap eigenvalue and its norming data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteData {
    pub lambda0: f64,
    pub nu0: f64,
    pub b0: C64,
    /// a'(lambda0) by centered difference along the gap.
    pub a_prime0: C64,
    /// a'(lambda0) from -i b0 int |psi2|^2 dx / (2 sqrt 2 zeta0).
    pub a_prime0_integral: C64,
    /// Re(b0 / (nu0 a'(lambda0))).
    pub mu0: f64,
    pub mu0_imag: f64,
    /// |a(lambda0)| at the accepted minimum.
    pub min_abs_a: f64,
}

impl DiscreteData {
    pub fn zeta0(&self) -> C64 {
        C64::new(0.0, self.nu0)
    }

    /// Data of the reflected potential -q*(-x): same eigenvalue and a', b0 -> -1/b0.
    pub fn reflected(&self) -> DiscreteData {
        let b0 = -1.0 / self.b0;
        let m = b0 / (self.a_prime0 * self.nu0);
        DiscreteData { b0, mu0: m.re, mu0_imag: m.im, ..*self }
    }

    /// Data for the exact black soliton.
    pub fn black_soliton() -> DiscreteData {
        let a_prime0 = C64::new(0.0, -FRAC_1_SQRT_2);
        DiscreteData {
            lambda0: 0.0,
            nu0: FRAC_1_SQRT_2,
            b0: I,
            a_prime0,
            a_prime0_integral: a_prime0,
            mu0: -2.0,
            mu0_imag: 0.0,
            min_abs_a: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringData {
    pub continuous: ContinuousData,
    pub discrete: DiscreteData,
}

impl ScatteringData {
    pub fn grid(&self) -> &SpectralGrid {
        &self.continuous.grid
    }

    /// Scattering data of q^(x) = -q*(-x): a unchanged, b -> b*, b0 -> -1/b0.
    pub fn reflected(&self) -> ScatteringData {
        let c = &self.continuous;
        ScatteringData {
            continuous: ContinuousData {
                grid: c.grid.clone(),
                a_pos: c.a_pos.clone(),
                b_pos: c.b_pos.iter().map(|b| b.conj()).collect(),
                a_neg: c.a_neg.clone(),
                b_neg: c.b_neg.iter().map(|b| b.conj()).collect(),
            },
            discrete: self.discrete.reflected(),
        }
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Number of scan points used before golden-section refinement.
pub const GAP_SCAN_POINTS: usize = 512;

/// Locate the zero of a on the gap and compute its norming data.
pub fn discrete_data(profile: &FieldProfile, tol: &Tolerances) -> Result<DiscreteData, GpistError> {
    let pot = Potential::new(profile);
    let edge = FRAC_1_SQRT_2 - 1e-4;
    let scan: Vec<f64> = (0..GAP_SCAN_POINTS)
        .map(|k| -edge + 2.0 * edge * k as f64 / (GAP_SCAN_POINTS - 1) as f64)
        .collect();
    let abs_a = |l: f64| a_upper(&pot, &SheetPoint::gap(l)).map(|a| a.norm()).unwrap_or(f64::INFINITY);
    let vals: Vec<f64> = scan.par_iter().map(|&l| abs_a(l)).collect();
    let (imin, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let lo = scan[imin.saturating_sub(1)];
    let hi = scan[(imin + 1).min(GAP_SCAN_POINTS - 1)];
    let lambda0 = golden_min(abs_a, lo, hi, 1e-13);
    let point = SheetPoint::gap(lambda0);
    let a0 = a_upper(&pot, &point)?;
    if !(a0.norm() < tol.tol_zero) {
        return Err(GpistError::NoZeroFound { min_abs: a0.norm(), tol: tol.tol_zero });
    }
    let nu0 = point.zeta.im;
    let zeta0 = point.zeta;

    let mid = profile.grid.origin_index();
    let (psi2, _) = integrate(&pot, &point, JostKind::Psi2, mid, true);
    let (phi1, _) = integrate(&pot, &point, JostKind::Phi1, mid, true);
    let r0 = phi1[mid][0] / psi2[mid][0];
    let r1 = phi1[mid][1] / psi2[mid][1];
    if (r0 - r1).norm() > tol.tol_b0 * r0.norm().max(1.0) {
        return Err(GpistError::InconsistentNormingConstant { first: format!("{r0}"), second: format!("{r1}") });
    }
    let b0 = (r0 + r1) * 0.5;

    let d = 1e-4;
    let ap = a_upper(&pot, &SheetPoint::gap(lambda0 + d))?;
    let am = a_upper(&pot, &SheetPoint::gap(lambda0 - d))?;
    let a_prime0 = (ap - am) / (2.0 * d);

    // int |psi2|^2 over the line: psi2 on x >= 0 and phi1 / b0 on x < 0.
    let h = profile.grid.h();
    let n = profile.grid.n;
    let mut integral = 0.0;
    for i in 0..n {
        let x = profile.grid.x(i);
        let wgt = if i == 0 || i == n - 1 { 0.5 } else { 1.0 } * h;
        let v = if i >= mid {
            let f = (-nu0 * x).exp();
            psi2[i][0].norm_sqr() * f * f + psi2[i][1].norm_sqr() * f * f
        } else {
            let f = (nu0 * x).exp() / b0.norm();
            phi1[i][0].norm_sqr() * f * f + phi1[i][1].norm_sqr() * f * f
        };
        integral += wgt * v;
    }
    let a_prime0_integral = -I * b0 * integral / (2.0 * SQRT_2 * zeta0);
    let rel = (a_prime0 - a_prime0_integral).norm() / a_prime0.norm();
    if !(rel <= tol.tol_deriv) {
        return Err(GpistError::DerivativeMismatch {
            fd: format!("{a_prime0}"),
            integral: format!("{a_prime0_integral}"),
            rel,
        });
    }
    let m = b0 / (a_prime0 * nu0);
    if m.im.abs() > tol.tol_real {
        return Err(GpistError::NonRealMu0 { imag: m.im, tol: tol.tol_real });
    }
    Ok(DiscreteData { lambda0, nu0, b0, a_prime0, a_prime0_integral, mu0: m.re, mu0_imag: m.im, min_abs_a: a0.norm() })
}

/// Full forward stage: continuous coefficients on `grid` plus discrete data.
pub fn forward(profile: &FieldProfile, grid: &SpectralGrid, tol: &Tolerances) -> Result<ScatteringData, GpistError> {
    profile.check_asymptotes(1e-3)?;
    let continuous = transition_coefficients(profile, grid)?;
    let discrete = discrete_data(profile, tol)?;
    Ok(ScatteringData { continuous, discrete })
}

/// Rectangle in the uniformizing plane w = lambda + zeta (upper half = sheet with Im zeta > 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WRectangle {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Default for WRectangle {
    /// Encloses the gap arc |w| = 1/sqrt 2 for |lambda| <= 0.6, away from the band edges.
    fn default() -> Self {
        WRectangle { re_min: -0.6, re_max: 0.6, im_min: 0.25, im_max: 1.2 }
    }
}

impl WRectangle {
    /// Counterclockwise boundary nodes, `n_side` per side.
    pub fn nodes(&self, n_side: usize) -> Vec<C64> {
        let corners = [
            C64::new(self.re_min, self.im_min),
            C64::new(self.re_max, self.im_min),
            C64::new(self.re_max, self.im_max),
            C64::new(self.re_min, self.im_max),
        ];
        let mut out = Vec::with_capacity(4 * n_side);
        for k in 0..4 {
            let a = corners[k];
            let b = corners[(k + 1) % 4];
            for j in 0..n_side {
                out.push(a + (b - a) * (j as f64 / n_side as f64));
            }
        }
        out
    }
}

/// (1 / 2 pi i) times the contour integral of a'/a around `rect`, by the trapezoid
/// rule with centered-difference derivatives along the boundary.
pub fn zero_count(profile: &FieldProfile, rect: &WRectangle, n_side: usize) -> Result<C64, GpistError> {
    let pot = Potential::new(profile);
    let nodes = rect.nodes(n_side);
    let vals: Result<Vec<C64>, GpistError> = nodes.par_iter().map(|&w| a_upper(&pot, &SheetPoint::from_w(w))).collect();
    let a = vals?;
    let m = a.len();
    let mut s = C64::new(0.0, 0.0);
    for k in 0..m {
        let next = a[(k + 1) % m];
        let prev = a[(k + m - 1) % m];
        s += (next - prev) / (2.0 * a[k]);
    }
    Ok(s / (2.0 * PI * I))
}

/// Small-zeta behaviour of the continuous data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroLimitRecord {
    /// 1/zeta coefficient of a on the lambda > 0 branch.
    pub sigma_plus: C64,
    /// 1/zeta coefficient of b on the lambda > 0 branch.
    pub sigma_plus_b: C64,
    /// 1/zeta coefficient of a on the lambda < 0 branch.
    pub sigma_minus: C64,
    /// 1/zeta coefficient of b on the lambda < 0 branch.
    pub sigma_minus_b: C64,
    pub min_abs_zeta: f64,
    /// max over branches of |zeta a| at min |zeta|.
    pub zeta_a_at_min: f64,
    /// max over branches of |zeta b| at min |zeta|.
    pub zeta_b_at_min: f64,
    pub max_abs_a: f64,
}

fn fit_inverse_zeta(zeta: &[f64], vals: &[C64]) -> C64 {
    // zeta f(zeta) = sigma + c1 zeta + c2 zeta^2, least squares; columns scaled for conditioning.
    let scale = zeta.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let n = zeta.len();
    let m = DMatrix::<C64>::from_fn(n, 3, |i, j| C64::new((zeta[i] / scale).powi(j as i32), 0.0));
    let rhs = DVector::<C64>::from_fn(n, |i, _| vals[i] * zeta[i]);
    let svd = m.svd(true, true);
    match svd.solve(&rhs, 1e-14) {
        Ok(c) => c[0],
        Err(_) => C64::new(f64::NAN, f64::NAN),
    }
}

/// Fit the 1/zeta coefficients of a and b from the 8 smallest |zeta| samples per branch.
pub fn zero_limit_diagnostic(data: &ContinuousData) -> ZeroLimitRecord {
    let g = &data.grid;
    let mut idx: Vec<usize> = (0..g.len()).collect();
    idx.sort_by(|&a, &b| g.zeta[a].abs().partial_cmp(&g.zeta[b].abs()).unwrap());
    let sel: Vec<usize> = idx.into_iter().take(8).collect();
    let z: Vec<f64> = sel.iter().map(|&i| g.zeta[i]).collect();
    let pick = |v: &[C64]| sel.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let i0 = sel[0];
    let zmin = g.zeta[i0].abs();
    let za = (data.a_pos[i0].norm() * zmin).max(data.a_neg[i0].norm() * zmin);
    let zb = (data.b_pos[i0].norm() * zmin).max(data.b_neg[i0].norm() * zmin);
    let max_abs_a = data.a_pos.iter().chain(&data.a_neg).fold(0.0f64, |m, a| m.max(a.norm()));
    ZeroLimitRecord {
        sigma_plus: fit_inverse_zeta(&z, &pick(&data.a_pos)),
        sigma_plus_b: fit_inverse_zeta(&z, &pick(&data.b_pos)),
        sigma_minus: fit_inverse_zeta(&z, &pick(&data.a_neg)),
        sigma_minus_b: fit_inverse_zeta(&z, &pick(&data.b_neg)),
        min_abs_zeta: zmin,
        zeta_a_at_min: za,
        zeta_b_at_min: zb,
        max_abs_a,
    }
}

/// Lift helper used by tests and callers that only have a real zeta.
pub fn real_point(zeta: f64, branch: i8) -> SheetPoint {
    lift(C64::new(zeta, 0.0), branch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_core::{unperturbed_a, unperturbed_jost};

    fn soliton(xmax: f64, h: f64) -> FieldProfile {
        FieldProfile::black_soliton(Grid1D::symmetric(xmax, h).unwrap())
    }

    #[test]
    fn magnus_step_matches_constant_coefficient_exponential() {
        // For constant q the step is exact: compare with a 40-term Taylor series.
        let q = C64::new(0.3, -0.2);
        let (d1, d2) = (C64::new(0.1, -0.7), C64::new(-0.2, 0.4));
        let hh = 0.05;
        let m = expm_step(d1, d2, q, q, q, hh);
        let a = [[d1 * hh, I * q.conj() * hh], [-I * q * hh, d2 * hh]];
        let mut term = [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]];
        let mut sum = term;
        for k in 1..40 {
            let mut nt = [[C64::new(0.0, 0.0); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    nt[i][j] = (term[i][0] * a[0][j] + term[i][1] * a[1][j]) / k as f64;
                }
            }
            term = nt;
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += term[i][j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[i][j] - sum[i][j]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_background_gives_free_state() {
        let g = Grid1D::symmetric(10.0, 0.05).unwrap();
        let prof = FieldProfile::from_fn(g, |_| C64::new(1.0, 0.0)).unwrap();
        let p = real_point(0.7, 1);
        let j = jost_solve(&prof, p, JostKind::Psi1).unwrap();
        let a = JostKind::Psi1.asymptote(&p);
        for v in &j.values {
            assert!((v[0] - a[0]).norm() < 1e-13 && (v[1] - a[1]).norm() < 1e-13);
        }
    }

    #[test]
    fn gap_growth_is_refused() {
        let prof = soliton(10.0, 0.05);
        let g = SheetPoint::gap(0.2);
        assert!(matches!(jost_solve(&prof, g, JostKind::Psi1), Err(GpistError::GapGrowth { .. })));
        assert!(matches!(jost_solve(&prof, g, JostKind::Phi2), Err(GpistError::GapGrowth { .. })));
        assert!(jost_solve(&prof, g, JostKind::Psi2).is_ok());
    }

    #[test]
    fn black_soliton_jost_matches_closed_form() {
        let prof = soliton(40.0, 0.02);
        for &(z, br) in &[(0.3, 1i8), (-1.2, -1), (5.0, 1)] {
            let p = real_point(z, br);
            for kind in [JostKind::Psi1, JostKind::Psi2, JostKind::Phi1, JostKind::Phi2] {
                let j = jost_solve(&prof, p, kind).unwrap();
                let mut err: f64 = 0.0;
                for i in 0..prof.grid.n {
                    let v = j.raw(i);
                    let e = unperturbed_jost(&p, prof.grid.x(i), kind);
                    err = err.max((v[0] - e[0]).norm()).max((v[1] - e[1]).norm());
                }
                assert!(err < 1e-7, "{kind:?} at zeta {z}: {err}");
            }
        }
    }

    #[test]
    fn wronskian_of_black_soliton_pair() {
        let prof = soliton(30.0, 0.02);
        let p = real_point(0.45, 1);
        let a = jost_solve(&prof, p, JostKind::Psi1).unwrap();
        let b = jost_solve(&prof, p, JostKind::Psi2).unwrap();
        let w = wronskian(&a, &b).unwrap();
        assert!((w.mean - wronskian_constant(&p)).norm() < 1e-8);
        assert!(w.max_deviation < 1e-8);
        let z = wronskian(&a, &a).unwrap();
        assert!(z.mean.norm() < 1e-15);
        let other = jost_solve(&prof, real_point(0.5, 1), JostKind::Psi2).unwrap();
        assert_eq!(wronskian(&a, &other), Err(GpistError::MismatchedGrids));
    }

    #[test]
    fn transition_for_black_soliton() {
        let prof = soliton(40.0, 0.02);
        let pot = Potential::new(&prof);
        for &(z, br) in &[(1e-3, 1i8), (-0.01, -1), (0.7, 1), (29.9, -1)] {
            let p = real_point(z, br);
            let (a, b) = transition_at(&pot, &p).unwrap();
            let a0 = unperturbed_a(&p);
            assert!((a - a0).norm() / a0.norm() < 1e-6, "a at {z}");
            assert!(b.norm() < 1e-7, "b at {z}: {}", b.norm());
        }
    }

    #[test]
    fn discrete_data_for_black_soliton() {
        let prof = soliton(40.0, 0.02);
        let d = discrete_data(&prof, &Tolerances::default()).unwrap();
        assert!(d.lambda0.abs() < 1e-6);
        assert!((d.b0 - I).norm() < 1e-5);
        assert!((d.mu0 + 2.0).abs() < 1e-4);
        assert!((d.a_prime0 - C64::new(0.0, -FRAC_1_SQRT_2)).norm() < 1e-6);
        assert!((d.a_prime0 - d.a_prime0_integral).norm() / d.a_prime0.norm() < 1e-4);
    }

    #[test]
    fn zero_count_for_black_soliton() {
        let prof = soliton(30.0, 0.02);
        let c = zero_count(&prof, &WRectangle::default(), 100).unwrap();
        assert!((c - C64::new(1.0, 0.0)).norm() < 0.01, "{c}");
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let m = golden_min(|x| (x - 0.123).powi(2), -1.0, 1.0, 1e-12);
        assert!((m - 0.123).abs() < 1e-9);
    }

    #[test]
    fn sigma_fit_recovers_pole() {
        let z = [-0.004, -0.003, -0.002, -0.001, 0.001, 0.002, 0.003, 0.004];
        let v: Vec<C64> = z.iter().map(|&t| C64::new(0.5, -0.25) / t + C64::new(1.0, 2.0) + t * 3.0).collect();
        let s = fit_inverse_zeta(&z, &v);
        assert!((s - C64::new(0.5, -0.25)).norm() < 1e-10);
    }
}
