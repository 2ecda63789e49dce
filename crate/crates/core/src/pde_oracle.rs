//! Direct method-of-lines integrator for i u_t + u_xx = (|u|^2 - 1) u with
//! clamped far-field values, plus energy, energy distance and Lax-pair checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::GpistError;
use crate::profile::FieldProfile;
use crate::spectral_core::I;
use crate::C64;

/// Largest admissible time step as a multiple of h^2.
pub const CFL_FACTOR: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeSettings {
    pub dt: f64,
    /// 4th-order centered Laplacian instead of the 2nd-order one.
    pub fourth_order: bool,
    /// Allowed deviation of the 5 outermost nodes on each side from their initial values.
    pub tol_contamination: f64,
    /// Energy log entries per unit time (in addition to the requested times).
    pub log_rate: f64,
}

impl Default for PdeSettings {
    fn default() -> Self {
        PdeSettings { dt: 5e-5, fourth_order: false, tol_contamination: 1e-4, log_rate: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeState {
    pub t: f64,
    pub profile: FieldProfile,
    /// Energy conserved by the semi-discrete 2nd-order scheme.
    pub discrete_energy: f64,
    /// Quadrature value of the continuous energy.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<PdeState>,
    /// (t, discrete energy) samples.
    pub energy_log: Vec<(f64, f64)>,
    pub max_contamination: f64,
    pub dt_used: f64,
}

impl Trajectory {
    /// max |E(t) - E(0)| / |E(0)| over the energy log.
    pub fn relative_energy_drift(&self) -> f64 {
        let e0 = self.energy_log.first().map(|v| v.1).unwrap_or(0.0);
        let d = self.energy_log.iter().fold(0.0f64, |m, v| m.max((v.1 - e0).abs()));
        if e0.abs() > 0.0 {
            d / e0.abs()
        } else {
            d
        }
    }
}

fn rhs(u: &[C64], out: &mut [C64], inv_h2: f64, fourth: bool) {
    let n = u.len();
    out[0] = C64::new(0.0, 0.0);
    out[n - 1] = C64::new(0.0, 0.0);
    out[1..n - 1].par_iter_mut().with_min_len(512).enumerate().for_each(|(k, o)| {
        let i = k + 1;
        let lap = if fourth && i >= 2 && i + 2 < n {
            (-u[i - 2] + 16.0 * u[i - 1] - 30.0 * u[i] + 16.0 * u[i + 1] - u[i + 2]) * (inv_h2 / 12.0)
        } else {
            (u[i - 1] - 2.0 * u[i] + u[i + 1]) * inv_h2
        };
        *o = I * (lap - u[i] * (u[i].norm_sqr() - 1.0));
    });
}

/// Energy conserved by the 2nd-order semi-discrete scheme with clamped ends:
/// sum h |D+ u|^2 / 2 + sum over interior h (|u|^2 - 1)^2 / 4.
pub fn discrete_energy(p: &FieldProfile) -> f64 {
    let h = p.h();
    let u = &p.u;
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n - 1 {
        s += 0.5 * (u[i + 1] - u[i]).norm_sqr() / h;
    }
    for v in &u[1..n - 1] {
        s += 0.25 * h * (v.norm_sqr() - 1.0).powi(2);
    }
    s
}

fn contamination(u: &[C64], u0: &[C64]) -> f64 {
    let n = u.len();
    let k = 5.min(n / 2);
    (0..k).chain(n - k..n).fold(0.0f64, |m, i| m.max((u[i] - u0[i]).norm()))
}

/// Integrate from t = 0 and record states at the requested (sorted, nonnegative) times.
pub fn integrate(u0: &FieldProfile, times: &[f64], settings: &PdeSettings) -> Result<Trajectory, GpistError> {
    let h = u0.h();
    let bound = CFL_FACTOR * h * h;
    if !(settings.dt > 0.0) || settings.dt > bound * (1.0 + 1e-12) {
        return Err(GpistError::CflViolation { dt: settings.dt, bound });
    }
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(GpistError::InvalidInput("times must be sorted and nonnegative".into()));
    }
    let n = u0.grid.n;
    let inv_h2 = 1.0 / (h * h);
    let fourth = settings.fourth_order;
    let mut u = u0.u.clone();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n]);
    let mut t = 0.0;
    let mut states = Vec::with_capacity(times.len());
    let e0 = discrete_energy(u0);
    let mut energy_log = vec![(0.0, e0)];
    let mut max_cont: f64 = 0.0;
    let mut dt_used = settings.dt;
    let log_dt = if settings.log_rate > 0.0 { 1.0 / settings.log_rate } else { f64::INFINITY };
    let mut next_log = log_dt;
    let record = |u: &Vec<C64>, t: f64| -> Result<PdeState, GpistError> {
        let p = FieldProfile::new(u0.grid, u.clone())?;
        Ok(PdeState { t, discrete_energy: discrete_energy(&p), energy: energy(&p), profile: p })
    };
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let steps = (span / settings.dt).ceil().max(1.0) as usize;
            let dt = span / steps as f64;
            dt_used = dt;
            for s in 0..steps {
                rhs(&u, &mut k1, inv_h2, fourth);
                for i in 0..n {
                    tmp[i] = u[i] + k1[i] * (0.5 * dt);
                }
                rhs(&tmp, &mut k2, inv_h2, fourth);
                for i in 0..n {
                    tmp[i] = u[i] + k2[i] * (0.5 * dt);
                }
                rhs(&tmp, &mut k3, inv_h2, fourth);
                for i in 0..n {
                    tmp[i] = u[i] + k3[i] * dt;
                }
                rhs(&tmp, &mut k4, inv_h2, fourth);
                for i in 0..n {
                    u[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
                }
                let tn = t + (s + 1) as f64 * dt;
                if tn >= next_log - 1e-12 && s + 1 < steps {
                    let p = FieldProfile { grid: u0.grid, u: u.clone() };
                    energy_log.push((tn, discrete_energy(&p)));
                    let c = contamination(&u, &u0.u);
                    max_cont = max_cont.max(c);
                    if c > settings.tol_contamination {
                        return Err(GpistError::BoundaryContamination { t: tn, deviation: c, tol: settings.tol_contamination });
                    }
                    next_log += log_dt;
                }
            }
            t = target;
        }
        let c = contamination(&u, &u0.u);
        max_cont = max_cont.max(c);
        if c > settings.tol_contamination {
            return Err(GpistError::BoundaryContamination { t, deviation: c, tol: settings.tol_contamination });
        }
        if u.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(GpistError::InvalidInput(format!("non-finite PDE state at t = {t}")));
        }
        let st = record(&u, t)?;
        if energy_log.last().map(|e| e.0) != Some(t) {
            energy_log.push((t, st.discrete_energy));
        }
        states.push(st);
        while next_log <= t + 1e-12 {
            next_log += log_dt;
        }
    }
    Ok(Trajectory { states, energy_log, max_contamination: max_cont, dt_used })
}

/// 6th-order centered first derivative, dropping to lower order near the ends.
pub fn derivative(u: &[C64], h: f64) -> Vec<C64> {
    let n = u.len();
    (0..n)
        .map(|i| {
            if i >= 3 && i + 3 < n {
                ((u[i + 1] - u[i - 1]) * 45.0 - (u[i + 2] - u[i - 2]) * 9.0 + (u[i + 3] - u[i - 3])) / (60.0 * h)
            } else if i >= 1 && i + 1 < n {
                (u[i + 1] - u[i - 1]) / (2.0 * h)
            } else if i == 0 {
                (u[1] - u[0]) / h
            } else {
                (u[n - 1] - u[n - 2]) / h
            }
        })
        .collect()
}

fn trapezoid(v: &[f64], h: f64) -> f64 {
    let n = v.len();
    h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1]))
}

/// Ginzburg-Landau energy int |u'|^2 / 2 + (|u|^2 - 1)^2 / 4 by the trapezoid rule
/// with centered-difference derivatives.
pub fn energy(p: &FieldProfile) -> f64 {
    let h = p.h();
    let du = derivative(&p.u, h);
    let dens: Vec<f64> = p.u.iter().zip(&du).map(|(u, d)| 0.5 * d.norm_sqr() + 0.25 * (u.norm_sqr() - 1.0).powi(2)).collect();
    trapezoid(&dens, h)
}

/// Energy distance |u(0) - v(0)| + ||u' - v'|| + || |u|^2 - |v|^2 || (L2 norms).
pub fn energy_distance(u: &FieldProfile, v: &FieldProfile) -> Result<f64, GpistError> {
    if !u.grid.same_as(&v.grid) {
        return Err(GpistError::MismatchedGrids);
    }
    let h = u.h();
    let i0 = u.grid.origin_index();
    let du = derivative(&u.u, h);
    let dv = derivative(&v.u, h);
    let d1: Vec<f64> = du.iter().zip(&dv).map(|(a, b)| (a - b).norm_sqr()).collect();
    let d2: Vec<f64> = u.u.iter().zip(&v.u).map(|(a, b)| (a.norm_sqr() - b.norm_sqr()).powi(2)).collect();
    Ok((u.u[i0] - v.u[i0]).norm() + trapezoid(&d1, h).sqrt() + trapezoid(&d2, h).sqrt())
}

/// Moving dark soliton sqrt(1 - c^2/2) tanh(sqrt(1 - c^2/2) x / sqrt 2) + i c / sqrt 2.
pub fn traveling_wave(c: f64, x: f64) -> C64 {
    let k = (1.0 - c * c / 2.0).sqrt();
    C64::new(k * (k * x / std::f64::consts::SQRT_2).tanh(), c / std::f64::consts::SQRT_2)
}

fn d1(v: &[C64], h: f64, i: usize) -> C64 {
    (v[i + 1] - v[i - 1]) / (2.0 * h)
}

fn d2(v: &[C64], h: f64, i: usize) -> C64 {
    (v[i + 1] - v[i] * 2.0 + v[i - 1]) / (h * h)
}

/// Max norm over interior nodes of ([L_u, B_u] - K_u) f for each test vector f, where
/// L_u = i diag(1 + sqrt3, 1 - sqrt3) d/dx + [[0, u*], [u, 0]],
/// B_u = -sqrt3 d^2/dx^2 + [[(|u|^2-1)/(sqrt3+1), i u_x*], [-i u_x, (|u|^2-1)/(sqrt3-1)]],
/// K_u = [[0, -u_xx* + (|u|^2-1) u*], [u_xx - (|u|^2-1) u, 0]], all by 2nd-order differences.
pub fn lax_residual(u: &FieldProfile, tests: &[Vec<[C64; 2]>]) -> Result<f64, GpistError> {
    let n = u.grid.n;
    let h = u.h();
    let s3 = 3f64.sqrt();
    let dg = [1.0 + s3, 1.0 - s3];
    let uu = &u.u;
    let mut worst: f64 = 0.0;
    for f in tests {
        if f.len() != n {
            return Err(GpistError::MismatchedGrids);
        }
        let comp = |k: usize| f.iter().map(|v| v[k]).collect::<Vec<C64>>();
        let (f1, f2) = (comp(0), comp(1));
        let zero = C64::new(0.0, 0.0);
        // B f and L f on nodes 1..n-1.
        let mut bf = vec![[zero; 2]; n];
        let mut lf = vec![[zero; 2]; n];
        for i in 1..n - 1 {
            let ux = d1(uu, h, i);
            let w = uu[i].norm_sqr() - 1.0;
            bf[i][0] = -s3 * d2(&f1, h, i) + f1[i] * (w / (s3 + 1.0)) + I * ux.conj() * f2[i];
            bf[i][1] = -s3 * d2(&f2, h, i) - I * ux * f1[i] + f2[i] * (w / (s3 - 1.0));
            lf[i][0] = I * dg[0] * d1(&f1, h, i) + uu[i].conj() * f2[i];
            lf[i][1] = I * dg[1] * d1(&f2, h, i) + uu[i] * f1[i];
        }
        let b0: Vec<C64> = bf.iter().map(|v| v[0]).collect();
        let b1: Vec<C64> = bf.iter().map(|v| v[1]).collect();
        let l0: Vec<C64> = lf.iter().map(|v| v[0]).collect();
        let l1: Vec<C64> = lf.iter().map(|v| v[1]).collect();
        for i in 3..n - 3 {
            let ux = d1(uu, h, i);
            let uxx = d2(uu, h, i);
            let w = uu[i].norm_sqr() - 1.0;
            let lb0 = I * dg[0] * d1(&b0, h, i) + uu[i].conj() * b1[i];
            let lb1 = I * dg[1] * d1(&b1, h, i) + uu[i] * b0[i];
            let bl0 = -s3 * d2(&l0, h, i) + l0[i] * (w / (s3 + 1.0)) + I * ux.conj() * l1[i];
            let bl1 = -s3 * d2(&l1, h, i) - I * ux * l0[i] + l1[i] * (w / (s3 - 1.0));
            let k0 = (-uxx.conj() + uu[i].conj() * w) * f2[i];
            let k1 = (uxx - uu[i] * w) * f1[i];
            worst = worst.max((lb0 - bl0 - k0).norm()).max((lb1 - bl1 - k1).norm());
        }
    }
    Ok(worst)
}

/// Smooth, rapidly decaying test vectors centered at a few interior points.
pub fn default_test_vectors(u: &FieldProfile) -> Vec<Vec<[C64; 2]>> {
    let xs = u.grid.xs();
    [(-1.0, C64::new(1.0, 0.0), C64::new(0.0, 0.5)), (0.5, C64::new(0.3, -0.2), C64::new(1.0, 0.0)), (2.0, C64::new(0.0, 1.0), C64::new(-0.7, 0.1))]
        .iter()
        .map(|&(c, a, b)| {
            xs.iter()
                .map(|&x| {
                    let g = (-(x - c) * (x - c)).exp();
                    [a * g, b * g]
                })
                .collect()
        })
        .collect()
}
