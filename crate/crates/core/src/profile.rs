use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::GpistError;
use crate::spectral_core::{black_soliton, Grid1D};
use crate::C64;

/// Complex field samples on a uniform symmetric grid, tending to -1 on the left
/// and +1 on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldProfile {
    pub grid: Grid1D,
    pub u: Vec<C64>,
}

impl FieldProfile {
    pub fn new(grid: Grid1D, u: Vec<C64>) -> Result<FieldProfile, GpistError> {
        grid.validate()?;
        if u.len() != grid.n {
            return Err(GpistError::InvalidInput(format!("{} samples for a grid of {}", u.len(), grid.n)));
        }
        if u.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(GpistError::InvalidInput("profile contains non-finite samples".into()));
        }
        Ok(FieldProfile { grid, u })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> C64) -> Result<FieldProfile, GpistError> {
        let u = grid.xs().into_iter().map(f).collect();
        FieldProfile::new(grid, u)
    }

    pub fn black_soliton(grid: Grid1D) -> FieldProfile {
        FieldProfile::from_fn(grid, |x| C64::new(black_soliton(x), 0.0)).expect("finite samples")
    }

    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    pub fn q(&self) -> Vec<C64> {
        self.u.iter().map(|v| v * FRAC_1_SQRT_2).collect()
    }

    /// Distance of the end samples from the asymptotes -1 and +1.
    pub fn asymptote_defect(&self) -> f64 {
        let l = (self.u[0] + 1.0).norm();
        let r = (self.u[self.grid.n - 1] - 1.0).norm();
        l.max(r)
    }

    /// Checks that the tails have entered the asymptotic regime.
    pub fn check_asymptotes(&self, tol: f64) -> Result<(), GpistError> {
        let d = self.asymptote_defect();
        if d > tol {
            return Err(GpistError::InvalidInput(format!("profile tails miss the +-1 asymptotes by {d:.3e}")));
        }
        Ok(())
    }

    /// sup over x of <x>^4 |d^k (u - sign(x))| for k = 0..=3, by centered differences.
    pub fn decay_weight(&self) -> [f64; 4] {
        let n = self.grid.n;
        let h = self.h();
        let xs = self.grid.xs();
        let dev: Vec<C64> = xs
            .iter()
            .zip(&self.u)
            .map(|(&x, &v)| v - if x >= 0.0 { 1.0 } else { -1.0 })
            .collect();
        let mut out = [0.0f64; 4];
        for i in 2..n - 2 {
            let x = xs[i];
            // Skip the node where the reference tail jumps.
            if x.abs() < 2.5 * h {
                continue;
            }
            let w = (1.0 + x * x).powi(2);
            let d0 = dev[i];
            let d1 = (dev[i + 1] - dev[i - 1]) / (2.0 * h);
            let d2 = (dev[i + 1] - 2.0 * dev[i] + dev[i - 1]) / (h * h);
            let d3 = (dev[i + 2] - 2.0 * dev[i + 1] + 2.0 * dev[i - 1] - dev[i - 2]) / (2.0 * h * h * h);
            for (k, d) in [d0, d1, d2, d3].iter().enumerate() {
                out[k] = out[k].max(w * d.norm());
            }
        }
        out
    }

    /// q = u / sqrt 2 at the quarter points x_min + k h / 4, by 6-point Lagrange interpolation.
    pub fn q_quarter(&self) -> Vec<C64> {
        let n = self.grid.n;
        let q = self.q();
        let mut out = vec![C64::new(0.0, 0.0); 4 * (n - 1) + 1];
        let weights: Vec<[f64; 6]> = (0..4).map(|j| lagrange6(2.0 + j as f64 / 4.0)).collect();
        for i in 0..n - 1 {
            out[4 * i] = q[i];
            let start = i.saturating_sub(2).min(n - 6);
            let off = (i - start) as f64;
            for j in 1..4 {
                let t = off + j as f64 / 4.0;
                let w = if off == 2.0 { weights[j] } else { lagrange6(t) };
                let mut acc = C64::new(0.0, 0.0);
                for (m, wm) in w.iter().enumerate() {
                    acc += q[start + m] * *wm;
                }
                out[4 * i + j] = acc;
            }
        }
        out[4 * (n - 1)] = q[n - 1];
        out
    }

    /// Value at an arbitrary x by 6-point Lagrange interpolation (clamped stencil).
    pub fn interpolate(&self, x: f64) -> C64 {
        interpolate_uniform(self.grid.x_min, self.h(), &self.u, x)
    }
}

/// 6-point Lagrange weights at fractional position t relative to nodes 0..5.
pub fn lagrange6(t: f64) -> [f64; 6] {
    let mut w = [0.0; 6];
    for (i, wi) in w.iter_mut().enumerate() {
        let mut l = 1.0;
        for j in 0..6 {
            if j != i {
                l *= (t - j as f64) / (i as f64 - j as f64);
            }
        }
        *wi = l;
    }
    w
}

/// 6-point Lagrange interpolation on uniform samples starting at x0 with spacing h.
pub fn interpolate_uniform(x0: f64, h: f64, v: &[C64], x: f64) -> C64 {
    let n = v.len();
    let s = (x - x0) / h;
    let i = s.floor().max(0.0) as usize;
    let start = i.saturating_sub(2).min(n.saturating_sub(6));
    let t = s - start as f64;
    let w = lagrange6(t);
    let mut acc = C64::new(0.0, 0.0);
    for (m, wm) in w.iter().enumerate() {
        acc += v[start + m] * *wm;
    }
    acc
}
