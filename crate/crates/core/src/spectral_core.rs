//! The spectral variety `lambda^2 - zeta^2 = 1/2`, grids, and the closed forms of
//! the black-soliton problem that serve as ground truth everywhere else.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use crate::error::GpistError;
use crate::C64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sheet {
    RealBranchPos,
    RealBranchNeg,
    /// zeta = i nu with nu > 0 and real |lambda| < 1/sqrt 2.
    GapUpper,
    GapLower,
    /// Im zeta > 0 away from the axes.
    Upper,
    Lower,
}

impl Sheet {
    pub fn is_gap(self) -> bool {
        matches!(self, Sheet::GapUpper | Sheet::GapLower)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SheetPoint {
    pub lambda: C64,
    pub zeta: C64,
    pub sheet: Sheet,
}

impl SheetPoint {
    /// E = 2 lambda / sqrt 3, the eigenvalue of the original Lax operator.
    pub fn energy(&self) -> C64 {
        self.lambda * (2.0 / 3f64.sqrt())
    }

    /// Uniformizing coordinate w = lambda + zeta; lambda - zeta = 1/(2w).
    pub fn w(&self) -> C64 {
        self.lambda + self.zeta
    }

    /// Relative violation of the hyperbola identity.
    pub fn hyperbola_defect(&self) -> f64 {
        let d = self.lambda * self.lambda - self.zeta * self.zeta - 0.5;
        d.norm() / self.lambda.norm_sqr().max(1.0)
    }

    /// Point on the upper half w-plane (the sheet with Im zeta > 0).
    pub fn from_w(w: C64) -> SheetPoint {
        let inv = 1.0 / (2.0 * w);
        let lambda = (w + inv) * 0.5;
        let zeta = (w - inv) * 0.5;
        SheetPoint { lambda, zeta, sheet: classify(lambda, zeta) }
    }

    /// Gap point with real lambda in (-1/sqrt 2, 1/sqrt 2) and zeta = i nu, nu > 0.
    pub fn gap(lambda: f64) -> SheetPoint {
        let nu = (0.5 - lambda * lambda).max(0.0).sqrt();
        SheetPoint { lambda: C64::new(lambda, 0.0), zeta: C64::new(0.0, nu), sheet: Sheet::GapUpper }
    }

    /// Real-spectrum point for real zeta on the branch sign(lambda) = branch.
    pub fn real(zeta: f64, branch: i8) -> SheetPoint {
        lift(C64::new(zeta, 0.0), branch)
    }
}

fn classify(lambda: C64, zeta: C64) -> Sheet {
    let tiny = 1e-300;
    if zeta.im.abs() <= tiny {
        if lambda.re >= 0.0 {
            Sheet::RealBranchPos
        } else {
            Sheet::RealBranchNeg
        }
    } else if zeta.re.abs() <= tiny && lambda.im.abs() <= tiny && lambda.re.abs() < FRAC_1_SQRT_2 {
        if zeta.im > 0.0 {
            Sheet::GapUpper
        } else {
            Sheet::GapLower
        }
    } else if zeta.im > 0.0 {
        Sheet::Upper
    } else {
        Sheet::Lower
    }
}

/// lambda = branch * sqrt(zeta^2 + 1/2) with the principal square root.
pub fn lift(zeta: C64, branch_sign: i8) -> SheetPoint {
    let s = if branch_sign >= 0 { 1.0 } else { -1.0 };
    let lambda = (zeta * zeta + 0.5).sqrt() * s;
    SheetPoint { lambda, zeta, sheet: classify(lambda, zeta) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// Free states (X1, X2) at x on the given side.
pub fn free_states(p: &SheetPoint, x: f64, side: Side) -> ([C64; 2], [C64; 2]) {
    let s = match side {
        Side::Plus => 1.0,
        Side::Minus => -1.0,
    };
    let r = (p.lambda - p.zeta) * (SQRT_2 * s);
    let em = (-I * p.zeta * x).exp();
    let ep = (I * p.zeta * x).exp();
    ([em, em * r], [ep * r, ep])
}

pub fn wronskian2(v: &[C64; 2], w: &[C64; 2]) -> C64 {
    v[0] * w[1] - v[1] * w[0]
}

/// 4 zeta (lambda - zeta), the Wronskian of both Jost pairs.
pub fn wronskian_constant(p: &SheetPoint) -> C64 {
    4.0 * p.zeta * (p.lambda - p.zeta)
}

/// Transmission coefficient of the black soliton.
pub fn unperturbed_a(p: &SheetPoint) -> C64 {
    let w = p.w();
    let c = C64::new(0.0, FRAC_1_SQRT_2);
    (w - c) / (w + c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JostKind {
    Psi1,
    Psi2,
    Phi1,
    Phi2,
}

impl JostKind {
    pub fn name(self) -> &'static str {
        match self {
            JostKind::Psi1 => "psi1",
            JostKind::Psi2 => "psi2",
            JostKind::Phi1 => "phi1",
            JostKind::Phi2 => "phi2",
        }
    }

    /// Sign s in the renormalization w = exp(s i zeta x) v.
    pub fn renorm_sign(self) -> f64 {
        match self {
            JostKind::Psi1 | JostKind::Phi1 => 1.0,
            JostKind::Psi2 | JostKind::Phi2 => -1.0,
        }
    }

    /// True when the normalization is imposed at +infinity.
    pub fn from_right(self) -> bool {
        matches!(self, JostKind::Psi1 | JostKind::Psi2)
    }

    /// Renormalized asymptotic vector.
    pub fn asymptote(self, p: &SheetPoint) -> [C64; 2] {
        let r = (p.lambda - p.zeta) * SQRT_2;
        let one = C64::new(1.0, 0.0);
        match self {
            JostKind::Psi1 => [one, r],
            JostKind::Psi2 => [r, one],
            JostKind::Phi1 => [one, -r],
            JostKind::Phi2 => [-r, one],
        }
    }
}

/// Closed-form Jost solutions of the black soliton.
pub fn unperturbed_jost(p: &SheetPoint, x: f64, which: JostKind) -> [C64; 2] {
    let l = p.lambda;
    let z = p.zeta;
    let lz = l - z;
    let h = FRAC_1_SQRT_2;
    let d = 1.0 / (1.0 + (SQRT_2 * x).exp());
    let e = 1.0 - d;
    let em = (-I * z * x).exp();
    let ep = (I * z * x).exp();
    let one = C64::new(1.0, 0.0);
    match which {
        JostKind::Psi1 => {
            let den = h + I * z;
            [
                em * (one - d * (h - I * lz) / den),
                em * (lz * SQRT_2 - d * (I * h + lz) / den),
            ]
        }
        JostKind::Psi2 => {
            let den = h - I * z;
            [
                ep * (lz * SQRT_2 - d * (-I * h + lz) / den),
                ep * (one - d * (h + I * lz) / den),
            ]
        }
        JostKind::Phi1 => {
            let den = h - I * z;
            [
                em * (one - e * (h + I * lz) / den),
                em * (-lz * SQRT_2 + e * (-I * h + lz) / den),
            ]
        }
        JostKind::Phi2 => {
            let den = h + I * z;
            [
                ep * (-lz * SQRT_2 + e * (I * h + lz) / den),
                ep * (one - e * (h - I * lz) / den),
            ]
        }
    }
}

/// Black-soliton kernel Psi0(x, x + 2p) as [[Psi11, Psi12], [Psi21, Psi22]].
pub fn unperturbed_kernel(x: f64, p: f64) -> Result<[[C64; 2]; 2], GpistError> {
    if p < 0.0 || !p.is_finite() {
        return Err(GpistError::InvalidInput(format!("kernel offset p = {p} must be >= 0")));
    }
    let v = (-SQRT_2 * p).exp() / (SQRT_2 * (1.0 + (SQRT_2 * x).exp()));
    let p11 = C64::new(v, 0.0);
    let p12 = C64::new(0.0, -v);
    Ok([[p11, p12], [p12.conj(), p11.conj()]])
}

/// U0(x) = tanh(x / sqrt 2).
pub fn black_soliton(x: f64) -> f64 {
    (x * FRAC_1_SQRT_2).tanh()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Grid1D {
    /// Symmetric grid on [-x_max, x_max] with spacing close to h and an odd node count,
    /// so that x = 0 is a node.
    pub fn symmetric(x_max: f64, h: f64) -> Result<Grid1D, GpistError> {
        if !(x_max > 0.0 && h > 0.0) {
            return Err(GpistError::InvalidInput(format!("grid needs x_max > 0 and h > 0, got {x_max}, {h}")));
        }
        let half = (x_max / h).round() as usize;
        let g = Grid1D { x_min: -x_max, x_max, n: 2 * half + 1 };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GpistError> {
        if self.n < 16 {
            return Err(GpistError::InvalidInput(format!("grid needs n >= 16, got {}", self.n)));
        }
        if !(self.x_max > self.x_min) {
            return Err(GpistError::InvalidInput("grid needs x_max > x_min".into()));
        }
        if (self.x_min + self.x_max).abs() > 1e-12 * self.x_max.abs() {
            return Err(GpistError::InvalidInput("grid must be symmetric about 0".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.x_max
        } else {
            self.x_min + i as f64 * self.h()
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Index of the node x = 0 (n odd) or the node just left of it.
    pub fn origin_index(&self) -> usize {
        (self.n - 1) / 2
    }

    pub fn same_as(&self, other: &Grid1D) -> bool {
        self.n == other.n
            && (self.x_min - other.x_min).abs() <= 1e-12 * self.x_max.abs().max(1.0)
            && (self.x_max - other.x_max).abs() <= 1e-12 * self.x_max.abs().max(1.0)
    }
}

/// Real spectral samples, symmetric about 0 and excluding it.
///
/// Quadrature nodes are cell midpoints `±(k + 1/2) dz` of a uniform partition of
/// `[-zeta_max, zeta_max]`; the extra nodes near 0 carry zero weight and exist
/// for the small-zeta diagnostics only.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    pub zeta: Vec<f64>,
    pub weight: Vec<f64>,
    pub zeta_max: f64,
    pub dzeta: f64,
}

impl SpectralGrid {
    /// `n_uniform` symmetric midpoint nodes plus `n_refine` geometric nodes per side
    /// between `refine_min` and the first midpoint.
    pub fn new(zeta_max: f64, n_uniform: usize, refine_min: f64, n_refine: usize) -> Result<SpectralGrid, GpistError> {
        if n_uniform < 4 || n_uniform % 2 != 0 || !(zeta_max > 0.0) {
            return Err(GpistError::InvalidInput(format!(
                "spectral grid needs an even node count >= 4 and zeta_max > 0, got {n_uniform}, {zeta_max}"
            )));
        }
        let half = n_uniform / 2;
        let dz = zeta_max / half as f64;
        let mut pos: Vec<(f64, f64)> = (0..half).map(|k| ((k as f64 + 0.5) * dz, dz)).collect();
        if n_refine > 0 {
            let top = 0.5 * dz;
            if !(refine_min > 0.0 && refine_min < top) {
                return Err(GpistError::InvalidInput(format!(
                    "refinement floor {refine_min} must lie in (0, {top})"
                )));
            }
            let r = (top / refine_min).powf(1.0 / n_refine as f64);
            for k in 0..n_refine {
                pos.push((refine_min * r.powi(k as i32), 0.0));
            }
        }
        pos.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut zeta = Vec::with_capacity(2 * pos.len());
        let mut weight = Vec::with_capacity(2 * pos.len());
        for &(z, w) in pos.iter().rev() {
            zeta.push(-z);
            weight.push(w);
        }
        for &(z, w) in pos.iter() {
            zeta.push(z);
            weight.push(w);
        }
        Ok(SpectralGrid { zeta, weight, zeta_max, dzeta: dz })
    }

    /// Default grid: zeta_max = 30, 4096 uniform nodes, 8 refinement nodes per side down to 1e-3.
    pub fn default_grid() -> SpectralGrid {
        SpectralGrid::new(30.0, 4096, 1e-3, 8).expect("default spectral grid")
    }

    /// Rebuild a grid from its node list (as read back from CSV).
    pub fn from_nodes(nodes: &[f64]) -> Result<SpectralGrid, GpistError> {
        let mut pos: Vec<f64> = nodes.iter().copied().filter(|z| *z > 0.0).collect();
        pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pos.dedup();
        if pos.len() < 2 {
            return Err(GpistError::InvalidInput("too few spectral nodes".into()));
        }
        let n = pos.len();
        let dz = pos[n - 1] - pos[n - 2];
        let zeta_max = pos[n - 1] + 0.5 * dz;
        let mut zeta = Vec::new();
        let mut weight = Vec::new();
        let w_of = |z: f64| if z > 0.5 * dz * (1.0 - 1e-9) { dz } else { 0.0 };
        for &z in pos.iter().rev() {
            zeta.push(-z);
            weight.push(w_of(z));
        }
        for &z in pos.iter() {
            zeta.push(z);
            weight.push(w_of(z));
        }
        Ok(SpectralGrid { zeta, weight, zeta_max, dzeta: dz })
    }

    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }

    /// Index of the node -zeta_i.
    pub fn mirror(&self, i: usize) -> usize {
        self.zeta.len() - 1 - i
    }

    pub fn min_abs(&self) -> f64 {
        self.zeta.iter().fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.len()).all(|i| self.zeta[i] == -self.zeta[self.mirror(i)] && self.weight[i] == self.weight[self.mirror(i)])
    }
}

/// Value at zeta = 0 from the Lagrange polynomial through the 3 nearest samples on each side.
pub fn extrapolate_to_zero(zeta: &[f64], values: &[C64]) -> C64 {
    let mut idx: Vec<usize> = (0..zeta.len()).collect();
    idx.sort_by(|&a, &b| zeta[a].abs().partial_cmp(&zeta[b].abs()).unwrap());
    let mut neg: Vec<usize> = idx.iter().copied().filter(|&i| zeta[i] < 0.0).take(3).collect();
    let pos: Vec<usize> = idx.iter().copied().filter(|&i| zeta[i] > 0.0).take(3).collect();
    neg.extend(pos);
    let mut acc = C64::new(0.0, 0.0);
    for &i in &neg {
        let mut l = 1.0;
        for &j in &neg {
            if j != i {
                l *= (0.0 - zeta[j]) / (zeta[i] - zeta[j]);
            }
        }
        acc += values[i] * l;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_examples() {
        let p = lift(C64::new(1e-14, 0.0), 1);
        assert!((p.lambda.re - FRAC_1_SQRT_2).abs() < 1e-12);
        let p = lift(C64::new(0.0, 0.5), 1);
        assert!((p.lambda - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert_eq!(p.sheet, Sheet::GapUpper);
        let p = lift(C64::new(FRAC_1_SQRT_2, 0.0), 1);
        assert!((p.lambda.re - 1.0).abs() < 1e-15);
        assert_eq!(p.sheet, Sheet::RealBranchPos);
        assert_eq!(lift(C64::new(0.3, 0.0), -1).sheet, Sheet::RealBranchNeg);
    }

    #[test]
    fn free_state_examples() {
        let p = lift(C64::new(FRAC_1_SQRT_2, 0.0), 1);
        let (x1, _) = free_states(&p, 0.0, Side::Plus);
        assert!((x1[0] - 1.0).norm() < 1e-15);
        assert!((x1[1].re - 0.4142135624).abs() < 1e-10);
        let (x1m, _) = free_states(&p, 0.0, Side::Minus);
        assert!((x1m[1] + x1[1]).norm() < 1e-15);
    }

    #[test]
    fn unperturbed_a_examples() {
        let p = lift(C64::new(0.0, 0.0), 1);
        assert!((unperturbed_a(&p) - C64::new(0.0, -1.0)).norm() < 1e-15);
        let g = SheetPoint::gap(0.0);
        assert!(unperturbed_a(&g).norm() < 1e-15);
        for &l in &[-0.6, -0.2, 0.1, 0.5] {
            let g = SheetPoint::gap(l);
            let nu = g.zeta.im;
            let expect = SQRT_2 * f64::abs(l) / (1.0 + SQRT_2 * nu);
            assert!((unperturbed_a(&g).norm() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn unperturbed_jost_gap_relation() {
        let g = SheetPoint::gap(0.0);
        for &x in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
            let f = unperturbed_jost(&g, x, JostKind::Phi1);
            let s = unperturbed_jost(&g, x, JostKind::Psi2);
            assert!((f[0] - I * s[0]).norm() < 1e-14);
            assert!((f[1] - I * s[1]).norm() < 1e-14);
        }
    }

    #[test]
    fn unperturbed_psi2_norm_integral() {
        let g = SheetPoint::gap(0.0);
        let h = 1e-3;
        let mut s = 0.0;
        let n = 60_000;
        for k in 0..=n {
            let x = -30.0 + k as f64 * h;
            let v = unperturbed_jost(&g, x, JostKind::Psi2);
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            s += w * h * (v[0].norm_sqr() + v[1].norm_sqr());
        }
        assert!((s - SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn unperturbed_psi1_tends_to_free_state() {
        let p = lift(C64::new(0.8, 0.0), 1);
        let x = 40.0;
        let v = unperturbed_jost(&p, x, JostKind::Psi1);
        let (x1, _) = free_states(&p, x, Side::Plus);
        assert!((v[0] - x1[0]).norm() < 1e-20 + 1e-15 && (v[1] - x1[1]).norm() < 1e-15);
    }

    #[test]
    fn kernel_examples() {
        let k = unperturbed_kernel(0.0, 0.0).unwrap();
        assert!((k[0][1] - C64::new(0.0, -1.0 / (2.0 * SQRT_2))).norm() < 1e-15);
        assert!((2.0 * SQRT_2 * I * k[1][0] + 1.0).norm() < 1e-15);
        assert!(unperturbed_kernel(0.0, -0.1).is_err());
        for &x in &[-2.0, 0.3, 1.5] {
            let k = unperturbed_kernel(x, 0.0).unwrap();
            let q = black_soliton(x) / SQRT_2;
            let bc = -0.5 * I * (q - FRAC_1_SQRT_2);
            assert!((k[1][0] - bc).norm() < 1e-15);
        }
    }

    #[test]
    fn spectral_grid_layout() {
        let g = SpectralGrid::default_grid();
        assert_eq!(g.weight.iter().filter(|w| **w > 0.0).count(), 4096);
        assert!(g.is_symmetric());
        assert!((g.min_abs() - 1e-3).abs() < 1e-15);
        let top = g.zeta.last().unwrap() + 0.5 * g.dzeta;
        assert!((top - 30.0).abs() < 1e-12);
        let back = SpectralGrid::from_nodes(&g.zeta).unwrap();
        assert_eq!(back.weight, g.weight);
    }

    #[test]
    fn extrapolation_is_exact_on_quintics() {
        let z: [f64; 6] = [-0.3, -0.2, -0.1, 0.05, 0.15, 0.3];
        let v: Vec<C64> = z.iter().map(|&t| C64::new(2.0 + t - 3.0 * t.powi(5), t * t)).collect();
        let e = extrapolate_to_zero(&z, &v);
        assert!((e - C64::new(2.0, 0.0)).norm() < 1e-12);
    }
}
