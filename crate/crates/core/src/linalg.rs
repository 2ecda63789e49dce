//! Dense LU with adjoint solves and a 1-norm condition estimate, for real or complex matrices.

use nalgebra::{ComplexField, DMatrix, DVector, Dyn, LU};

use crate::error::GpistError;

/// Factorization P M = L U of a square matrix.
pub struct LuSolver<T: ComplexField<RealField = f64>> {
    lu: LU<T, Dyn, Dyn>,
    l: DMatrix<T>,
    u: DMatrix<T>,
    norm1: f64,
}

pub fn norm1_matrix<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.clone().modulus()).sum::<f64>()).fold(0.0, f64::max)
}

fn norm1<T: ComplexField<RealField = f64>>(v: &DVector<T>) -> f64 {
    v.iter().map(|x| x.clone().modulus()).sum()
}

impl<T: ComplexField<RealField = f64>> LuSolver<T> {
    pub fn new(m: DMatrix<T>) -> Result<Self, GpistError> {
        if !m.is_square() {
            return Err(GpistError::InvalidInput("matrix is not square".into()));
        }
        let norm1 = norm1_matrix(&m);
        let lu = m.lu();
        let l = lu.l();
        let u = lu.u();
        if u.diagonal().iter().any(|d| {
            let d = d.clone().modulus();
            d == 0.0 || !d.is_finite()
        }) {
            return Err(GpistError::Singular);
        }
        Ok(LuSolver { lu, l, u, norm1 })
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// 1-norm of the factored matrix.
    pub fn norm1(&self) -> f64 {
        self.norm1
    }

    pub fn solve(&self, b: &DVector<T>) -> Result<DVector<T>, GpistError> {
        self.lu.solve(b).ok_or(GpistError::Singular)
    }

    pub fn solve_many(&self, b: &DMatrix<T>) -> Result<DMatrix<T>, GpistError> {
        self.lu.solve(b).ok_or(GpistError::Singular)
    }

    /// Solve M^H x = b using M^H = U^H L^H P.
    pub fn solve_adjoint(&self, b: &DVector<T>) -> Result<DVector<T>, GpistError> {
        let y = self.u.ad_solve_upper_triangular(b).ok_or(GpistError::Singular)?;
        let mut z = self.l.ad_solve_lower_triangular(&y).ok_or(GpistError::Singular)?;
        self.lu.p().inv_permute_rows(&mut z);
        Ok(z)
    }

    /// Hager-Higham estimate of ||M^-1||_1.
    pub fn inverse_norm1_estimate(&self) -> Result<f64, GpistError> {
        let n = self.dim();
        let mut x = DVector::<T>::from_element(n, T::from_real(1.0 / n as f64));
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for iter in 0..5 {
            let y = self.solve(&x)?;
            let ny = norm1(&y);
            if iter > 0 && ny <= est {
                break;
            }
            est = ny;
            let xi = y.map(|v| {
                let r = v.clone().modulus();
                if r > 0.0 { v.unscale(r) } else { T::one() }
            });
            let z = self.solve_adjoint(&xi)?;
            let (j, zj) = z.iter().enumerate().fold((0, 0.0f64), |(bj, bv), (k, v)| {
                let r = v.clone().modulus();
                if r > bv { (k, r) } else { (bj, bv) }
            });
            let ztx = z.dotc(&x).real();
            if zj <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x = DVector::<T>::zeros(n);
            x[j] = T::one();
        }
        // Higham's alternating-sign test vector guards against the rare underestimate.
        let alt = DVector::<T>::from_fn(n, |i, _| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            T::from_real(s * (1.0 + i as f64 / (n.max(2) - 1) as f64))
        });
        let w = self.solve(&alt)?;
        let alt_est = 2.0 * norm1(&w) / (3.0 * n as f64);
        Ok(est.max(alt_est))
    }

    /// Estimated 1-norm condition number.
    pub fn condition_estimate(&self) -> Result<f64, GpistError> {
        Ok(self.norm1 * self.inverse_norm1_estimate()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    fn sample(n: usize) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |i, j| {
            let a = ((i * 7 + j * 13) % 11) as f64 - 5.0;
            let b = ((i * 3 + j * 5) % 7) as f64 - 3.0;
            C64::new(a, b) + if i == j { C64::new(0.5, 0.0) } else { C64::new(0.0, 0.0) }
        })
    }

    #[test]
    fn adjoint_solve_matches_explicit_adjoint() {
        let m = sample(9);
        let s = LuSolver::new(m.clone()).unwrap();
        let b = DVector::from_fn(9, |i, _| C64::new(i as f64, 1.0 - i as f64));
        let x = s.solve_adjoint(&b).unwrap();
        let r = m.adjoint() * &x - &b;
        assert!(r.norm() < 1e-10 * b.norm(), "{}", r.norm());
        let x = s.solve(&b).unwrap();
        assert!((&m * &x - &b).norm() < 1e-10 * b.norm());
    }

    #[test]
    fn condition_estimate_of_diagonal_is_exact() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![
            C64::new(2.0, 0.0),
            C64::new(0.0, 1e-3),
            C64::new(5.0, 0.0),
            C64::new(-1.0, 0.0),
        ]));
        let s = LuSolver::new(m).unwrap();
        let c = s.condition_estimate().unwrap();
        assert!((c - 5e3).abs() < 1e-9, "{c}");
    }

    #[test]
    fn condition_estimate_brackets_true_value() {
        let m = sample(12);
        let inv = m.clone().try_inverse().unwrap();
        let exact = norm1_matrix(&m) * norm1_matrix(&inv);
        let est = LuSolver::new(m).unwrap().condition_estimate().unwrap();
        assert!(est <= exact * (1.0 + 1e-10) && est >= exact / 10.0, "{est} vs {exact}");
    }

    #[test]
    fn singular_matrix_is_reported() {
        let m = DMatrix::<C64>::zeros(3, 3);
        assert!(matches!(LuSolver::new(m), Err(GpistError::Singular)));
    }
}
