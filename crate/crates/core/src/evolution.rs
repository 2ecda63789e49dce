//! Time evolution of scattering data: a is constant, b and b0 pick up phases.

use crate::jost::{ContinuousData, DiscreteData, ScatteringData};
use crate::spectral_core::{SheetPoint, I};
use crate::C64;

/// Scattering data viewed at time `t`; nothing is copied until [`EvolvedData::materialize`].
#[derive(Debug, Clone, Copy)]
pub struct EvolvedData<'a> {
    pub base: &'a ScatteringData,
    pub t: f64,
}

pub fn evolve(data: &ScatteringData, t: f64) -> EvolvedData<'_> {
    EvolvedData { base: data, t }
}

/// Phase factor exp(-4 i lambda zeta t) on the given real branch.
#[inline]
pub fn phase(zeta: f64, branch: i8, t: f64) -> C64 {
    let p = SheetPoint::real(zeta, branch);
    (-4.0 * I * p.lambda * p.zeta * t).exp()
}

impl<'a> EvolvedData<'a> {
    pub fn b_t(&self, branch: i8) -> Vec<C64> {
        let (_, b) = self.base.continuous.branch(branch);
        let g = &self.base.continuous.grid;
        g.zeta.iter().zip(b).map(|(&z, &b)| b * phase(z, branch, self.t)).collect()
    }

    pub fn a(&self, branch: i8) -> &'a [C64] {
        self.base.continuous.branch(branch).0
    }

    /// c = b(t)/a on a branch.
    pub fn c_t(&self, branch: i8) -> Vec<C64> {
        self.b_t(branch).iter().zip(self.a(branch)).map(|(b, a)| b / a).collect()
    }

    pub fn b0_t(&self) -> C64 {
        let d = &self.base.discrete;
        d.b0 * (4.0 * d.lambda0 * d.nu0 * self.t).exp()
    }

    fn mu0_complex(&self) -> C64 {
        let d = &self.base.discrete;
        self.b0_t() / (d.a_prime0 * d.nu0)
    }

    /// Re(b0(t) / (nu0 a'(lambda0))).
    pub fn mu0_t(&self) -> f64 {
        self.mu0_complex().re
    }

    pub fn mu0_t_imag(&self) -> f64 {
        self.mu0_complex().im
    }

    pub fn discrete_t(&self) -> DiscreteData {
        let m = self.mu0_complex();
        DiscreteData { b0: self.b0_t(), mu0: m.re, mu0_imag: m.im, ..self.base.discrete }
    }

    /// Soliton center ln(|mu0(t)| / (2 sqrt 2 nu0)) / (2 nu0), where the
    /// finite-rank denominator has modulus 2.
    pub fn soliton_center(&self) -> f64 {
        let nu0 = self.base.discrete.nu0;
        (self.mu0_t().abs() / (2.0 * std::f64::consts::SQRT_2 * nu0)).ln() / (2.0 * nu0)
    }

    /// Scattering data at time t as a new base.
    pub fn materialize(&self) -> ScatteringData {
        let c = &self.base.continuous;
        ScatteringData {
            continuous: ContinuousData {
                grid: c.grid.clone(),
                a_pos: c.a_pos.clone(),
                b_pos: self.b_t(1),
                a_neg: c.a_neg.clone(),
                b_neg: self.b_t(-1),
            },
            discrete: self.discrete_t(),
        }
    }

    /// Reflected data q -> -q*(-x) taken at time t. Reflection reverses time,
    /// so this is built from the evolved data rather than evolved itself.
    pub fn reflected_at_t(&self) -> ScatteringData {
        self.materialize().reflected()
    }
}
