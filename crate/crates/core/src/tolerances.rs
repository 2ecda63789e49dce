use serde::{Deserialize, Serialize};

/// Acceptance gates used across the pipeline; every field can be overridden from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// | |a|^2 - |b|^2 - 1 | on the real spectrum.
    pub tol_norm: f64,
    /// Acceptance of the |a| dip on the gap.
    pub tol_zero: f64,
    /// Largest admissible imaginary part of mu0.
    pub tol_real: f64,
    /// Agreement of the two component ratios defining b0.
    pub tol_b0: f64,
    /// Relative agreement of the two a'(lambda0) evaluations.
    pub tol_deriv: f64,
    /// Largest admissible imaginary part of the assembled kernels.
    pub tol_leak: f64,
    /// Relative residual of each Marchenko station solve.
    pub tol_res: f64,
    /// Boundary identity Psi21(x,x) = -(i/2)(q - 1/sqrt 2).
    pub tol_bc: f64,
    /// Condition estimate limit for the Marchenko systems.
    pub cond_limit: f64,
    /// Deviation allowed at the clamped PDE boundary nodes.
    pub tol_contamination: f64,
    /// Relative energy drift allowed in the PDE oracle.
    pub tol_energy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_norm: 1e-6,
            tol_zero: 1e-4,
            tol_real: 1e-5,
            tol_b0: 1e-5,
            tol_deriv: 1e-3,
            tol_leak: 1e-6,
            tol_res: 1e-7,
            tol_bc: 1e-5,
            cond_limit: 1e8,
            tol_contamination: 1e-4,
            tol_energy: 1e-6,
        }
    }
}
