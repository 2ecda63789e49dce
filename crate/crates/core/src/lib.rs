//! Inverse scattering numerics for the one-dimensional Gross-Pitaevskii
//! equation `i u_t + u_xx = (|u|^2 - 1) u` near the black soliton `tanh(x/sqrt 2)`.
//!
//! The pipeline is: forward scattering ([`jost`]), explicit evolution of the
//! scattering data ([`evolution`]), Marchenko inversion and field
//! reconstruction ([`marchenko`]), with a direct finite-difference integrator
//! ([`pde_oracle`]) and an experiment driver ([`harness`]) on top.

pub mod error;
pub mod evolution;
pub mod harness;
pub mod io;
pub mod jost;
pub mod linalg;
pub mod marchenko;
pub mod pde_oracle;
pub mod profile;
pub mod spectral_core;
pub mod tolerances;

pub use error::{GpistError, Stage, StageError};
pub use num_complex::Complex64 as C64;
pub use tolerances::Tolerances;

/// Configure the global rayon pool from `GPIST_THREADS` (unset or 0 means automatic).
pub fn init_threads_from_env() {
    let n = std::env::var("GPIST_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if n > 0 {
        // A second call is harmless; the first configuration wins.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
