//! `gpist`: command-line front end for the scattering pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gpist_core::error::WithStage;
use gpist_core::evolution::evolve;
use gpist_core::harness::{self, ExperimentConfig, Family};
use gpist_core::io;
use gpist_core::jost;
use gpist_core::marchenko::{self, MarchenkoSettings};
use gpist_core::pde_oracle::{self, PdeSettings};
use gpist_core::spectral_core::{Grid1D, SpectralGrid};
use gpist_core::{GpistError, Stage, StageError, Tolerances};
use serde_json::json;

#[derive(Parser)]
#[command(name = "gpist", version, about = "Inverse scattering and stability experiments for the black soliton of the 1D Gross-Pitaevskii equation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Out {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct Spectral {
    #[arg(long, default_value_t = 30.0)]
    zeta_max: f64,
    /// Number of uniform spectral nodes (even).
    #[arg(long, default_value_t = 4096)]
    n_zeta: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a perturbed black-soliton profile u0 = U0 + epsilon u1.
    Perturb {
        #[arg(long, default_value = "gaussian_real")]
        family: String,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 40.0)]
        x_max: f64,
        #[arg(long, default_value_t = 0.02)]
        h: f64,
        #[command(flatten)]
        out: Out,
    },
    /// Forward scattering of a profile: continuous data and the discrete eigenvalue.
    Scatter {
        profile: PathBuf,
        #[command(flatten)]
        spectral: Spectral,
        /// Side length of the argument-principle contour (0 skips the count).
        #[arg(long, default_value_t = 0)]
        contour_n_side: usize,
        #[command(flatten)]
        out: Out,
    },
    /// Evolve scattering data to time t.
    Evolve {
        /// Scattering CSV written by `scatter` (its .json sidecar is read alongside).
        #[arg(long, default_value = "out/scattering.csv")]
        data: PathBuf,
        #[arg(long)]
        t: f64,
        #[command(flatten)]
        out: Out,
    },
    /// Reconstruct u(t, x) from scattering data by the Marchenko equations.
    Reconstruct {
        #[arg(long, default_value = "out/scattering.csv")]
        data: PathBuf,
        #[arg(long)]
        t: f64,
        /// Half-width of the reconstruction window.
        #[arg(long, default_value_t = 35.0)]
        window: f64,
        #[arg(long, default_value_t = 0.24)]
        spacing: f64,
        #[arg(long, default_value_t = 12.0)]
        p_max: f64,
        #[arg(long, default_value_t = 400)]
        n_p: usize,
        /// Solve the right system everywhere instead of splitting at the soliton center.
        #[arg(long)]
        right_only: bool,
        /// Also write every station kernel (large).
        #[arg(long)]
        kernel_field: bool,
        #[command(flatten)]
        out: Out,
    },
    /// Integrate the PDE directly from a profile.
    Pde {
        profile: PathBuf,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 5e-5)]
        dt: f64,
        /// Extra output times before t_end, comma separated.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        #[arg(long)]
        fourth_order: bool,
        #[command(flatten)]
        out: Out,
    },
    /// Stability experiment from a config file.
    Stability {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: Out,
    },
    /// Spectral diagnostics from a config file.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: Out,
    },
}

fn config(path: &Path) -> Result<ExperimentConfig, StageError> {
    ExperimentConfig::from_file(path).stage(Stage::Config)
}

fn summary(dir: &Path, v: &serde_json::Value) -> Result<(), StageError> {
    io::write_json(&dir.join("summary.json"), v).stage(Stage::Io)
}

fn run(cli: Cli) -> Result<(), StageError> {
    let tol = Tolerances::default();
    match cli.cmd {
        Cmd::Perturb { family, epsilon, seed, x_max, h, out } => {
            let fam = Family::parse(&family).stage(Stage::Config)?;
            let grid = Grid1D::symmetric(x_max, h).stage(Stage::Config)?;
            let (p, pert) = harness::make_perturbation(fam, epsilon, seed, grid).stage(Stage::Perturbation)?;
            io::write_profile(&out.out.join("profile.csv"), &p, None).stage(Stage::Io)?;
            io::write_json(&out.out.join("perturbation.json"), &pert).stage(Stage::Io)?;
        }
        Cmd::Scatter { profile, spectral, contour_n_side, out } => {
            let p = io::read_profile(&profile).stage(Stage::Io)?;
            let sg = SpectralGrid::new(spectral.zeta_max, spectral.n_zeta, 1e-3, 8).stage(Stage::Config)?;
            p.check_asymptotes(1e-3).stage(Stage::Forward)?;
            let continuous = jost::transition_coefficients(&p, &sg).stage(Stage::Forward)?;
            let discrete = jost::discrete_data(&p, &tol).stage(Stage::Discrete)?;
            let count = if contour_n_side > 0 {
                Some(jost::zero_count(&p, &jost::WRectangle::default(), contour_n_side).stage(Stage::Diagnostics)?)
            } else {
                None
            };
            let data = jost::ScatteringData { continuous, discrete };
            io::write_scattering_data(&out.out.join("scattering.csv"), &data, Some(0.0)).stage(Stage::Io)?;
            let c = &data.continuous;
            summary(
                &out.out,
                &json!({
                    "discrete": discrete,
                    "normalization_defect": c.normalization_defect(),
                    "symmetry_defect": c.symmetry_defect(),
                    "zero_count": count.map(|z| [z.re, z.im]),
                    "zero_limit": jost::zero_limit_diagnostic(c),
                }),
            )?;
        }
        Cmd::Evolve { data, t, out } => {
            let d = io::read_scattering_data(&data, None).stage(Stage::Io)?;
            let ev = evolve(&d, t);
            let m = ev.materialize();
            io::write_scattering_data(&out.out.join(format!("scattering_t{t}.csv")), &m, Some(t)).stage(Stage::Io)?;
            summary(&out.out, &json!({ "t": t, "discrete": m.discrete, "soliton_center": ev.soliton_center() }))?;
        }
        Cmd::Reconstruct { data, t, window, spacing, p_max, n_p, right_only, kernel_field, out } => {
            let d = io::read_scattering_data(&data, None).stage(Stage::Io)?;
            let settings = MarchenkoSettings { p_max, n_p, use_left: !right_only, ..Default::default() };
            settings.validate().stage(Stage::Config)?;
            let ev = evolve(&d, t);
            let (kernels, field, rec) = marchenko::reconstruct(&ev, window, spacing, &settings, &tol).map_err(|e| {
                let stage = if matches!(e, GpistError::ImaginaryLeak { .. }) { Stage::Kernels } else { Stage::Marchenko };
                StageError { stage, source: e }
            })?;
            io::check_finite("reconstruction", rec.profile.u.iter().flat_map(|v| [v.re, v.im])).stage(Stage::Reconstruction)?;
            io::write_profile(&out.out.join("reconstruction.csv"), &rec.profile, Some(t)).stage(Stage::Io)?;
            io::write_kernels(&out.out, &kernels).stage(Stage::Io)?;
            if kernel_field {
                io::write_kernel_field(&out.out.join("kernel_field.csv"), &field).stage(Stage::Io)?;
            }
            let max_remainder = field.stations.iter().map(|s| s.remainder_norm(settings.dy())).fold(0.0, f64::max);
            summary(
                &out.out,
                &json!({
                    "t": t,
                    "stations": rec.profile.grid.n,
                    "x_center": rec.x_center,
                    "boundary_residual": rec.boundary_residual,
                    "symmetry_gap": rec.symmetry_gap,
                    "left_right_gap": rec.left_right_gap,
                    "max_cond": rec.max_cond,
                    "max_residual": rec.max_residual,
                    "max_imag": rec.max_imag,
                    "max_remainder": max_remainder,
                }),
            )?;
        }
        Cmd::Pde { profile, t_end, dt, times, fourth_order, out } => {
            let p = io::read_profile(&profile).stage(Stage::Io)?;
            let mut ts: Vec<f64> = times.into_iter().filter(|&s| s < t_end).collect();
            ts.push(t_end);
            let settings = PdeSettings { dt, fourth_order, tol_contamination: tol.tol_contamination, ..Default::default() };
            let tr = pde_oracle::integrate(&p, &ts, &settings).stage(Stage::Pde)?;
            for st in &tr.states {
                io::write_profile(&out.out.join(format!("pde_t{}.csv", st.t)), &st.profile, Some(st.t)).stage(Stage::Io)?;
            }
            io::write_energy(&out.out.join("energy.csv"), &tr.energy_log).stage(Stage::Io)?;
            summary(
                &out.out,
                &json!({
                    "times": ts,
                    "dt": tr.dt_used,
                    "relative_energy_drift": tr.relative_energy_drift(),
                    "max_contamination": tr.max_contamination,
                    "energy": tr.states.iter().map(|s| s.energy).collect::<Vec<_>>(),
                }),
            )?;
        }
        Cmd::Stability { config: path, out } => {
            let cfg = config(&path)?;
            let r = harness::run_stability(&cfg)?;
            harness::emit_stability(&r, &out.out).stage(Stage::Io)?;
        }
        Cmd::Diagnose { config: path, out } => {
            let cfg = config(&path)?;
            let rec = harness::run_diagnostics(&cfg)?;
            io::write_json(&out.out.join("diagnostics.json"), &rec).stage(Stage::Io)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    gpist_core::init_threads_from_env();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
