//! Experiment configuration, perturbation generators, the stability experiment
//! and the spectral diagnostics.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GpistError, Stage, StageError, WithStage};
use crate::evolution::evolve;
use crate::io;
use crate::jost::{self, ScatteringData, WRectangle, ZeroLimitRecord};
use crate::marchenko::{self, MarchenkoSettings, ReconstructionResult};
use crate::pde_oracle::{self, PdeSettings, Trajectory};
use crate::profile::{interpolate_uniform, FieldProfile};
use crate::spectral_core::{black_soliton, Grid1D, SpectralGrid};
use crate::tolerances::Tolerances;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GaussianReal,
    GaussianComplex,
    AlgebraicX4,
    RandomBump,
}

impl Family {
    pub fn parse(s: &str) -> Result<Family, GpistError> {
        match s.trim() {
            "gaussian_real" => Ok(Family::GaussianReal),
            "gaussian_complex" => Ok(Family::GaussianComplex),
            "algebraic_x4" => Ok(Family::AlgebraicX4),
            "random_bump" => Ok(Family::RandomBump),
            other => Err(GpistError::Parse(format!(
                "unknown perturbation family '{other}' (expected gaussian_real, gaussian_complex, algebraic_x4 or random_bump)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::GaussianReal => "gaussian_real",
            Family::GaussianComplex => "gaussian_complex",
            Family::AlgebraicX4 => "algebraic_x4",
            Family::RandomBump => "random_bump",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub epsilon: f64,
    pub family: Family,
    pub seed: u64,
    pub x_max: f64,
    pub h: f64,
    pub zeta_max: f64,
    pub n_zeta: usize,
    pub zeta_refine_min: f64,
    pub n_zeta_refine: usize,
    pub p_max: f64,
    pub n_p: usize,
    /// Target spacing of the reconstruction stations.
    pub station_spacing: f64,
    /// Half-width of the interior window on which distances are measured.
    pub window: f64,
    pub overlap: f64,
    pub times: Vec<f64>,
    pub pde: bool,
    pub pde_dt: f64,
    pub pde_fourth_order: bool,
    pub left_marchenko: bool,
    pub symmetry_check: bool,
    pub contour_n_side: usize,
    /// Lower limit of the kernel tail integrals.
    pub tail_from: f64,
    /// Half-width of the best-shift search around 2 lambda0 t.
    pub shift_search: f64,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            epsilon: 0.05,
            family: Family::GaussianReal,
            seed: 0,
            x_max: 40.0,
            h: 0.02,
            zeta_max: 30.0,
            n_zeta: 4096,
            zeta_refine_min: 1e-3,
            n_zeta_refine: 8,
            p_max: 12.0,
            n_p: 200,
            station_spacing: 0.24,
            window: 35.0,
            overlap: 1.0,
            times: vec![0.5, 1.0, 2.0],
            pde: true,
            pde_dt: 5e-5,
            pde_fourth_order: false,
            left_marchenko: true,
            symmetry_check: true,
            contour_n_side: 100,
            tail_from: 5.0,
            shift_search: 0.5,
            tolerances: Tolerances::default(),
        }
    }
}

fn parse_f64(k: &str, v: &str) -> Result<f64, GpistError> {
    v.parse::<f64>().map_err(|_| GpistError::Parse(format!("{k}: '{v}' is not a number")))
}

fn parse_usize(k: &str, v: &str) -> Result<usize, GpistError> {
    v.parse::<usize>().map_err(|_| GpistError::Parse(format!("{k}: '{v}' is not a nonnegative integer")))
}

fn parse_bool(k: &str, v: &str) -> Result<bool, GpistError> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(GpistError::Parse(format!("{k}: '{v}' is not a boolean"))),
    }
}

impl ExperimentConfig {
    /// Parse `key = value` lines; `#` starts a comment. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<ExperimentConfig, GpistError> {
        let mut c = ExperimentConfig::default();
        let mut window_set = false;
        let mut seen = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| GpistError::Parse(format!("line {}: expected 'key = value'", ln + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if seen.insert(k.to_string(), ln + 1).is_some() {
                return Err(GpistError::Parse(format!("line {}: duplicate key '{k}'", ln + 1)));
            }
            let t = &mut c.tolerances;
            match k {
                "epsilon" => c.epsilon = parse_f64(k, v)?,
                "family" => c.family = Family::parse(v)?,
                "seed" => c.seed = v.parse().map_err(|_| GpistError::Parse(format!("seed: '{v}' is not an integer")))?,
                "x_max" => c.x_max = parse_f64(k, v)?,
                "h" => c.h = parse_f64(k, v)?,
                "zeta_max" => c.zeta_max = parse_f64(k, v)?,
                "n_zeta" => c.n_zeta = parse_usize(k, v)?,
                "zeta_refine_min" => c.zeta_refine_min = parse_f64(k, v)?,
                "n_zeta_refine" => c.n_zeta_refine = parse_usize(k, v)?,
                "p_max" => c.p_max = parse_f64(k, v)?,
                "n_p" => c.n_p = parse_usize(k, v)?,
                "station_spacing" => c.station_spacing = parse_f64(k, v)?,
                "window" => {
                    c.window = parse_f64(k, v)?;
                    window_set = true;
                }
                "overlap" => c.overlap = parse_f64(k, v)?,
                "times" => {
                    c.times = v
                        .split(',')
                        .map(|s| s.trim())
                        .filter(|s| !s.is_empty())
                        .map(|s| parse_f64(k, s))
                        .collect::<Result<_, _>>()?
                }
                "pde" => c.pde = parse_bool(k, v)?,
                "pde_dt" => c.pde_dt = parse_f64(k, v)?,
                "pde_fourth_order" => c.pde_fourth_order = parse_bool(k, v)?,
                "left_marchenko" => c.left_marchenko = parse_bool(k, v)?,
                "symmetry_check" => c.symmetry_check = parse_bool(k, v)?,
                "contour_n_side" => c.contour_n_side = parse_usize(k, v)?,
                "tail_from" => c.tail_from = parse_f64(k, v)?,
                "shift_search" => c.shift_search = parse_f64(k, v)?,
                "tol_norm" => t.tol_norm = parse_f64(k, v)?,
                "tol_zero" => t.tol_zero = parse_f64(k, v)?,
                "tol_real" => t.tol_real = parse_f64(k, v)?,
                "tol_b0" => t.tol_b0 = parse_f64(k, v)?,
                "tol_deriv" => t.tol_deriv = parse_f64(k, v)?,
                "tol_leak" => t.tol_leak = parse_f64(k, v)?,
                "tol_res" => t.tol_res = parse_f64(k, v)?,
                "tol_bc" => t.tol_bc = parse_f64(k, v)?,
                "cond_limit" => t.cond_limit = parse_f64(k, v)?,
                "tol_contamination" => t.tol_contamination = parse_f64(k, v)?,
                "tol_energy" => t.tol_energy = parse_f64(k, v)?,
                _ => return Err(GpistError::Parse(format!("line {}: unknown key '{k}'", ln + 1))),
            }
        }
        if !window_set {
            c.window = c.x_max - 5.0;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig, GpistError> {
        let text = io::read_text(path)?;
        ExperimentConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<(), GpistError> {
        let bad = |m: String| Err(GpistError::InvalidInput(m));
        // epsilon = 0 is admitted as the noise-floor run of the unperturbed soliton.
        if !(0.0..=0.2).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 0.2], got {}", self.epsilon));
        }
        if self.times.iter().any(|t| !(*t >= 0.0)) || self.times.windows(2).any(|w| w[1] < w[0]) {
            return bad("times must be nonnegative and sorted".into());
        }
        if !(self.window > 0.0 && self.window <= self.x_max) {
            return bad(format!("window {} must lie in (0, x_max]", self.window));
        }
        if self.contour_n_side < 8 {
            return bad("contour_n_side must be at least 8".into());
        }
        self.grid()?;
        self.spectral_grid()?;
        self.marchenko().validate()
    }

    pub fn grid(&self) -> Result<Grid1D, GpistError> {
        Grid1D::symmetric(self.x_max, self.h)
    }

    pub fn spectral_grid(&self) -> Result<SpectralGrid, GpistError> {
        SpectralGrid::new(self.zeta_max, self.n_zeta, self.zeta_refine_min, self.n_zeta_refine)
    }

    pub fn marchenko(&self) -> MarchenkoSettings {
        MarchenkoSettings {
            p_max: self.p_max,
            n_p: self.n_p,
            overlap: self.overlap,
            symmetry_check: self.symmetry_check,
            use_left: self.left_marchenko,
        }
    }
}

/// Value and first three derivatives of a perturbation shape.
fn gaussian_derivs(a: f64, y: f64) -> [f64; 4] {
    let g = (-a * y * y).exp();
    [
        g,
        -2.0 * a * y * g,
        (4.0 * a * a * y * y - 2.0 * a) * g,
        (-8.0 * a * a * a * y * y * y + 12.0 * a * a * y) * g,
    ]
}

fn algebraic_derivs(x: f64) -> [f64; 4] {
    let s = 1.0 + x * x;
    [
        s.powf(-2.5),
        -5.0 * x * s.powf(-3.5),
        -5.0 * s.powf(-3.5) + 35.0 * x * x * s.powf(-4.5),
        105.0 * x * s.powf(-4.5) - 315.0 * x * x * x * s.powf(-5.5),
    ]
}

/// Analytic perturbation shape before normalization.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Gaussian { imaginary: bool },
    Algebraic,
    /// Sum of (amplitude, rate, center) Gaussians a e^{-b (x - c)^2}.
    Bumps(Vec<(f64, f64, f64)>),
}

impl Shape {
    pub fn for_family(family: Family, seed: u64) -> Shape {
        match family {
            Family::GaussianReal => Shape::Gaussian { imaginary: false },
            Family::GaussianComplex => Shape::Gaussian { imaginary: true },
            Family::AlgebraicX4 => Shape::Algebraic,
            Family::RandomBump => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Shape::Bumps(
                    (0..3)
                        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.15..0.6), rng.gen_range(-3.0..3.0)))
                        .collect(),
                )
            }
        }
    }

    /// d^k u1 / dx^k for k = 0..=3.
    pub fn derivs(&self, x: f64) -> [C64; 4] {
        let re = |d: [f64; 4]| d.map(|v| C64::new(v, 0.0));
        match self {
            Shape::Gaussian { imaginary: false } => re(gaussian_derivs(0.25, x)),
            Shape::Gaussian { imaginary: true } => gaussian_derivs(0.25, x).map(|v| C64::new(0.0, v)),
            Shape::Algebraic => re(algebraic_derivs(x)),
            Shape::Bumps(b) => {
                let mut s = [0.0; 4];
                for &(a, r, c) in b {
                    let d = gaussian_derivs(r, x - c);
                    for k in 0..4 {
                        s[k] += a * d[k];
                    }
                }
                re(s)
            }
        }
    }
}

fn weighted(shape: &Shape, x: f64, k: usize) -> f64 {
    (1.0 + x * x).powi(2) * shape.derivs(x)[k].norm()
}

/// sup_x <x>^4 |d^k u1| for k = 0..=3 on a uniform grid of spacing `h` over [-x_max, x_max],
/// with each discrete maximum polished by golden-section search.
pub fn weighted_sups(shape: &Shape, x_max: f64, h: f64) -> [f64; 4] {
    let n = (2.0 * x_max / h).round() as usize + 1;
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        let (mut best, mut bx) = (0.0, 0.0);
        for i in 0..n {
            let x = -x_max + i as f64 * h;
            let v = weighted(shape, x, k);
            if v > best {
                best = v;
                bx = x;
            }
        }
        let (mut a, mut b) = (bx - h, bx + h);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        while b - a > 1e-12 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if weighted(shape, c, k) > weighted(shape, d, k) {
                b = d;
            } else {
                a = c;
            }
        }
        *o = best.max(weighted(shape, 0.5 * (a + b), k));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub family: Family,
    pub epsilon: f64,
    pub seed: u64,
    pub alpha: f64,
    /// Weighted sups of alpha u1 for k = 0..=3 on the refined grid.
    pub normalized_sups: [f64; 4],
}

/// u0 = U0 + epsilon alpha u1 with alpha = 1 / max_k sup <x>^4 |d^k u1|, certified on a
/// grid 10 times finer than the profile grid.
pub fn make_perturbation(family: Family, epsilon: f64, seed: u64, grid: Grid1D) -> Result<(FieldProfile, Perturbation), GpistError> {
    let shape = Shape::for_family(family, seed);
    let fine = grid.h() / 10.0;
    let sups = weighted_sups(&shape, grid.x_max, fine);
    let top = sups.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0 && top.is_finite()) {
        return Err(GpistError::NormalizationFailed { order: 0, value: top });
    }
    let alpha = 1.0 / top;
    let normalized_sups = sups.map(|s| s * alpha);
    for (k, &v) in normalized_sups.iter().enumerate() {
        if !(v <= 1.0 + 1e-12) {
            return Err(GpistError::NormalizationFailed { order: k, value: v });
        }
    }
    let profile = if epsilon == 0.0 {
        FieldProfile::black_soliton(grid)
    } else {
        FieldProfile::from_fn(grid, |x| C64::new(black_soliton(x), 0.0) + shape.derivs(x)[0] * (epsilon * alpha))?
    };
    profile.check_asymptotes(1e-3)?;
    Ok((profile, Perturbation { family, epsilon, seed, alpha, normalized_sups }))
}

/// Forward stage for a config: perturbed profile, continuous and discrete data.
pub fn forward_stage(cfg: &ExperimentConfig) -> Result<(FieldProfile, Perturbation, ScatteringData), StageError> {
    let grid = cfg.grid().stage(Stage::Config)?;
    let sg = cfg.spectral_grid().stage(Stage::Config)?;
    let (profile, pert) = make_perturbation(cfg.family, cfg.epsilon, cfg.seed, grid).stage(Stage::Perturbation)?;
    let continuous = jost::transition_coefficients(&profile, &sg).stage(Stage::Forward)?;
    let discrete = jost::discrete_data(&profile, &cfg.tolerances).stage(Stage::Discrete)?;
    Ok((profile, pert, ScatteringData { continuous, discrete }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRow {
    pub t: f64,
    /// 2 lambda0 t.
    pub shift: f64,
    /// sup over the window of |u(t, x + shift) - U0(x)|.
    pub sup_distance: f64,
    pub best_shift: f64,
    pub best_sup_distance: f64,
    pub d_e: f64,
    pub oracle_linf: Option<f64>,
    pub oracle_l2: Option<f64>,
    pub x_center: f64,
    pub left_right_gap: f64,
    pub symmetry_gap: f64,
    pub boundary_residual: f64,
    pub max_cond: f64,
    /// Largest discrete L2 norm over y of Psi - Psi^(1) across stations.
    pub max_remainder: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub note: String,
    pub family: Family,
    pub epsilon: f64,
    pub seed: u64,
    pub alpha: f64,
    pub lambda0: f64,
    pub nu0: f64,
    pub b0: [f64; 2],
    pub mu0: f64,
    pub window: f64,
    pub n_stations: usize,
    pub rows: Vec<TimeRow>,
    pub max_sup_distance: f64,
    /// max sup-distance / epsilon (absent for epsilon = 0).
    pub c_empirical: Option<f64>,
    /// Largest relative improvement 1 - best/sup of the best-shift refinement.
    pub max_best_shift_gain: f64,
    pub max_oracle_linf: Option<f64>,
    pub pde_energy_drift: Option<f64>,
    pub seconds: f64,
}

pub struct StabilityRun {
    pub report: StabilityReport,
    pub profile: FieldProfile,
    pub data: ScatteringData,
    pub reconstructions: Vec<ReconstructionResult>,
    pub pde: Option<Trajectory>,
}

fn sup_against_soliton(xs: &[f64], u: &[C64], shift: f64, window: f64) -> f64 {
    xs.iter()
        .zip(u)
        .filter(|(x, _)| x.abs() <= window)
        .fold(0.0f64, |m, (x, v)| m.max((v - black_soliton(x - shift)).norm()))
}

/// Minimize the sup-distance over shifts in [center - w, center + w].
fn best_shift(xs: &[f64], u: &[C64], center: f64, w: f64, window: f64) -> (f64, f64) {
    let f = |s: f64| sup_against_soliton(xs, u, s, window);
    let n = 41;
    let mut best = (center, f(center));
    for i in 0..n {
        let s = center - w + 2.0 * w * i as f64 / (n - 1) as f64;
        let v = f(s);
        if v < best.1 {
            best = (s, v);
        }
    }
    let step = 2.0 * w / (n - 1) as f64;
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-9 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let s = 0.5 * (a + b);
    let v = f(s);
    if v < best.1 {
        (s, v)
    } else {
        best
    }
}

/// Stability experiment: distances of the reconstructed u(t) to the
/// translated black soliton, with the PDE solution as an independent oracle.
pub fn run_stability(cfg: &ExperimentConfig) -> Result<StabilityRun, StageError> {
    let start = Instant::now();
    cfg.validate().stage(Stage::Config)?;
    let (profile, pert, data) = forward_stage(cfg)?;
    let d = data.discrete;
    let settings = cfg.marchenko();
    let pde = if cfg.pde {
        let ps = PdeSettings {
            dt: cfg.pde_dt,
            fourth_order: cfg.pde_fourth_order,
            tol_contamination: cfg.tolerances.tol_contamination,
            ..Default::default()
        };
        Some(pde_oracle::integrate(&profile, &cfg.times, &ps).stage(Stage::Pde)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut recs = Vec::new();
    let mut n_stations = 0;
    for (k, &t) in cfg.times.iter().enumerate() {
        let ev = evolve(&data, t);
        let (_, field, rec) = marchenko::reconstruct(&ev, cfg.window, cfg.station_spacing, &settings, &cfg.tolerances).map_err(|e| {
            let stage = if matches!(e, GpistError::ImaginaryLeak { .. }) { Stage::Kernels } else { Stage::Marchenko };
            StageError { stage, source: e }
        })?;
        if rec.boundary_residual > cfg.tolerances.tol_bc {
            return Err(StageError {
                stage: Stage::Reconstruction,
                source: GpistError::ResidualTooLarge { x: f64::NAN, residual: rec.boundary_residual, tol: cfg.tolerances.tol_bc },
            });
        }
        io::check_finite("reconstruction", rec.profile.u.iter().flat_map(|v| [v.re, v.im])).stage(Stage::Reconstruction)?;
        let xs = rec.profile.grid.xs();
        n_stations = xs.len();
        let shift = 2.0 * d.lambda0 * t;
        let sup = sup_against_soliton(&xs, &rec.profile.u, shift, cfg.window);
        let (bs, bsup) = best_shift(&xs, &rec.profile.u, shift, cfg.shift_search, cfg.window);
        let hs = rec.profile.h();
        let shifted: Vec<C64> = xs
            .iter()
            .map(|x| if shift == 0.0 { rec.profile.interpolate(*x) } else { interpolate_uniform(xs[0], hs, &rec.profile.u, x + shift) })
            .collect();
        let tau = FieldProfile { grid: rec.profile.grid, u: shifted };
        let u0s = FieldProfile { grid: rec.profile.grid, u: xs.iter().map(|x| C64::new(black_soliton(*x), 0.0)).collect() };
        let d_e = pde_oracle::energy_distance(&tau, &u0s).stage(Stage::Diagnostics)?;
        let (oracle_linf, oracle_l2) = match &pde {
            Some(tr) => {
                let st = &tr.states[k];
                let mut linf: f64 = 0.0;
                let mut l2 = 0.0;
                for (x, v) in xs.iter().zip(&rec.profile.u) {
                    if x.abs() > cfg.window {
                        continue;
                    }
                    let w = st.profile.interpolate(*x);
                    linf = linf.max((w - v).norm());
                    l2 += (w - v).norm_sqr() * hs;
                }
                (Some(linf), Some(l2.sqrt()))
            }
            None => (None, None),
        };
        let max_remainder = field.stations.iter().map(|s| s.remainder_norm(settings.dy())).fold(0.0, f64::max);
        rows.push(TimeRow {
            t,
            shift,
            sup_distance: sup,
            best_shift: bs,
            best_sup_distance: bsup,
            d_e,
            oracle_linf,
            oracle_l2,
            x_center: rec.x_center,
            left_right_gap: rec.left_right_gap,
            symmetry_gap: rec.symmetry_gap,
            boundary_residual: rec.boundary_residual,
            max_cond: rec.max_cond,
            max_remainder,
        });
        recs.push(rec);
    }
    let max_sup = rows.iter().map(|r| r.sup_distance).fold(0.0, f64::max);
    let gain = rows
        .iter()
        .map(|r| if r.sup_distance > 0.0 { 1.0 - r.best_sup_distance / r.sup_distance } else { 0.0 })
        .fold(0.0, f64::max);
    let max_oracle = if pde.is_some() { Some(rows.iter().filter_map(|r| r.oracle_linf).fold(0.0, f64::max)) } else { None };
    let report = StabilityReport {
        note: format!(
            "finite horizon: distances are measured at t = {:?} only; the statement for all t >= 0 is not tested",
            cfg.times
        ),
        family: cfg.family,
        epsilon: cfg.epsilon,
        seed: cfg.seed,
        alpha: pert.alpha,
        lambda0: d.lambda0,
        nu0: d.nu0,
        b0: [d.b0.re, d.b0.im],
        mu0: d.mu0,
        window: cfg.window,
        n_stations,
        rows,
        max_sup_distance: max_sup,
        c_empirical: if cfg.epsilon > 0.0 { Some(max_sup / cfg.epsilon) } else { None },
        max_best_shift_gain: gain,
        max_oracle_linf: max_oracle,
        pde_energy_drift: pde.as_ref().map(|p| p.relative_energy_drift()),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(StabilityRun { report, profile, data, reconstructions: recs, pde })
}

/// Write stability.csv, summary.json, per-time reconstructions and PDE outputs into `dir`.
pub fn emit_stability(run: &StabilityRun, dir: &Path) -> Result<(), GpistError> {
    let r = &run.report;
    let with_oracle = run.pde.is_some();
    let mut header = vec!["t", "shift", "sup_distance", "best_shift", "best_sup_distance", "d_e"];
    if with_oracle {
        header.extend(["oracle_linf", "oracle_l2"]);
    }
    header.extend(["x_center", "left_right_gap", "symmetry_gap", "boundary_residual", "max_cond", "max_remainder"]);
    let rows: Vec<Vec<f64>> = r
        .rows
        .iter()
        .map(|w| {
            let mut v = vec![w.t, w.shift, w.sup_distance, w.best_shift, w.best_sup_distance, w.d_e];
            if with_oracle {
                v.extend([w.oracle_linf.unwrap_or(f64::NAN), w.oracle_l2.unwrap_or(f64::NAN)]);
            }
            v.extend([w.x_center, w.left_right_gap, w.symmetry_gap, w.boundary_residual, w.max_cond, w.max_remainder]);
            v
        })
        .collect();
    io::check_finite("stability table", rows.iter().flatten().copied())?;
    io::write_table(&dir.join("stability.csv"), &header, &rows)?;
    io::write_json(&dir.join("summary.json"), r)?;
    io::write_profile(&dir.join("initial.csv"), &run.profile, Some(0.0))?;
    for rec in &run.reconstructions {
        io::write_profile(&dir.join(format!("reconstruction_t{}.csv", rec.t)), &rec.profile, Some(rec.t))?;
    }
    if let Some(tr) = &run.pde {
        for st in &tr.states {
            io::write_profile(&dir.join(format!("pde_t{}.csv", st.t)), &st.profile, Some(st.t))?;
        }
        io::write_energy(&dir.join("energy.csv"), &tr.energy_log)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub family: Family,
    pub epsilon: f64,
    pub alpha: f64,
    pub profile_decay_weight: [f64; 4],
    pub lambda0: f64,
    pub nu0: f64,
    pub b0: [f64; 2],
    pub mu0: f64,
    pub a_prime_fd: [f64; 2],
    pub a_prime_integral: [f64; 2],
    pub min_abs_a: f64,
    pub zero_count: [f64; 2],
    pub zero_limit: ZeroLimitRecord,
    pub normalization_defect: f64,
    pub symmetry_defect: f64,
    /// max |b| <zeta>^3 over the grid.
    pub max_b_weighted: f64,
    /// max |b| max(|zeta|, |zeta|^3), the constant of the two-sided decay bound times epsilon.
    pub max_b_two_sided: f64,
    /// Integral over z >= tail_from of the continuous kernel parts at t = 0.
    pub kernel_tail: f64,
    /// ||F1 continuous||^2 / int |b/a|^2 dzeta.
    pub plancherel_ratio: f64,
    /// The quantities above divided by epsilon (absent for epsilon = 0).
    pub c_lambda0: Option<f64>,
    pub c_b0: Option<f64>,
    pub c_mu0: Option<f64>,
    pub c_b_decay: Option<f64>,
    pub c_kernel_tail: Option<f64>,
    pub seconds: f64,
}

/// Spectral diagnostics: zero count, small-zeta fits, decay constants and kernel tails.
pub fn run_diagnostics(cfg: &ExperimentConfig) -> Result<DiagnosticRecord, StageError> {
    let start = Instant::now();
    cfg.validate().stage(Stage::Config)?;
    let (profile, pert, data) = forward_stage(cfg)?;
    let c = &data.continuous;
    let d = data.discrete;
    let count = jost::zero_count(&profile, &WRectangle::default(), cfg.contour_n_side).stage(Stage::Diagnostics)?;
    let zl = jost::zero_limit_diagnostic(c);
    let g = &c.grid;
    let mut max_bw: f64 = 0.0;
    let mut max_b2: f64 = 0.0;
    let mut c_int = 0.0;
    for br in [1i8, -1] {
        let (a, b) = c.branch(br);
        for k in 0..g.len() {
            let z = g.zeta[k].abs();
            max_bw = max_bw.max(b[k].norm() * (1.0 + z * z).powf(1.5));
            max_b2 = max_b2.max(b[k].norm() * z.max(z * z * z));
            c_int += g.weight[k] * (b[k] / a[k]).norm_sqr();
        }
    }
    let dy = cfg.marchenko().dy();
    let k_hi = ((2.0 * cfg.x_max + 2.0 * cfg.p_max) / dy).ceil() as i64;
    let ks = marchenko::kernel_set(&data, 0, k_hi, dy, cfg.tolerances.tol_leak).stage(Stage::Kernels)?;
    let tail = ks.tail_integral(cfg.tail_from);
    let full = marchenko::kernel_set(&data, -k_hi, k_hi, dy, cfg.tolerances.tol_leak).stage(Stage::Kernels)?;
    let plancherel = if c_int > 0.0 { full.f1c_l2_sq() / c_int } else { 0.0 };
    let eps = cfg.epsilon;
    let per = |v: f64| if eps > 0.0 { Some(v / eps) } else { None };
    let rec = DiagnosticRecord {
        family: cfg.family,
        epsilon: eps,
        alpha: pert.alpha,
        profile_decay_weight: profile.decay_weight(),
        lambda0: d.lambda0,
        nu0: d.nu0,
        b0: [d.b0.re, d.b0.im],
        mu0: d.mu0,
        a_prime_fd: [d.a_prime0.re, d.a_prime0.im],
        a_prime_integral: [d.a_prime0_integral.re, d.a_prime0_integral.im],
        min_abs_a: d.min_abs_a,
        zero_count: [count.re, count.im],
        zero_limit: zl,
        normalization_defect: c.normalization_defect(),
        symmetry_defect: c.symmetry_defect(),
        max_b_weighted: max_bw,
        max_b_two_sided: max_b2,
        kernel_tail: tail,
        plancherel_ratio: plancherel,
        c_lambda0: per(d.lambda0.abs()),
        c_b0: per((d.b0 - C64::new(0.0, 1.0)).norm()),
        c_mu0: per((d.mu0 + 2.0).abs()),
        c_b_decay: per(max_bw),
        c_kernel_tail: per(tail),
        seconds: start.elapsed().as_secs_f64(),
    };
    io::check_finite("diagnostics", serde_json::to_value(&rec).ok().into_iter().flat_map(|v| numbers(&v))).stage(Stage::Diagnostics)?;
    Ok(rec)
}

fn numbers(v: &serde_json::Value) -> Vec<f64> {
    match v {
        serde_json::Value::Number(n) => n.as_f64().into_iter().collect(),
        serde_json::Value::Array(a) => a.iter().flat_map(numbers).collect(),
        serde_json::Value::Object(o) => o.values().flat_map(numbers).collect(),
        _ => Vec::new(),
    }
}
