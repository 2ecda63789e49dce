//! CSV and JSON readers and writers for profiles, scattering data, kernels and logs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::GpistError;
use crate::jost::{ContinuousData, DiscreteData, ScatteringData};
use crate::marchenko::{KernelField, KernelSet, MarchenkoKernels, System};
use crate::profile::FieldProfile;
use crate::spectral_core::{Grid1D, SpectralGrid};
use crate::C64;

fn write(path: &Path, s: &str) -> Result<(), GpistError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, s)?;
    Ok(())
}

pub(crate) fn read_text(path: &Path) -> Result<String, GpistError> {
    fs::read_to_string(path).map_err(|e| GpistError::Io(format!("{}: {e}", path.display())))
}

/// Rows of a numeric CSV after checking the header prefix.
fn read_rows(path: &Path, header: &[&str]) -> Result<(Vec<String>, Vec<Vec<f64>>), GpistError> {
    let text = read_text(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head: Vec<String> = lines
        .next()
        .ok_or_else(|| GpistError::Parse(format!("{}: empty file", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    if head.len() < header.len() || head.iter().zip(header).any(|(a, b)| a != b) {
        return Err(GpistError::Parse(format!("{}: expected header starting with {}", path.display(), header.join(","))));
    }
    let mut rows = Vec::new();
    for (k, l) in lines.enumerate() {
        let vals: Result<Vec<f64>, _> = l.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| GpistError::Parse(format!("{}: row {}: {e}", path.display(), k + 2)))?;
        if vals.len() != head.len() {
            return Err(GpistError::Parse(format!("{}: row {} has {} fields, expected {}", path.display(), k + 2, vals.len(), head.len())));
        }
        rows.push(vals);
    }
    Ok((head, rows))
}

pub fn profile_csv(p: &FieldProfile, t: Option<f64>) -> String {
    let mut s = String::from(if t.is_some() { "x,re_u,im_u,t\n" } else { "x,re_u,im_u\n" });
    for (x, u) in p.grid.xs().iter().zip(&p.u) {
        match t {
            Some(t) => writeln!(s, "{x},{},{},{t}", u.re, u.im),
            None => writeln!(s, "{x},{},{}", u.re, u.im),
        }
        .expect("write to string");
    }
    s
}

pub fn write_profile(path: &Path, p: &FieldProfile, t: Option<f64>) -> Result<(), GpistError> {
    write(path, &profile_csv(p, t))
}

/// Read `x,re_u,im_u` samples; the x column must be a uniform symmetric grid.
pub fn read_profile(path: &Path) -> Result<FieldProfile, GpistError> {
    let (_, rows) = read_rows(path, &["x", "re_u", "im_u"])?;
    let n = rows.len();
    if n < 16 {
        return Err(GpistError::Parse(format!("{}: need at least 16 samples, got {n}", path.display())));
    }
    let grid = Grid1D { x_min: rows[0][0], x_max: rows[n - 1][0], n };
    grid.validate()?;
    let h = grid.h();
    for (i, r) in rows.iter().enumerate() {
        if (r[0] - grid.x(i)).abs() > 1e-6 * h {
            return Err(GpistError::Parse(format!("{}: x column is not uniform at row {}", path.display(), i + 2)));
        }
    }
    FieldProfile::new(grid, rows.iter().map(|r| C64::new(r[1], r[2])).collect())
}

pub fn scattering_csv(c: &ContinuousData, t: Option<f64>) -> String {
    let mut s = String::from(if t.is_some() { "zeta,branch,re_a,im_a,re_b,im_b,t\n" } else { "zeta,branch,re_a,im_a,re_b,im_b\n" });
    for br in [1i8, -1] {
        let (a, b) = c.branch(br);
        for (k, z) in c.grid.zeta.iter().enumerate() {
            match t {
                Some(t) => writeln!(s, "{z},{br},{},{},{},{},{t}", a[k].re, a[k].im, b[k].re, b[k].im),
                None => writeln!(s, "{z},{br},{},{},{},{}", a[k].re, a[k].im, b[k].re, b[k].im),
            }
            .expect("write to string");
        }
    }
    s
}

pub fn write_scattering(path: &Path, c: &ContinuousData, t: Option<f64>) -> Result<(), GpistError> {
    write(path, &scattering_csv(c, t))
}

pub fn read_scattering(path: &Path) -> Result<ContinuousData, GpistError> {
    let (_, rows) = read_rows(path, &["zeta", "branch", "re_a", "im_a", "re_b", "im_b"])?;
    let pos: Vec<&Vec<f64>> = rows.iter().filter(|r| r[1] > 0.0).collect();
    let neg: Vec<&Vec<f64>> = rows.iter().filter(|r| r[1] < 0.0).collect();
    if pos.len() != neg.len() || pos.is_empty() {
        return Err(GpistError::Parse(format!("{}: both branches must have the same nodes", path.display())));
    }
    let nodes: Vec<f64> = pos.iter().map(|r| r[0]).collect();
    let grid = SpectralGrid::from_nodes(&nodes)?;
    if grid.zeta != nodes || neg.iter().map(|r| r[0]).collect::<Vec<_>>() != nodes {
        return Err(GpistError::Parse(format!("{}: nodes must be sorted and symmetric about 0", path.display())));
    }
    let col = |rs: &[&Vec<f64>], i: usize| rs.iter().map(|r| C64::new(r[i], r[i + 1])).collect::<Vec<_>>();
    Ok(ContinuousData { a_pos: col(&pos, 2), b_pos: col(&pos, 4), a_neg: col(&neg, 2), b_neg: col(&neg, 4), grid })
}

/// JSON sidecar for the discrete data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSidecar {
    pub lambda0: f64,
    pub nu0: f64,
    pub re_b0: f64,
    pub im_b0: f64,
    pub re_aprime: f64,
    pub im_aprime: f64,
    pub mu0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

impl DiscreteSidecar {
    pub fn new(d: &DiscreteData, t: Option<f64>) -> DiscreteSidecar {
        DiscreteSidecar {
            lambda0: d.lambda0,
            nu0: d.nu0,
            re_b0: d.b0.re,
            im_b0: d.b0.im,
            re_aprime: d.a_prime0.re,
            im_aprime: d.a_prime0.im,
            mu0: d.mu0,
            t,
        }
    }

    pub fn to_discrete(&self) -> DiscreteData {
        let b0 = C64::new(self.re_b0, self.im_b0);
        let ap = C64::new(self.re_aprime, self.im_aprime);
        let m = b0 / (ap * self.nu0);
        DiscreteData {
            lambda0: self.lambda0,
            nu0: self.nu0,
            b0,
            a_prime0: ap,
            a_prime0_integral: ap,
            mu0: self.mu0,
            mu0_imag: m.im,
            min_abs_a: 0.0,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), GpistError> {
    write(path, &(serde_json::to_string_pretty(v)? + "\n"))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, GpistError> {
    let s = read_text(path)?;
    serde_json::from_str(&s).map_err(|e| GpistError::Parse(format!("{}: {e}", path.display())))
}

/// Write `<stem>.csv` and its sidecar `<stem>.json`.
pub fn write_scattering_data(csv: &Path, data: &ScatteringData, t: Option<f64>) -> Result<(), GpistError> {
    write_scattering(csv, &data.continuous, t)?;
    write_json(&csv.with_extension("json"), &DiscreteSidecar::new(&data.discrete, t))
}

/// Read scattering CSV plus sidecar; the sidecar defaults to `<stem>.json`.
pub fn read_scattering_data(csv: &Path, sidecar: Option<&Path>) -> Result<ScatteringData, GpistError> {
    let continuous = read_scattering(csv)?;
    let side = sidecar.map(Path::to_path_buf).unwrap_or_else(|| csv.with_extension("json"));
    let d: DiscreteSidecar = read_json(&side)?;
    Ok(ScatteringData { continuous, discrete: d.to_discrete() })
}

pub fn kernels_csv(ks: &KernelSet) -> String {
    let mut s = String::from("z,F1,F2,F2prime\n");
    for i in 0..ks.len() {
        writeln!(s, "{},{},{},{}", ks.z(i), ks.f1[i], ks.f2[i], ks.f2p[i]).expect("write to string");
    }
    s
}

pub fn write_kernels(dir: &Path, k: &MarchenkoKernels) -> Result<(), GpistError> {
    write(&dir.join("kernels.csv"), &kernels_csv(&k.right))?;
    if let Some(left) = k.left_samples() {
        let mut s = String::from("z,F1,F2,F2prime\n");
        for r in left {
            writeln!(s, "{},{},{},{}", r[0], r[1], r[2], r[3]).expect("write to string");
        }
        write(&dir.join("left_kernels.csv"), &s)?;
    }
    Ok(())
}

pub fn write_kernel_field(path: &Path, f: &KernelField) -> Result<(), GpistError> {
    let mut s = String::from("x,p,system,re_psi11,im_psi11,re_psi12,im_psi12\n");
    for st in &f.stations {
        let sys = match st.system {
            System::Right => "right",
            System::Reflected => "reflected",
        };
        for (j, p) in f.p_grid.iter().enumerate() {
            writeln!(s, "{},{p},{sys},{},{},{},{}", st.x, st.psi11[j].re, st.psi11[j].im, st.psi12[j].re, st.psi12[j].im).expect("write to string");
        }
    }
    write(path, &s)
}

pub fn write_energy(path: &Path, log: &[(f64, f64)]) -> Result<(), GpistError> {
    let mut s = String::from("t,H\n");
    for (t, h) in log {
        writeln!(s, "{t},{h}").expect("write to string");
    }
    write(path, &s)
}

/// Plain CSV with a header and numeric rows.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), GpistError> {
    let mut s = header.join(",") + "\n";
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        s += &line.join(",");
        s.push('\n');
    }
    write(path, &s)
}

/// Fails if any emitted number is NaN or infinite.
pub fn check_finite(label: &str, values: impl IntoIterator<Item = f64>) -> Result<(), GpistError> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(GpistError::InvalidInput(format!("{label} contains non-finite values")));
    }
    Ok(())
}
