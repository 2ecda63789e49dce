use gpist_core::harness::*;
use gpist_core::spectral_core::Grid1D;
use gpist_core::{GpistError, Stage};
use proptest::prelude::*;

const SMALL: &str = "\
# reduced sizes for tests
x_max = 20
h = 0.05
zeta_max = 15
n_zeta = 1024
n_p = 120
station_spacing = 1.0
times = 0.5, 1
pde_dt = 4e-4
contour_n_side = 40
";

fn small(extra: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!("{SMALL}{extra}")).unwrap()
}

#[test]
fn normalization_constants_are_frozen() {
    // 1 / sup <x>^4 |d^3 u1|, maximized independently with 30-digit arithmetic.
    let g = Grid1D::symmetric(40.0, 0.02).unwrap();
    let (_, p) = make_perturbation(Family::GaussianReal, 0.05, 0, g).unwrap();
    assert!((p.alpha - 0.0377829730494052).abs() < 1e-12);
    assert!((p.normalized_sups[3] - 1.0).abs() < 1e-12);
    let (_, p) = make_perturbation(Family::AlgebraicX4, 0.05, 0, g).unwrap();
    assert!((p.alpha - 0.0523405993206793).abs() < 1e-12);
    assert!((p.normalized_sups[3] - 1.0).abs() < 1e-12);
    // The remaining orders hold with margin.
    assert!(p.normalized_sups[..3].iter().all(|&s| s < 0.3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn random_bumps_are_certified(seed in 0u64..10_000) {
        let g = Grid1D::symmetric(20.0, 0.05).unwrap();
        let (u, p) = make_perturbation(Family::RandomBump, 0.05, seed, g).unwrap();
        prop_assert!(p.normalized_sups.iter().all(|&s| s <= 1.0 + 1e-12));
        prop_assert!((p.normalized_sups.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
        prop_assert!(u.check_asymptotes(1e-3).is_ok());
    }

    #[test]
    fn config_round_trips_through_text(eps in 0.0f64..0.2, n_p in 20usize..400, spacing in 0.05f64..2.0, pde in any::<bool>(), t in prop::collection::vec(0.0f64..5.0, 1..5)) {
        let mut times = t.clone();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let list: Vec<String> = times.iter().map(|v| v.to_string()).collect();
        let text = format!("epsilon = {eps}\nn_p = {n_p}\nstation_spacing = {spacing}\npde = {pde}\ntimes = {}\n", list.join(", "));
        let c = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(c.epsilon, eps);
        prop_assert_eq!(c.n_p, n_p);
        prop_assert_eq!(c.station_spacing, spacing);
        prop_assert_eq!(c.pde, pde);
        prop_assert_eq!(c.times, times);
    }
}

#[test]
fn config_errors_are_parse_or_input_errors() {
    assert!(matches!(ExperimentConfig::parse("nonsense"), Err(GpistError::Parse(_))));
    assert!(matches!(ExperimentConfig::parse("n_p = -3"), Err(GpistError::Parse(_))));
    assert!(matches!(ExperimentConfig::parse("family = square"), Err(GpistError::Parse(_))));
    assert!(matches!(ExperimentConfig::parse("epsilon = 0.3"), Err(GpistError::InvalidInput(_))));
    assert!(matches!(ExperimentConfig::parse("times = -1"), Err(GpistError::InvalidInput(_))));
}

#[test]
fn stability_outputs_are_deterministic() {
    let cfg = small("epsilon = 0.02\nfamily = random_bump\nseed = 5\n");
    let base = std::env::temp_dir().join(format!("gpist-det-{}", std::process::id()));
    let mut files = Vec::new();
    for k in 0..2 {
        let run = run_stability(&cfg).unwrap();
        let dir = base.join(k.to_string());
        emit_stability(&run, &dir).unwrap();
        files.push((std::fs::read(dir.join("stability.csv")).unwrap(), std::fs::read(dir.join("reconstruction_t1.csv")).unwrap()));
    }
    std::fs::remove_dir_all(&base).ok();
    assert_eq!(files[0], files[1]);
}

#[test]
fn stability_report_invariants() {
    let cfg = small("epsilon = 0.05\n");
    let r = run_stability(&cfg).unwrap().report;
    for row in &r.rows {
        assert_eq!(row.shift, 2.0 * r.lambda0 * row.t);
        assert!(row.best_sup_distance <= row.sup_distance);
        assert!(row.sup_distance <= 3.0 * cfg.epsilon);
        assert!(row.oracle_linf.unwrap() <= 5e-3);
        // The best translation sits at the O(epsilon) static offset of the soliton center.
        assert!((row.best_shift - row.shift - row.x_center).abs() < 1e-3);
    }
    assert_eq!(r.c_empirical, Some(r.max_sup_distance / cfg.epsilon));
    assert!(r.note.contains("finite horizon"));
}

#[test]
fn unperturbed_pipeline_is_a_fixed_point() {
    let r = run_stability(&small("epsilon = 0\npde = false\n")).unwrap().report;
    assert!(r.lambda0.abs() <= 1e-6);
    assert!(r.max_sup_distance <= 1e-4);
    assert!(r.c_empirical.is_none());
}

#[test]
fn stage_tags_identify_the_failing_stage() {
    let mut cfg = small("");
    cfg.pde_dt = 0.01;
    let e = run_stability(&cfg).err().unwrap();
    assert_eq!(e.stage, Stage::Pde);
    assert!(e.to_string().starts_with("[pde]"));
    let e = run_stability(&small("tol_zero = 1e-30\n")).err().unwrap();
    assert_eq!(e.stage, Stage::Discrete);
}

#[test]
fn diagnostics_record() {
    let eps = 0.05;
    let r = run_diagnostics(&small(&format!("epsilon = {eps}\n"))).unwrap();
    assert!((r.zero_count[0] - 1.0).abs() < 0.05 && r.zero_count[1].abs() < 0.05);
    assert!(r.zero_limit.zeta_b_at_min <= 1e-2 * eps);
    assert!(r.normalization_defect < 1e-6);
    assert!(r.c_lambda0.unwrap() < 1e-6);
    assert!(r.kernel_tail.is_finite() && r.plancherel_ratio > 0.0);
}
