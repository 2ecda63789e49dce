use gpist_core::evolution::evolve;
use gpist_core::jost::{ContinuousData, DiscreteData, ScatteringData};
use gpist_core::marchenko::*;
use gpist_core::spectral_core::*;
use gpist_core::{Tolerances, C64};
use proptest::prelude::*;
use std::f64::consts::SQRT_2;

/// Scattering data with b = 0 on a coarse grid and the given discrete part.
fn reflectionless(discrete: DiscreteData) -> ScatteringData {
    let grid = SpectralGrid::new(10.0, 128, 1e-3, 2).unwrap();
    let n = grid.len();
    let a = |br: i8| grid.zeta.iter().map(|&z| unperturbed_a(&SheetPoint::real(z, br))).collect::<Vec<_>>();
    ScatteringData {
        continuous: ContinuousData { a_pos: a(1), a_neg: a(-1), b_pos: vec![C64::new(0.0, 0.0); n], b_neg: vec![C64::new(0.0, 0.0); n], grid },
        discrete,
    }
}

fn moving() -> DiscreteData {
    let lambda0: f64 = 0.25;
    let nu0 = (0.5 - lambda0 * lambda0).sqrt();
    let base = DiscreteData::black_soliton();
    // A norming constant off the symmetric value moves the center away from 0.
    let b0 = C64::new(0.0, 1.6);
    let mu = b0 / (base.a_prime0 * nu0);
    DiscreteData { lambda0, nu0, b0, mu0: mu.re, mu0_imag: mu.im, ..base }
}

proptest! {
    #[test]
    fn gregory_weights_integrate_quintics_exactly(n in 10usize..80, h in 0.01f64..0.5, c in prop::array::uniform6(-2.0f64..2.0)) {
        let w = gregory_weights(n, h);
        let len = (n - 1) as f64 * h;
        let f = |y: f64| c.iter().enumerate().map(|(k, ck)| ck * y.powi(k as i32)).sum::<f64>();
        let exact: f64 = c.iter().enumerate().map(|(k, ck)| ck * len.powi(k as i32 + 1) / (k as f64 + 1.0)).sum();
        let quad: f64 = (0..n).map(|j| w[j] * f(j as f64 * h)).sum();
        prop_assert!((quad - exact).abs() < 1e-10 * (1.0 + exact.abs()));
    }

    #[test]
    fn finite_rank_kernel_is_the_black_soliton_kernel(x in -8.0f64..8.0, p in 0.0f64..12.0) {
        let (a, b) = finite_rank_solution(&DiscreteData::black_soliton(), x, &[p]).unwrap();
        let e = unperturbed_kernel(x, p).unwrap();
        prop_assert!((a[0] - e[0][0]).norm() < 1e-14 && (b[0] - e[0][1]).norm() < 1e-14);
    }

    #[test]
    fn evolution_preserves_moduli_and_composes(t1 in 0.0f64..3.0, t2 in 0.0f64..3.0) {
        let d = reflectionless(moving());
        let direct = evolve(&d, t1 + t2);
        let mid = evolve(&d, t1).materialize();
        let two = evolve(&mid, t2);
        prop_assert!((direct.b0_t() - two.b0_t()).norm() < 1e-12 * direct.b0_t().norm());
        prop_assert!((direct.b0_t().norm() - d.discrete.b0.norm() * (4.0 * 0.25 * moving().nu0 * (t1 + t2)).exp()).abs() < 1e-12 * direct.b0_t().norm());
        prop_assert!(direct.mu0_t() < 0.0);
    }
}

#[test]
fn solver_with_zero_reflection_reproduces_the_finite_rank_solution() {
    let tol = Tolerances::default();
    let settings = MarchenkoSettings::default();
    let dy = settings.dy();
    let p_grid = settings.p_grid();
    for d in [DiscreteData::black_soliton(), moving()] {
        let data = reflectionless(d);
        for m in [-20i64, 0, 33] {
            let span = 2 * (settings.n_p as i64 - 1);
            let ks = kernel_set(&data, m, m + span, dy, tol.tol_leak).unwrap();
            let sol = solve_station(&ks, m, settings.n_p, false, &tol).unwrap();
            let (f11, f12) = finite_rank_solution(&d, sol.x, &p_grid).unwrap();
            for j in 0..settings.n_p {
                assert!((sol.first[j] - f11[j]).norm() < 1e-8, "lambda0 {} x {} p {}", d.lambda0, sol.x, p_grid[j]);
                assert!((sol.second[j] - f12[j]).norm() < 1e-8);
            }
        }
    }
}

#[test]
fn reflectionless_reconstruction_is_the_soliton() {
    let data = reflectionless(DiscreteData::black_soliton());
    let s = MarchenkoSettings { n_p: 200, ..Default::default() };
    let (_, field, rec) = reconstruct(&evolve(&data, 0.0), 10.0, 0.5, &s, &Tolerances::default()).unwrap();
    for (x, u) in rec.profile.grid.xs().iter().zip(&rec.profile.u) {
        assert!((u - black_soliton(*x)).norm() < 1e-6, "x {x}");
    }
    assert!(rec.left_right_gap < 1e-6, "{}", rec.left_right_gap);
    assert!(field.stations.iter().all(|s| s.remainder_norm(0.1) < 1e-6));
}

#[test]
fn moving_soliton_center_follows_the_norming_constant() {
    // |mu0(t)| grows like e^{4 lambda0 nu0 t}, so the center moves at 2 lambda0.
    let data = reflectionless(moving());
    let c0 = evolve(&data, 0.0).soliton_center();
    let c1 = evolve(&data, 1.0).soliton_center();
    assert!((c1 - c0 - 0.5).abs() < 1e-12);
}

#[test]
fn reflected_data_reflects_the_field() {
    // A shifted black soliton: lambda0 = 0 with a norming constant off i.
    let base = DiscreteData::black_soliton();
    let b0 = C64::new(0.0, 1.6);
    let mu = b0 / (base.a_prime0 * base.nu0);
    let data = reflectionless(DiscreteData { b0, mu0: mu.re, mu0_imag: mu.im, ..base });
    assert!(evolve(&data, 0.0).soliton_center().abs() > 0.1);
    let s = MarchenkoSettings { n_p: 240, use_left: false, ..Default::default() };
    let tol = Tolerances::default();
    let (_, _, a) = reconstruct(&evolve(&data, 0.0), 3.0, 0.5, &s, &tol).unwrap();
    let refl = data.reflected();
    let (_, _, b) = reconstruct(&evolve(&refl, 0.0), 3.0, 0.5, &s, &tol).unwrap();
    let n = a.profile.u.len();
    for i in 0..n {
        // u_hat(x) = -conj(u(-x)).
        assert!((b.profile.u[i] + a.profile.u[n - 1 - i].conj()).norm() < 1e-6, "{} {} {}", a.profile.grid.x(n - 1 - i), a.profile.u[n - 1 - i], b.profile.u[i]);
    }
}

#[test]
fn station_grid_is_symmetric_and_aligned() {
    let dy = MarchenkoSettings::default().dy();
    let ms = station_indices(35.0, 0.5, dy);
    assert!(ms.contains(&0));
    assert_eq!(ms.first().map(|m| -m), ms.last().copied());
    assert!(ms.windows(2).all(|w| w[1] - w[0] == ms[1] - ms[0]));
    assert!((*ms.last().unwrap() as f64 * dy / 2.0) <= 35.0);
    let _ = SQRT_2;
}
