use gpist_core::harness::{make_perturbation, Family};
use gpist_core::jost::{self, Potential, WRectangle};
use gpist_core::profile::FieldProfile;
use gpist_core::spectral_core::*;
use gpist_core::{GpistError, Tolerances, C64};

fn soliton(x_max: f64, h: f64) -> FieldProfile {
    FieldProfile::black_soliton(Grid1D::symmetric(x_max, h).unwrap())
}

#[test]
fn unperturbed_transmission_matches_closed_form() {
    let p = soliton(30.0, 0.02);
    let g = SpectralGrid::new(15.0, 512, 1e-3, 6).unwrap();
    let c = jost::transition_coefficients(&p, &g).unwrap();
    for br in [1i8, -1] {
        let (a, b) = c.branch(br);
        for k in 0..g.len() {
            let a0 = unperturbed_a(&jost::real_point(g.zeta[k], br));
            assert!(((a[k] - a0) / a0).norm() < 1e-6, "zeta {} branch {br}", g.zeta[k]);
            assert!(b[k].norm() < 1e-7);
        }
    }
}

#[test]
fn numerical_jost_solution_matches_closed_form() {
    let p = soliton(20.0, 0.02);
    for &(z, br) in &[(0.4, 1i8), (2.5, -1)] {
        let pt = SheetPoint::real(z, br);
        for k in [JostKind::Psi1, JostKind::Phi2] {
            let sol = jost::jost_solve(&p, pt, k).unwrap();
            for i in (0..p.grid.n).step_by(97) {
                let e = unperturbed_jost(&pt, p.grid.x(i), k);
                let v = sol.raw(i);
                assert!((v[0] - e[0]).norm() < 1e-8 && (v[1] - e[1]).norm() < 1e-8, "{k:?} at {}", p.grid.x(i));
            }
            // Centered differences of an oscillation e^{i zeta x} err by about (h zeta)^2 / 6 relative.
            let r = sol.ode_residual(&p);
            assert!(r < 0.02f64.powi(2) * (1.0 + z).powi(3), "{k:?} {z}: {r}");
        }
    }
}

#[test]
fn wronskian_is_constant_along_the_grid() {
    let g = Grid1D::symmetric(20.0, 0.02).unwrap();
    let (p, _) = make_perturbation(Family::AlgebraicX4, 0.1, 0, g).unwrap();
    let pt = SheetPoint::real(0.8, 1);
    let psi1 = jost::jost_solve(&p, pt, JostKind::Psi1).unwrap();
    let psi2 = jost::jost_solve(&p, pt, JostKind::Psi2).unwrap();
    let w = jost::wronskian(&psi1, &psi2).unwrap();
    assert!((w.mean - wronskian_constant(&pt)).norm() < 1e-9);
    assert!(w.max_deviation < 1e-9);
    let other = jost::jost_solve(&p, SheetPoint::real(0.9, 1), JostKind::Psi2).unwrap();
    assert!(matches!(jost::wronskian(&psi1, &other), Err(GpistError::MismatchedGrids)));
}

#[test]
fn growing_directions_are_refused() {
    let p = soliton(10.0, 0.05);
    let pt = lift(C64::new(0.0, 0.5), 1);
    assert!(matches!(jost::jost_solve(&p, pt, JostKind::Psi1), Err(GpistError::GapGrowth { .. })));
    assert!(jost::jost_solve(&p, pt, JostKind::Psi2).is_ok());
}

#[test]
fn normalization_holds_for_perturbed_profiles() {
    let g = SpectralGrid::new(15.0, 256, 1e-3, 4).unwrap();
    for eps in [0.0, 0.01, 0.05] {
        let (p, _) = make_perturbation(Family::GaussianReal, eps, 0, Grid1D::symmetric(30.0, 0.02).unwrap()).unwrap();
        let c = jost::transition_coefficients(&p, &g).unwrap();
        assert!(c.normalization_defect() < 1e-6, "eps {eps}");
        assert!(c.symmetry_defect() < 1e-6, "eps {eps}");
    }
}

#[test]
fn transmission_converges_at_fourth_order() {
    // Successive differences of a(zeta) under h halving shrink by about 16.
    let pt = SheetPoint::real(0.7, 1);
    let a: Vec<C64> = [0.16, 0.08, 0.04]
        .iter()
        .map(|&h| {
            let (p, _) = make_perturbation(Family::GaussianReal, 0.05, 0, Grid1D::symmetric(30.0, h).unwrap()).unwrap();
            jost::transition_at(&Potential::new(&p), &pt).unwrap().0
        })
        .collect();
    let ratio = (a[0] - a[1]).norm() / (a[1] - a[2]).norm();
    assert!(ratio > 12.0, "ratio {ratio}");
}

#[test]
fn reflected_profile_has_reflected_data() {
    // u -> -conj(u(-x)) maps (a, b) to (a, conj b) on the same branch.
    let g = Grid1D::symmetric(25.0, 0.02).unwrap();
    let (p, _) = make_perturbation(Family::RandomBump, 0.1, 11, g).unwrap();
    let n = g.n;
    let r = FieldProfile::new(g, (0..n).map(|i| -p.u[n - 1 - i].conj()).collect()).unwrap();
    let (pp, pr) = (Potential::new(&p), Potential::new(&r));
    for &(z, br) in &[(0.3, 1i8), (1.2, -1), (4.0, 1)] {
        let pt = SheetPoint::real(z, br);
        let (a, b) = jost::transition_at(&pp, &pt).unwrap();
        let (ar, brf) = jost::transition_at(&pr, &pt).unwrap();
        assert!((a - ar).norm() < 1e-9);
        assert!((b.conj() - brf).norm() < 1e-9);
    }
}

#[test]
fn black_soliton_discrete_data() {
    let p = soliton(40.0, 0.02);
    let d = jost::discrete_data(&p, &Tolerances::default()).unwrap();
    assert!(d.lambda0.abs() <= 1e-6);
    assert!((d.b0 - C64::new(0.0, 1.0)).norm() <= 1e-5);
    assert!((d.mu0 + 2.0).abs() <= 1e-4);
    assert!(((d.a_prime0 - d.a_prime0_integral) / d.a_prime0_integral).norm() <= 1e-4);
    // a'(0) of the closed form: d/dlambda of (w - i/sqrt2)/(w + i/sqrt2) at w = i/sqrt 2.
    assert!((d.a_prime0_integral - C64::new(0.0, -std::f64::consts::FRAC_1_SQRT_2)).norm() < 1e-8);
}

#[test]
fn real_perturbations_keep_the_soliton_black() {
    let g = Grid1D::symmetric(30.0, 0.02).unwrap();
    for fam in [Family::GaussianReal, Family::AlgebraicX4, Family::RandomBump] {
        let (p, _) = make_perturbation(fam, 0.05, 2, g).unwrap();
        let d = jost::discrete_data(&p, &Tolerances::default()).unwrap();
        assert!(d.lambda0.abs() < 1e-8, "{fam:?}: {}", d.lambda0);
        assert!(d.mu0_imag.abs() < 1e-6);
    }
}

#[test]
fn one_zero_inside_the_gap_contour() {
    let g = Grid1D::symmetric(25.0, 0.02).unwrap();
    for (fam, eps) in [(Family::GaussianReal, 0.0), (Family::GaussianReal, 0.05), (Family::AlgebraicX4, 0.1)] {
        let (p, _) = make_perturbation(fam, eps, 0, g).unwrap();
        let n = jost::zero_count(&p, &WRectangle::default(), 60).unwrap();
        assert!((n - C64::new(1.0, 0.0)).norm() < 0.05, "{fam:?} {eps}: {n}");
    }
}

#[test]
fn profiles_without_a_gap_zero_are_reported() {
    // A constant field has no soliton, so a has no zero on the gap.
    let g = Grid1D::symmetric(20.0, 0.05).unwrap();
    let flat = FieldProfile::from_fn(g, |x| C64::new(if x < 0.0 { -1.0 } else { 1.0 }, 0.0) * (x.abs() / 3.0).min(1.0)).unwrap();
    let r = jost::discrete_data(&FieldProfile::from_fn(g, |_| C64::new(1.0, 0.0)).unwrap(), &Tolerances::default());
    assert!(r.is_err());
    assert!(flat.check_asymptotes(1e-3).is_ok());
}
