use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use simpleq::observables::{
    condensate_depletion, depletion_positivity_threshold, lp_constant, momentum_on_grid, shared_denominator,
    ObservableSettings,
};
use simpleq::operators::{apply_frak_ke, apply_ge, apply_ke, apply_ye, OperatorContext, POSITIVITY_SLACK};
use simpleq::potentials::{gaussian_potential, ExplicitSolutionSpec, Potential, PotentialSpec};
use simpleq::radial::{convolve, evaluate, extrapolate_to_zero, make_grid, moments, RadialField, Space};
use simpleq::solver::{prepare_potential, solve_fixed_e, Scheme, SolutionState, SolverConfig};

fn bump(grid: &Arc<simpleq::radial::RadialGrid>, a: f64, c: f64, w: f64) -> RadialField {
    RadialField::from_fn(grid.clone(), Space::Position, |r| a * (-((r - c) / w).powi(2)).exp()).unwrap()
}

fn inner() -> simpleq::operators::LinearSolveSettings {
    ObservableSettings::default().inner
}

/// gaussian(1,1) states at a few energies, shared by the operator properties.
fn states() -> &'static Vec<SolutionState> {
    static S: OnceLock<Vec<SolutionState>> = OnceLock::new();
    S.get_or_init(|| {
        let cfg = SolverConfig::default();
        let spec = PotentialSpec::Gaussian {
            amplitude: 1.0,
            width: 1.0,
        };
        let pot = prepare_potential(&spec, 0.05, &cfg).unwrap();
        [0.05, 0.3, 1.0].iter().map(|e| solve_fixed_e(&pot, *e, &cfg).unwrap()).collect()
    })
}

fn solve_with(pot: &Arc<Potential>, e: f64, scheme: Scheme) -> SolutionState {
    let cfg = SolverConfig {
        scheme,
        fallback: false,
        ..Default::default()
    };
    solve_fixed_e(pot, e, &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn plancherel_and_round_trip(
        n in 63usize..1024, r_max in 10.0f64..60.0,
        a in 0.1f64..3.0, c in 0.0f64..3.0, w in 0.5f64..2.0,
        a2 in 0.1f64..3.0, c2 in 0.0f64..3.0, w2 in 0.5f64..2.0,
    ) {
        let g = make_grid(n, r_max).unwrap();
        let f = bump(&g, a, c, w);
        let h = bump(&g, a2, c2, w2);
        let fh = g.forward(f.values());
        let hh = g.forward(h.values());
        let pos = g.inner(f.values(), h.values());
        let freq = g.inner_frequency(&fh, &hh);
        prop_assert!(((pos - freq) / pos).abs() <= 1e-10, "{pos} vs {freq}");
        let back = g.inverse(&fh);
        let scale = f.max_abs();
        let err = back.iter().zip(f.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12 * scale, "round trip error {err:e}");
    }

    #[test]
    fn convolution_is_symmetric_and_m0_is_the_l1_norm(
        n in 63usize..1024, r_max in 10.0f64..60.0,
        a in 0.1f64..3.0, c in 0.0f64..3.0, w in 0.5f64..2.0,
        a2 in 0.1f64..3.0, c2 in 0.0f64..3.0, w2 in 0.5f64..2.0,
    ) {
        let g = make_grid(n, r_max).unwrap();
        let f = bump(&g, a, c, w);
        let h = bump(&g, a2, c2, w2);
        let fg = convolve(&f, &h).unwrap();
        let gf = convolve(&h, &f).unwrap();
        prop_assert_eq!(fg.values(), gf.values());
        let m = moments(&f, &[1.0]).unwrap();
        prop_assert_eq!(m.m0, m.lp(1.0).unwrap());
    }

    #[test]
    fn gaussian_potentials_are_admissible(amp in 0.05f64..50.0, width in 0.2f64..3.0) {
        let cfg = SolverConfig::default();
        let pot = prepare_potential(&PotentialSpec::Gaussian { amplitude: amp, width }, 1.0, &cfg).unwrap();
        prop_assert!(pot.samples().values().iter().all(|v| *v >= 0.0));
        prop_assert!(pot.l1().is_finite() && pot.l2().is_finite());
        let a0 = pot.scattering_length().unwrap();
        let born = pot.l1() / (4.0 * PI);
        prop_assert!(a0 > 0.0 && a0 <= born, "a0 = {a0}, Born bound {born}");
    }

    #[test]
    fn explicit_numerator_is_non_negative(b in 0.1f64..5.0, c in 0.0f64..0.99, ratio in (7.0f64 / 9.0)..10.0) {
        let spec = ExplicitSolutionSpec::new(b, c, ratio * b * b).unwrap();
        for q in spec.numerator_coefficients() {
            prop_assert!(q >= 0.0, "coefficient {q} at b = {b}, e/b² = {ratio}");
        }
    }

    #[test]
    fn resolvents_are_dominated_on_non_negative_inputs(
        which in 0usize..3, a in 0.1f64..3.0, c in 0.0f64..6.0, w in 0.3f64..3.0,
    ) {
        let st = &states()[which];
        let g = st.grid().clone();
        let psi = bump(&g, a, c, w);
        let bare = OperatorContext::new(st.e, st.potential().clone()).unwrap().with_settings(inner());
        let (k, _) = apply_ke(&psi, &bare).unwrap();
        let ge = apply_ge(&psi, st.e).unwrap();
        let full = bare.clone().with_rho_u_hat(st.rho_u_hat.clone()).unwrap();
        let (fk, _) = apply_frak_ke(&psi, &full).unwrap();
        let ye = apply_ye(&psi, &full).unwrap();
        for j in 0..g.n() {
            prop_assert!(k.values()[j] <= ge.values()[j] + POSITIVITY_SLACK);
            prop_assert!(fk.values()[j] <= ye.values()[j] + POSITIVITY_SLACK);
            prop_assert!(fk.values()[j] >= -POSITIVITY_SLACK && k.values()[j] >= -POSITIVITY_SLACK);
        }
        // 𝔜_e is the multiplier 1/(k²+4e(1−ρû)).
        let psi_hat = g.forward(psi.values());
        let ye_hat = g.forward(ye.values());
        let scale = psi_hat.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for j in 0..g.n() {
            let k = g.wavenumbers()[j];
            let m = k * k + 4.0 * st.e * (1.0 - st.rho_u_hat.values()[j]);
            prop_assert!((ye_hat[j] * m - psi_hat[j]).abs() <= 1e-12 * scale);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn schemes_agree_and_monotone_iterates_increase(
        amp in 0.5f64..5.0, width in 0.5f64..2.0, e in 0.05f64..1.0,
    ) {
        let cfg = SolverConfig::default();
        let pot = prepare_potential(&PotentialSpec::Gaussian { amplitude: amp, width }, e, &cfg).unwrap();
        let f = solve_with(&pot, e, Scheme::FourierSelfConsistent);
        let m = solve_with(&pot, e, Scheme::RealSpaceMonotone);
        let du = f.u.values().iter().zip(m.u.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(du <= 1e-6, "‖u_F − u_M‖∞ = {du:e}");
        prop_assert!(((f.rho - m.rho) / f.rho).abs() <= 1e-6);
        prop_assert_eq!(m.monotone_violations, Some(0));
        for st in [&f, &m] {
            prop_assert!(st.residuals.radicand_min >= -1e-12);
            prop_assert!(st.rho_u_hat.values().iter().all(|x| *x < 1.0));
            let g = st.grid();
            let at_zero = extrapolate_to_zero(g.wavenumbers(), st.rho_u_hat.values(), 6);
            prop_assert!((at_zero - 1.0).abs() <= 1e-6, "ρû(0) = {at_zero}");
        }
    }
}

#[test]
fn frak_v_integral_is_below_the_potential_integral() {
    for st in states() {
        let cache = st.frak(inner()).unwrap();
        let g = st.grid();
        let v = st.potential().samples().values();
        let lhs = g.inner(v, &cache.kv);
        let rhs = g.integrate_position(v);
        assert!(lhs <= rhs, "∫v𝔎v = {lhs} > ∫v = {rhs} at e = {}", st.e);
    }
}

#[test]
fn depletion_is_non_negative_below_threshold_and_shares_its_denominator() {
    for st in states() {
        let l1 = st.potential().l1();
        let dep = condensate_depletion(st, inner()).unwrap();
        let d = shared_denominator(st, inner()).unwrap();
        assert_eq!(dep.denominator, d.value);
        if st.rho / st.e.sqrt() <= depletion_positivity_threshold(l1) {
            assert!(dep.eta.unwrap() >= 0.0, "η < 0 at e = {}", st.e);
        }
    }
}

#[test]
fn momentum_times_multiplier_is_bounded_near_zero() {
    for st in states() {
        let m = momentum_on_grid(st, inner()).unwrap();
        let d = shared_denominator(st, inner()).unwrap();
        let g = st.grid();
        let bound = 2.0 * st.potential().l1() / d.value.abs();
        for j in 0..20 {
            let k = g.wavenumbers()[j];
            let p = m.values()[j] * (k * k + 4.0 * st.e * (1.0 - st.rho_u_hat.values()[j]));
            assert!(p.is_finite() && p.abs() <= bound, "k = {k}: {p} vs {bound}");
        }
    }
}

#[test]
fn lp_constants_match_closed_forms_and_scale_with_the_norm() {
    let l1 = PI.powf(1.5);
    assert!((lp_constant(1.0, l1) - l1 / 2.0).abs() < 1e-14 * l1);
    assert!((lp_constant(2.0, l1) - l1 / (2.0 * PI.sqrt())).abs() < 1e-14 * l1);
    for p in [1.0, 1.5, 2.0, 2.5] {
        assert!((lp_constant(p, 3.0 * l1) - 3.0 * lp_constant(p, l1)).abs() < 1e-13 * lp_constant(p, l1));
    }
}

#[test]
fn xi_is_close_to_its_small_e_limit() {
    let e = 1e-4;
    let cfg = SolverConfig::default();
    let spec = PotentialSpec::Gaussian {
        amplitude: 1.0,
        width: 1.0,
    };
    let pot = prepare_potential(&spec, e, &cfg).unwrap();
    let st = solve_fixed_e(&pot, e, &cfg).unwrap();
    let ctx = OperatorContext::new(e, pot.clone())
        .unwrap()
        .with_rho_u_hat(st.rho_u_hat.clone())
        .unwrap();
    let rho_u = st.u.map(|u| st.rho * u);
    let xi = apply_ye(&rho_u, &ctx).unwrap();
    let limit = (2.0 * e).sqrt() / (3.0 * PI * PI);
    for r in [0.1, 1.0, 10.0] {
        let dev = (evaluate(&xi, r) - limit).abs() / (2.0 * e).sqrt();
        assert!(dev <= 0.15, "ξ({r}) deviates by {dev}");
    }
}

#[test]
fn gaussian_potential_on_a_fine_grid_has_exact_norms() {
    let g = make_grid(4095, 20.0).unwrap();
    let v = gaussian_potential(1.0, 1.0, g).unwrap();
    assert!((v.l1() - PI.powf(1.5)).abs() < 1e-10 * v.l1());
    assert!((v.l2() - (PI / 2.0).powf(0.75)).abs() < 1e-10 * v.l2());
}
