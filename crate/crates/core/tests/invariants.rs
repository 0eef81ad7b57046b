use std::f64::consts::FRAC_PI_2;

use curvquant::grid::GridSpec;
use curvquant::normal::build_normal_chart;
use curvquant::quantization::{qmp_dewitt, qmp_nu, Variant};
use curvquant::quasiclassical::{classical_action, geodesic_distance, van_vleck, v_tilde};
use curvquant::spectral::anomaly_gap;
use curvquant::{chart_from_id, chart_from_text, geometry_jet, Constants, JetSource};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn qmp_scales_with_hbar_squared_over_mass(
        r in 0.2f64..5.0,
        phi in 0.0f64..6.0,
        hbar in 0.1f64..3.0,
        mass in 0.1f64..3.0,
    ) {
        let c = chart_from_id("polar2").unwrap();
        let unit = qmp_dewitt(&c, &Constants::default(), &[r, phi]).unwrap().v_dw;
        let k = Constants::new(hbar, mass).unwrap();
        let v = qmp_dewitt(&c, &k, &[r, phi]).unwrap().v_dw;
        prop_assert!(close(v, unit * hbar * hbar / mass, 1e-12));
    }

    #[test]
    fn ordering_family_is_affine_in_nu(
        q in 0.0f64..6.28,
        eps in -0.6f64..0.6,
        a in -5.0f64..5.0,
        b in -5.0f64..5.0,
    ) {
        let c = chart_from_id(&format!("circle-deformed:{eps}")).unwrap();
        let k = Constants::default();
        let f = |nu| qmp_nu(&c, &k, &[q], nu).unwrap();
        // f(ν) = f(0) + ν (f(1) − f(0))
        let slope = f(1.0) - f(0.0);
        prop_assert!(close(f(a), f(0.0) + a * slope, 1e-12));
        prop_assert!(close(f(b) - f(a), (b - a) * slope, 1e-10));
    }

    #[test]
    fn scalar_curvature_is_chart_independent(theta in 0.3f64..2.8, phi in 0.0f64..6.28) {
        // Same sphere in polar angles and in stereographic coordinates.
        let a = geometry_jet(&chart_from_id("sphere2:2").unwrap(), &[theta, phi]).unwrap();
        let rho = (theta / 2.0).tan();
        let x = [rho * phi.cos(), rho * phi.sin()];
        let b = geometry_jet(&chart_from_id("stereo:2:2").unwrap(), &x).unwrap();
        prop_assert!(close(a.scalar_curvature, 0.5, 1e-10));
        prop_assert!(close(b.scalar_curvature, 0.5, 1e-10));
    }

    #[test]
    fn numeric_jets_track_analytic_ones(theta in 0.3f64..2.8, phi in 0.0f64..6.28) {
        let c = chart_from_id("sphere2:1").unwrap();
        let n = c.with_source(JetSource::Numeric);
        let k = Constants::default();
        let va = qmp_dewitt(&c, &k, &[theta, phi]).unwrap();
        let vn = qmp_dewitt(&n, &k, &[theta, phi]).unwrap();
        prop_assert!(close(va.v_dw, vn.v_dw, 1e-5));
        prop_assert!(close(va.nu_correction_density, vn.nu_correction_density, 1e-5));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn action_is_symmetric(t1 in 0.8f64..2.3, p1 in 0.0f64..1.0, t2 in 0.8f64..2.3, p2 in 0.0f64..1.0) {
        let c = chart_from_id("sphere2:1").unwrap();
        let k = Constants::new(1.0, 1.7).unwrap();
        let s12 = classical_action(&c, &k, &[t1, p1], &[t2, p2], 0.9).unwrap();
        let s21 = classical_action(&c, &k, &[t2, p2], &[t1, p1], 0.9).unwrap();
        prop_assert!(close(s12, s21, 1e-9));
    }

    #[test]
    fn action_scales_inversely_with_time(dt in 0.1f64..4.0) {
        let c = chart_from_id("sphere2:1").unwrap();
        let k = Constants::default();
        let q = [1.0, 0.2];
        let qp = [1.4, 0.7];
        let s1 = classical_action(&c, &k, &q, &qp, 1.0).unwrap();
        let s = classical_action(&c, &k, &q, &qp, dt).unwrap();
        prop_assert!(close(s * dt, s1, 1e-10));
    }
}

#[test]
fn distance_is_additive_along_a_geodesic() {
    let c = chart_from_id("sphere2:1").unwrap();
    let a = [1.0, 0.1];
    let b = [1.3, 0.5];
    let (sab, v) = geodesic_distance(&c, &a, &b, None).unwrap();
    // Midpoint of the same geodesic.
    let mid = curvquant::normal::exp_map(&c, &a, &[0.5 * v[0], 0.5 * v[1]], 400).unwrap();
    let (s1, _) = geodesic_distance(&c, &a, &mid, None).unwrap();
    let (s2, _) = geodesic_distance(&c, &mid, &b, None).unwrap();
    assert!((s1 + s2 - sab).abs() < 1e-9, "{s1} + {s2} vs {sab}");
    assert!((s1 - s2).abs() < 1e-9);
}

#[test]
fn van_vleck_is_symmetric_and_scales() {
    let c = chart_from_id("sphere2:1").unwrap();
    let k = Constants::default();
    let q = [1.1, 0.0];
    let qp = [1.5, 0.6];
    let d1 = van_vleck(&c, &k, &q, &qp, 1.0).unwrap();
    let d2 = van_vleck(&c, &k, &qp, &q, 1.0).unwrap();
    assert!((d1 / d2 - 1.0).abs() < 1e-6, "{d1} {d2}");
    let heavy = Constants::new(1.0, 3.0).unwrap();
    let d3 = van_vleck(&c, &heavy, &q, &qp, 0.5).unwrap();
    assert!((d3 / d1 / 36.0 - 1.0).abs() < 1e-6);
}

#[test]
fn two_point_potential_does_not_depend_on_time() {
    let c = chart_from_id("sphere2:1").unwrap();
    let k = Constants::default();
    let q = [FRAC_PI_2, 0.0];
    let qp = [FRAC_PI_2 + 0.15, 0.15];
    let a = v_tilde(&c, &k, &q, &qp, 1.0).unwrap();
    let b = v_tilde(&c, &k, &q, &qp, 0.25).unwrap();
    assert!((a - b).abs() < 1e-6, "{a} {b}");
}

#[test]
fn anomaly_grows_with_deformation() {
    let k = Constants::new(1.0, 0.5).unwrap();
    let arc = chart_from_id("circle-deformed:0").unwrap();
    let spec = GridSpec::for_chart(&arc, &[128]).unwrap();
    let mut last = 0.0;
    for eps in [0.05, 0.1, 0.2, 0.3] {
        let def = chart_from_id(&format!("circle-deformed:{eps}")).unwrap();
        let g = anomaly_gap(&arc, &def, &k, Variant::Dw, &spec, 3).unwrap();
        let worst = g.gaps.iter().cloned().fold(0.0, f64::max);
        assert!(worst > last, "eps {eps}: {worst} <= {last}");
        last = worst;
    }
}

#[test]
fn expression_chart_matches_catalog() {
    let text = "omega_11 = 1\nomega_22 = sin(q1)^2\ndomain_1 = 0, 3.141592653589793\n";
    let e = chart_from_text("expr-sphere", text).unwrap();
    let c = chart_from_id("sphere2:1").unwrap();
    let k = Constants::default();
    for q in [[0.4, 1.0], [1.2, 3.0], [2.5, 5.0]] {
        let a = qmp_dewitt(&e, &k, &q).unwrap().v_dw;
        let b = qmp_dewitt(&c, &k, &q).unwrap().v_dw;
        assert!((a - b).abs() < 1e-12 * b.abs().max(1.0), "{a} {b}");
        let ga = geometry_jet(&e, &q).unwrap().scalar_curvature;
        assert!((ga - 2.0).abs() < 1e-10);
    }
}

#[test]
fn normal_chart_round_trip() {
    let c = chart_from_id("sphere2:1").unwrap();
    let nc = build_normal_chart(&c, &[1.0, 0.4], 0.3, 1000).unwrap();
    let y = [0.12, -0.2];
    let q = nc.forward(&y).unwrap();
    let back = nc.inverse(&q).unwrap();
    assert!((back[0] - y[0]).abs() < 1e-9 && (back[1] - y[1]).abs() < 1e-9, "{back:?}");
    let g = nc.pullback_metric(&[0.0, 0.0]).unwrap();
    assert!((g[(0, 0)] - 1.0).abs() < 1e-12 && g[(0, 1)].abs() < 1e-12 && (g[(1, 1)] - 1.0).abs() < 1e-12);
}
