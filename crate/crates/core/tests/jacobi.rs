use std::sync::OnceLock;

use proptest::prelude::*;
use shrinker_core::geometry::{arc_rhs, CurveState};
use shrinker_core::jacobi::*;
use shrinker_core::ode::Tolerances;
use shrinker_core::shooting::{LocatedTorus, Shooter, A_CENTER, DEFAULT_BRACKET_HALF_WIDTH};

fn torus() -> &'static LocatedTorus {
    static T: OnceLock<LocatedTorus> = OnceLock::new();
    T.get_or_init(|| {
        Shooter::default()
            .find_torus(A_CENTER - DEFAULT_BRACKET_HALF_WIDTH, A_CENTER + DEFAULT_BRACKET_HALF_WIDTH)
            .unwrap()
            .reconstruct()
            .unwrap()
    })
}

fn tol() -> Tolerances {
    torus().cfg.tolerances()
}

// Oracle: an independent LSODA integration at rtol 1e-12, times 50.
const TOP_VALUE: f64 = -22.0255159604308 / 50.0;
const TOP_DERIV: f64 = -37.03488173497615 / 50.0;
const BOT_VALUE: f64 = -76.59751797572972 / 50.0;
const BOT_DERIV: f64 = -84.95385025407295 / 50.0;

#[test]
fn endpoints_match_the_oracle() {
    let (top, bot) = torus_arcs(torus()).unwrap();
    let (st, sb) = (integrate_mode(&top, tol()).unwrap(), integrate_mode(&bot, tol()).unwrap());
    for (got, want) in [
        (st.endpoint_value, TOP_VALUE),
        (st.endpoint_derivative, TOP_DERIV),
        (sb.endpoint_value, BOT_VALUE),
        (sb.endpoint_derivative, BOT_DERIV),
    ] {
        assert!((got - want).abs() < 1e-7, "{got} vs {want}");
    }
    let n = endpoint_matrix(&st, &sb);
    assert!(n.det >= 9.0 / 5.0, "det = {}", n.det);
    assert!((n.det - (TOP_VALUE * BOT_DERIV + BOT_VALUE * TOP_DERIV)).abs() < 1e-6);
}

#[test]
fn wronskian_is_conserved() {
    let (top, _) = torus_arcs(torus()).unwrap();
    let neu = ModeProblem { pin: 1.0, ..top };
    let dir = ModeProblem { left: Boundary::Dirichlet, pin: 1.0, ..top };
    let (_, a) = integrate_mode_dense(&neu, tol()).unwrap();
    let (_, b) = integrate_mode_dense(&dir, tol()).unwrap();
    let w = |t: f64| {
        let (za, zb) = (a.eval(t), b.eval(t));
        let mu = za[1] * (-(za[0] * za[0] + za[1] * za[1]) / 4.0).exp();
        mu * (za[4] * zb[5] - zb[4] * za[5])
    };
    let w0 = w(0.0);
    assert!(w0.abs() > 1e-3);
    let drift = (0..=200).map(|i| (w(top.length * i as f64 / 200.0) - w0).abs()).fold(0.0, f64::max);
    assert!(drift < 10.0 * tol().rtol.max(1e-9) * w0.abs().max(1.0), "drift {drift:e}");
}

#[test]
fn higher_modes_oscillate_later() {
    let (top, _) = torus_arcs(torus()).unwrap();
    let first_zero = |m| {
        integrate_mode(&ModeProblem { m, ..top }, tol()).unwrap().zeros.first().copied().unwrap_or(f64::INFINITY)
    };
    let (z0, z1, z2) = (first_zero(0), first_zero(1), first_zero(2));
    assert!(z0.is_finite() && z0 < z1 && z1 < z2, "{z0} {z1} {z2}");
}

#[test]
fn high_mode_has_no_zero_and_cutoff_is_finite() {
    let t = torus();
    let cutoff = mode_cutoff(&t.half_profile(2e-3)).unwrap();
    let last = cutoff.first_trivial_mode();
    assert!(cutoff.bound >= cutoff.node_sup && (4..=8).contains(&last), "{cutoff:?}");
    let (top, bot) = torus_arcs(t).unwrap();
    for p in [top, bot] {
        let s = integrate_mode(&ModeProblem { m: last, ..p }, tol()).unwrap();
        assert_eq!(s.zero_count, 0, "m = {last}: {:?}", s.zeros);
        assert!(s.endpoint_value > 0.0);
    }
}

#[test]
fn angenent_route_agrees() {
    let (top, bot) = torus_arcs(torus()).unwrap();
    for p in [top, bot] {
        let d = angenent_route_discrepancy(&p, tol()).unwrap();
        assert!(d < 1e-8, "{d:e}");
    }
    let (top, _) = torus_arcs(torus()).unwrap();
    assert!(angenent_route_discrepancy(&ModeProblem { m: 1, ..top }, tol()).is_err());
}

#[test]
fn mean_curvature_is_an_eigenfunction_with_one_sign_change() {
    let t = torus();
    let r = eigenfunction_residual(&t.top.solution, 2000).unwrap().max(
        eigenfunction_residual(&t.bottom.solution, 2000).unwrap(),
    );
    assert!(r < 1e-5, "{r:e}");
    let h_zeros = mean_curvature_zeros(&t.half_profile(2e-3)).unwrap();
    assert_eq!(h_zeros, 1);
    let (top, bot) = torus_arcs(t).unwrap();
    for p in [top, bot] {
        let s = integrate_mode(&p, tol()).unwrap();
        assert_eq!(sturm_zero_check(&s, h_zeros), SturmConsistency::CannotBeKernel, "{:?}", s.zeros);
    }
}

fn torus_point() -> impl Strategy<Value = [f64; 4]> {
    (0.0..1.0f64, any::<bool>()).prop_map(|(f, top)| {
        let sol = if top { &torus().top.solution } else { &torus().bottom.solution };
        sol.eval(sol.t_start() + f * (sol.t_end() - sol.t_start()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conjugation_identity_holds_on_the_torus(s in torus_point(), w in prop::array::uniform3(-2.0..2.0f64)) {
        let d = conjugation_defect(s, w).unwrap();
        prop_assert!(d.abs() < 1e-6 * (1.0 + w.iter().map(|v| v.abs()).sum::<f64>()), "{d:e}");
    }

    #[test]
    fn stability_operator_ignores_reparametrization(
        s in torus_point(),
        u in prop::array::uniform3(-2.0..2.0f64),
        m in 0u32..4,
        k in 0.5..3.0f64,
    ) {
        let acc = arc_rhs(s);
        let st = CurveState::from_array(0.0, s);
        let a = stability_apply(&st, [acc[2], acc[3]], m, u).unwrap();
        // t ↦ k t: velocity, acceleration and u-derivatives pick up 1/k, 1/k².
        let b = stability_apply(
            &st.reparametrize(k),
            [acc[2] / (k * k), acc[3] / (k * k)],
            m,
            [u[0], u[1] / k, u[2] / (k * k)],
        )
        .unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
    }
}
