use std::f64::consts::{FRAC_PI_2, SQRT_2};

use proptest::prelude::*;
use shrinker_core::geometry::*;
use shrinker_core::shooting::{Shooter, A_CENTER, DEFAULT_BRACKET_HALF_WIDTH, TOP_X1_END};

/// `(u, u', u'')` of the radius-2 circle as a graph `u = √(4 − t²)`.
fn circle_graph(t: f64) -> (f64, f64, f64) {
    let u = (4.0 - t * t).sqrt();
    (u, -t / u, -4.0 / u.powi(3))
}

fn exact_segments() -> Vec<(&'static str, ProfileSegment)> {
    vec![
        ("cylinder/x1", ProfileSegment::sample(Chart::GraphX1, -1.0, 1.0, 200, |_| (SQRT_2, 0.0, 0.0)).unwrap()),
        ("sphere/polar", ProfileSegment::sample(Chart::Polar, 0.2, 2.9, 400, |_| (2.0, 0.0, 0.0)).unwrap()),
    ]
}

#[test]
fn exact_shrinkers_have_zero_residual_in_every_chart() {
    for (name, seg) in exact_segments() {
        let eps = residual_sup(&seg).unwrap();
        assert!(eps < 1e-12, "{name}: ε = {eps:e}");
    }
    for (chart, dom) in [(Chart::GraphX1, (-1.2, 1.2)), (Chart::GraphX2, (0.5, 1.6))] {
        let eps = residual_sup_exact(chart, dom, 2000, circle_graph).unwrap();
        assert!(eps < 1e-12, "sphere {chart:?}: ε = {eps:e}");
    }
    // Sampled as a cubic interpolant the sphere is only approximately exact.
    let seg = ProfileSegment::sample(Chart::GraphX1, -1.2, 1.2, 400, circle_graph).unwrap();
    assert!(residual_sup(&seg).unwrap() < 1e-6);
    // In arc length the cylinder is a straight line and the sphere a circle
    // of curvature 1/2.
    let cyl = shrinker_rhs(&CurveState::new(0.0, 0.3, SQRT_2, 1.0, 0.0).unwrap(), Chart::ArcParam).unwrap();
    assert!(cyl[2].abs() < 1e-15 && cyl[3].abs() < 1e-15);
    for th in [0.3, FRAC_PI_2, 2.5] {
        let (s, c) = f64::sin_cos(th);
        let d = shrinker_rhs(&CurveState::new(0.0, 2.0 * c, 2.0 * s, -s, c).unwrap(), Chart::ArcParam).unwrap();
        assert!((d[2] + c / 2.0).abs() < 1e-12 && (d[3] + s / 2.0).abs() < 1e-12, "{d:?}");
    }
}

#[test]
fn perturbation_is_detected_with_its_analytic_size() {
    let seg =
        ProfileSegment::sample(Chart::GraphX1, 0.0, 0.6, 300, |x| (SQRT_2 + 1e-3 * x * x, 2e-3 * x, 2e-3)).unwrap();
    let eps = residual_sup(&seg).unwrap();
    assert!((1.9e-3..=2.1e-3).contains(&eps), "{eps:e}");
}

#[test]
fn located_torus_is_an_epsilon_geodesic() {
    let sh = Shooter::default();
    let cert = sh.find_torus(A_CENTER - DEFAULT_BRACKET_HALF_WIDTH, A_CENTER + DEFAULT_BRACKET_HALF_WIDTH).unwrap();
    let t = cert.reconstruct().unwrap();
    let seg = t.segments().unwrap();
    assert!(seg.top_x1.epsilon < 1e-6, "{}", seg.top_x1.epsilon);
    assert_eq!(seg.top_x1.domain, (0.0, TOP_X1_END));
    for s in [&seg.top_x1, &seg.top_x2_sphere, &seg.top_x2_cyl, &seg.bot_x1, &seg.bot_x2] {
        for k in 0..s.len() {
            assert!(s.residual_at(s.nodes[k]).unwrap().abs() < 1e-8);
        }
    }

    // Arc-length integration read as an x₁-graph agrees with the graph chart.
    let top = &t.top.solution;
    for i in 1..=12 {
        let x = TOP_X1_END * i as f64 / 12.0;
        let (mut lo, mut hi) = (0.0, t.top.crossing.t);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if top.eval(mid)[0] < x {
                lo = mid
            } else {
                hi = mid
            }
        }
        let s = top.eval(0.5 * (lo + hi));
        let (u, p, _) = seg.top_x1.eval(x);
        assert!((s[1] - u).abs() < 1e-8 && (s[3] / s[2] - p).abs() < 1e-7, "x = {x}");
    }

    // Angenent curvature peaks at "around 30".
    let kmax = t.half_profile(1e-3).iter().map(|s| k_ang(s.x, s.y)).fold(0.0, f64::max);
    assert!((24.0..=36.0).contains(&kmax), "max K_Ang = {kmax}");
}

fn state() -> impl Strategy<Value = CurveState> {
    (-2.0..2.0f64, 0.2..3.0f64, 0.0..std::f64::consts::TAU, 0.3..3.0f64)
        .prop_map(|(x, y, th, speed)| CurveState::new(0.0, x, y, speed * th.cos(), speed * th.sin()).unwrap())
}

proptest! {
    #[test]
    fn curvature_quantities_ignore_reparametrization(s in state()) {
        let a = geom_quantities(&s).unwrap();
        let b = geom_quantities(&s.reparametrize(2.0)).unwrap();
        prop_assert!((a.a_sq - b.a_sq).abs() <= 1e-12 * (1.0 + a.a_sq));
        prop_assert!((a.k_ang - b.k_ang).abs() <= 1e-12 * a.k_ang);
        prop_assert!((b.omega - a.omega / 4.0).abs() <= 1e-12 * a.omega);
    }

    #[test]
    fn shrinker_equation_commutes_with_reflection(s in state()) {
        let d = shrinker_rhs(&s, Chart::ArcParam).unwrap();
        let r = shrinker_rhs(&s.reflect(), Chart::ArcParam).unwrap();
        prop_assert!((r[0] + d[0]).abs() < 1e-13 && (r[1] - d[1]).abs() < 1e-13);
        prop_assert!((r[2] + d[2]).abs() <= 1e-12 * (1.0 + d[2].abs()));
        prop_assert!((r[3] - d[3]).abs() <= 1e-12 * (1.0 + d[3].abs()));
    }
}
