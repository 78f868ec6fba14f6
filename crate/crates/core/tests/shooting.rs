use std::f64::consts::SQRT_2;
use std::sync::OnceLock;

use shrinker_core::error::Error;
use shrinker_core::shooting::*;

fn certificate() -> &'static TorusCertificate {
    static C: OnceLock<TorusCertificate> = OnceLock::new();
    C.get_or_init(|| {
        Shooter::default()
            .find_torus(A_CENTER - DEFAULT_BRACKET_HALF_WIDTH, A_CENTER + DEFAULT_BRACKET_HALF_WIDTH)
            .unwrap()
    })
}

#[test]
fn torus_lands_in_the_published_windows() {
    let c = certificate();
    assert!((c.a0 - A_CENTER).abs() < A_HALF_WIDTH, "a0 = {}", c.a0);
    assert!((c.b0 - B_CENTER).abs() < B_HALF_WIDTH, "b0 = {}", c.b0);
    let (px, py) = c.sphere.p_plus;
    assert!((px - SPHERE_POINT.0).hypot(py - SPHERE_POINT.1) <= SPHERE_TOLERANCE);
    assert!((c.sphere.angle - SPHERE_ANGLE).abs() <= SPHERE_TOLERANCE);
    assert!((px * px + py * py - 4.0).abs() < 1e-9);
    assert!(c.all_pass(), "{:?}", c.verdicts);
    // Oracle: independent high-order integration puts a0 at 3.314708266556.
    assert!((c.a0 - 3.314708266556).abs() < 1e-7);
}

#[test]
fn bracket_is_preserved_and_tight() {
    let c = certificate();
    let b = &c.bracket;
    assert!(b.phi_minus < 0.0 && b.phi_plus > 0.0);
    assert!(b.a_minus.min(b.a_plus) <= c.a0 && c.a0 <= b.a_minus.max(b.a_plus));
    assert!((b.a_plus - b.a_minus).abs() <= c.config.bisection_tol);
    assert!(b.b_lo <= c.b0 && c.b0 <= b.b_hi);
}

#[test]
fn phi_changes_sign_across_the_published_window() {
    let sh = Shooter::default();
    assert!(sh.phi(A_CENTER + A_HALF_WIDTH).unwrap() > 0.0);
    assert!(sh.phi(A_CENTER - A_HALF_WIDTH).unwrap() < 0.0);
}

#[test]
fn shifted_bracket_has_no_sign_change() {
    let err = Shooter::default().find_torus(2.995, 3.005).unwrap_err();
    assert!(matches!(err, Error::Bracket(_)), "{err}");
}

#[test]
fn shots_match_at_the_cylinder() {
    let c = certificate();
    let tol = 10.0 * c.config.rtol.max(c.config.atol);
    // The bisection stops at a finite bracket; Φ is Lipschitz in a.
    assert!(c.matching_position_gap < tol + 1e-8, "{}", c.matching_position_gap);
    assert!(c.matching_tangent_gap < tol + 1e-8, "{}", c.matching_tangent_gap);
}

#[test]
fn crossing_map_is_strictly_increasing() {
    let sh = Shooter::default();
    let grid: Vec<f64> = (0..50).map(|i| 0.05 + (SQRT_2 - 0.06) * i as f64 / 49.0).collect();
    let xs: Vec<f64> = grid.iter().map(|&d| sh.crossing_map(d).unwrap()).collect();
    for w in xs.windows(2) {
        assert!(w[1] > w[0], "{xs:?}");
    }
    assert!(xs.iter().all(|&x| x > 0.0 && x <= SQRT_2));
    let i = sh.crossing_map(B_CENTER).unwrap();
    assert!(i > 0.0 && i < SQRT_2);
}

#[test]
fn start_heights_far_and_at_the_cylinder() {
    let sh = Shooter::default();
    let s = sh.integrate_shot(SQRT_2).unwrap();
    assert_eq!((s.crossing.t, s.crossing.x1), (0.0, 0.0));
    let s = sh.integrate_shot(A_CENTER).unwrap();
    assert!(s.crossing.x1 > 0.0 && s.crossing.x1 < SQRT_2);
    // Far outside the bracket: either a crossing or a clean inadmissibility.
    match sh.integrate_shot(10.0) {
        Ok(s) => assert!(s.crossing.t > 0.0),
        Err(e) => assert!(matches!(e, Error::InadmissibleShot { .. }), "{e}"),
    }
    assert!(matches!(sh.integrate_shot(0.0), Err(Error::Domain(_))));
}

#[test]
fn doubled_profile_closes_up_c1() {
    let t = certificate().reconstruct().unwrap();
    let closed = t.closed_profile(2e-3);
    let (first, last) = (closed.first().unwrap(), closed.last().unwrap());
    // The closed curve starts at (0, a0) and returns there with the same tangent.
    assert!((first.x - last.x).abs() < 1e-12 && (first.y - last.y).abs() < 1e-12);
    assert!((first.dx - last.dx).abs() < 1e-9 && (first.dy - last.dy).abs() < 1e-9);
    // Across the bottom axis point the reflected halves meet C¹.
    let half = t.half_profile(2e-3);
    let bottom = half.last().unwrap();
    assert!(bottom.x.abs() < 1e-12 && bottom.dy.abs() < 1e-9);
    // And at the cylinder the two shots join C¹.
    let n = half.len();
    let jumps = half.windows(2).map(|w| (w[1].dx - w[0].dx).hypot(w[1].dy - w[0].dy)).fold(0.0, f64::max);
    assert!(jumps < 0.05, "largest tangent jump between samples {jumps} over {n} samples");
}

#[test]
fn certificate_round_trips_through_json() {
    let c = certificate();
    let back = TorusCertificate::from_json(&c.to_json().unwrap()).unwrap();
    assert_eq!(&back, c);
}
