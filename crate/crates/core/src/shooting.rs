//! Sesqui-shooting for the self-shrinking torus.
//!
//! A top shot leaves the x₂-axis at height `a > √2`, a bottom shot at
//! height `b < √2`, both horizontally toward `x₁ > 0`. The bottom height is
//! never searched for: it is recovered from the top shot by inverting the
//! monotone crossing map at the cylinder `{x₂ = √2}`. Bisection then runs
//! over `a` alone on the tangent mismatch Φ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    arc_rhs_checked, chart_operator, Chart, CurveState, ProfileSegment, CYLINDER_RADIUS,
    SPHERE_RADIUS,
};
use crate::ode::{DenseSolution, Direction, Dopri5, Event, Tolerances};

/// The quantity the interval statements are measured in.
pub const EPS_GAP: f64 = 1e-3;
pub const A_CENTER: f64 = 4034.0 / 1217.0;
pub const A_HALF_WIDTH: f64 = 2.5 * EPS_GAP;
pub const B_CENTER: f64 = 7.0 / 16.0;
pub const B_HALF_WIDTH: f64 = 3.0 / 98.0;
pub const SPHERE_POINT: (f64, f64) = (29.0 / 32.0, 41.0 / 23.0);
pub const SPHERE_ANGLE: f64 = 11.0 / 10.0;
pub const SPHERE_TOLERANCE: f64 = 5.0 * EPS_GAP;
/// Default bisection bracket half-width around [`A_CENTER`].
pub const DEFAULT_BRACKET_HALF_WIDTH: f64 = 5e-3;

/// Lowest height used when bracketing the inverse crossing map.
const INVERT_LO: f64 = 0.02;
/// Offset below √2 for the upper end of that bracket; the map jumps to 0 at √2.
const INVERT_HI_GAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Arc-length budget for a single shot.
    pub max_param: f64,
    /// Bisection stops once `a⁺ − a⁻` is below this.
    pub bisection_tol: f64,
    /// Required accuracy `|I(b) − target|` of the inverted crossing map.
    pub invert_tol: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: 0.05,
            max_param: 20.0,
            bisection_tol: 1e-10,
            invert_tol: 1e-11,
        }
    }
}

impl ShootingConfig {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            rtol: self.rtol,
            atol: self.atol,
            max_step: self.max_step,
            ..Tolerances::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("max_step", self.max_step),
            ("max_param", self.max_param),
            ("bisection_tol", self.bisection_tol),
            ("invert_tol", self.invert_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// First crossing of the cylinder `{x₂ = √2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// Arc length from the start of the shot.
    pub t: f64,
    pub x1: f64,
    /// Unit tangent in the direction of travel.
    pub tangent: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct ShotTrajectory {
    pub start_height: f64,
    /// Arc-length parametrized geodesic from `(0, start_height)` to the crossing.
    pub solution: DenseSolution<4>,
    pub crossing: Crossing,
}

impl ShotTrajectory {
    pub fn state_at(&self, t: f64) -> CurveState {
        CurveState::from_array(t, self.solution.eval(t))
    }

    /// The shot up to its crossing as graph pieces, switching between the
    /// x₁- and x₂-graph charts with hysteresis on the slope.
    pub fn path(&self, cfg: &ShootingConfig) -> Result<Vec<ProfileSegment>> {
        chart_pieces(&self.solution, 0.0, self.crossing.t, cfg)
    }
}

fn inadmissible(h: f64, reason: impl Into<String>) -> Error {
    Error::InadmissibleShot {
        start_height: h,
        reason: reason.into(),
    }
}

/// Stateless driver for shots, the crossing map and Φ.
#[derive(Debug, Clone, Copy, Default)]
pub struct Shooter {
    pub cfg: ShootingConfig,
}

/// Result of one Φ evaluation.
#[derive(Debug, Clone)]
pub struct PhiEval {
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    pub top: ShotTrajectory,
    pub bottom: ShotTrajectory,
}

impl Shooter {
    pub fn new(cfg: ShootingConfig) -> Self {
        Self { cfg }
    }

    fn solver(&self) -> Dopri5 {
        Dopri5::new(self.cfg.tolerances())
    }

    /// Geodesic from `(0, h)` with `γ′(0) = (1, 0)`, stopped at its first
    /// crossing of the cylinder.
    pub fn integrate_shot(&self, h: f64) -> Result<ShotTrajectory> {
        if !(h > 0.0) {
            return Err(Error::Domain(format!("start height {h} is not positive")));
        }
        let y0 = [0.0, h, 1.0, 0.0];
        if h == CYLINDER_RADIUS {
            let solution = DenseSolution {
                t: vec![0.0],
                y: vec![y0],
                dy: vec![[1.0, 0.0, 0.0, 0.0]],
            };
            return Ok(ShotTrajectory {
                start_height: h,
                solution,
                crossing: Crossing {
                    t: 0.0,
                    x1: 0.0,
                    tangent: [1.0, 0.0],
                },
            });
        }
        let ev = Event::new(|_, s: &[f64; 4]| s[1] - CYLINDER_RADIUS, Direction::Either);
        let traj = self
            .solver()
            .solve(arc_rhs_checked, 0.0, y0, self.cfg.max_param, Some(&ev))
            .map_err(|e| inadmissible(h, e.to_string()))?;
        let hit = traj.event.ok_or_else(|| {
            inadmissible(
                h,
                format!("no cylinder crossing within arc length {}", self.cfg.max_param),
            )
        })?;
        let n = hit.y[2].hypot(hit.y[3]);
        Ok(ShotTrajectory {
            start_height: h,
            solution: traj.solution,
            crossing: Crossing {
                t: hit.t,
                x1: hit.y[0],
                tangent: [hit.y[2] / n, hit.y[3] / n],
            },
        })
    }

    /// `I(d)`: abscissa of the first cylinder crossing of the shot from `d`.
    pub fn crossing_map(&self, d: f64) -> Result<f64> {
        if !(0.0..=CYLINDER_RADIUS).contains(&d) {
            return Err(Error::Domain(format!("crossing map height {d} outside [0, √2]")));
        }
        if d == 0.0 {
            return Err(Error::Domain("shot from the axis itself".into()));
        }
        Ok(self.integrate_shot(d)?.crossing.x1)
    }

    /// The unique `b` with `I(b) = target`, by bisection on the increasing map.
    pub fn invert_crossing(&self, target: f64) -> Result<f64> {
        if target == 0.0 {
            return Ok(CYLINDER_RADIUS);
        }
        let mut lo = INVERT_LO;
        let mut hi = CYLINDER_RADIUS - INVERT_HI_GAP;
        let (i_lo, i_hi) = (self.crossing_map(lo)?, self.crossing_map(hi)?);
        if !(i_lo < target && target < i_hi) {
            return Err(Error::Bracket(format!(
                "target {target} outside the sampled crossing range ({i_lo}, {i_hi})"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let i_mid = self.crossing_map(mid)?;
            if (i_mid - target).abs() < self.cfg.invert_tol || hi - lo < 4.0 * f64::EPSILON {
                return Ok(mid);
            }
            if i_mid < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Φ(a) together with the matched bottom shot.
    pub fn phi_eval(&self, a: f64) -> Result<PhiEval> {
        let top = self.integrate_shot(a)?;
        let x1 = top.crossing.x1;
        if !(x1 > 0.0 && x1 <= CYLINDER_RADIUS) {
            return Err(inadmissible(a, format!("crossing at x1 = {x1} outside (0, √2]")));
        }
        let b = self.invert_crossing(x1)?;
        let bottom = self.integrate_shot(b)?;
        let phi = tangent_mismatch(top.crossing.tangent, bottom.crossing.tangent);
        Ok(PhiEval {
            a,
            b,
            phi,
            top,
            bottom,
        })
    }

    pub fn phi(&self, a: f64) -> Result<f64> {
        Ok(self.phi_eval(a)?.phi)
    }

    /// Bisection on Φ over `[lo, hi]`, followed by the sphere crossings and
    /// the interval verdicts.
    pub fn find_torus(&self, lo: f64, hi: f64) -> Result<TorusCertificate> {
        self.cfg.validate()?;
        if !(lo < hi) {
            return Err(Error::Bracket(format!("empty bracket [{lo}, {hi}]")));
        }
        let e_lo = self.phi_eval(lo).map_err(bracket_err)?;
        let e_hi = self.phi_eval(hi).map_err(bracket_err)?;
        if !(e_lo.phi * e_hi.phi < 0.0) {
            return Err(Error::Bracket(format!(
                "Φ does not change sign on [{lo}, {hi}]: Φ = {:.3e}, {:.3e}",
                e_lo.phi, e_hi.phi
            )));
        }
        // keep (neg, pos) = (Φ < 0 end, Φ > 0 end)
        let (mut neg, mut pos) = if e_lo.phi < 0.0 { (e_lo, e_hi) } else { (e_hi, e_lo) };
        let mut iterations = 0;
        while (pos.a - neg.a).abs() > self.cfg.bisection_tol {
            iterations += 1;
            let mid = self.phi_eval(0.5 * (neg.a + pos.a))?;
            if mid.phi == 0.0 {
                neg = mid.clone();
                pos = mid;
                break;
            }
            if mid.phi < 0.0 {
                neg = mid;
            } else {
                pos = mid;
            }
        }
        let a0 = 0.5 * (neg.a + pos.a);
        let located = self.phi_eval(a0)?;
        let torus = LocatedTorus::from_shots(self, located.top, located.bottom)?;
        let sphere = torus.sphere_crossing()?;
        let (pos_gap, tan_gap) = torus.matching_gaps();

        let (b_lo, b_hi) = (neg.b.min(pos.b), neg.b.max(pos.b));
        let verdicts = vec![
            IntervalVerdict::new("a0", a0, A_CENTER - A_HALF_WIDTH, A_CENTER + A_HALF_WIDTH),
            IntervalVerdict::new(
                "b0",
                torus.b0(),
                B_CENTER - B_HALF_WIDTH,
                B_CENTER + B_HALF_WIDTH,
            ),
            IntervalVerdict::new(
                "sphere_point_plus",
                dist(sphere.p_plus, SPHERE_POINT),
                0.0,
                SPHERE_TOLERANCE,
            ),
            IntervalVerdict::new(
                "sphere_point_minus",
                dist(sphere.p_minus, (-SPHERE_POINT.0, SPHERE_POINT.1)),
                0.0,
                SPHERE_TOLERANCE,
            ),
            IntervalVerdict::new(
                "sphere_angle",
                sphere.angle,
                SPHERE_ANGLE - SPHERE_TOLERANCE,
                SPHERE_ANGLE + SPHERE_TOLERANCE,
            ),
        ];
        Ok(TorusCertificate {
            bracket: PhiBracket {
                a_minus: neg.a,
                a_plus: pos.a,
                phi_minus: neg.phi,
                phi_plus: pos.phi,
                b_lo,
                b_hi,
                iterations,
            },
            a0,
            b0: torus.b0(),
            cylinder_x1: torus.top.crossing.x1,
            t_top_cylinder: torus.top.crossing.t,
            t_bot_cylinder: torus.bottom.crossing.t,
            matching_position_gap: pos_gap,
            matching_tangent_gap: tan_gap,
            sphere,
            verdicts,
            config: self.cfg,
        })
    }
}

fn bracket_err(e: Error) -> Error {
    match e {
        Error::InadmissibleShot { .. } | Error::Bracket(_) => {
            Error::Bracket(format!("bracket endpoint unusable: {e}"))
        }
        other => other,
    }
}

fn dist(p: (f64, f64), q: (f64, f64)) -> f64 {
    (p.0 - q.0).hypot(p.1 - q.1)
}

/// Oriented angle mismatch of the two crossing tangents: the z-component of
/// `T_top × (−T_bot)` for unit tangents. The bottom tangent is reversed so
/// that both point along the closed loop traversed from the top shot; Φ
/// vanishes exactly when the shots join with matching tangents.
pub fn tangent_mismatch(top: [f64; 2], bottom: [f64; 2]) -> f64 {
    let nt = top[0].hypot(top[1]);
    let nb = bottom[0].hypot(bottom[1]);
    -(top[0] * bottom[1] - top[1] * bottom[0]) / (nt * nb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiBracket {
    pub a_minus: f64,
    pub a_plus: f64,
    pub phi_minus: f64,
    pub phi_plus: f64,
    /// Bottom heights matched to the two ends, sorted.
    pub b_lo: f64,
    pub b_hi: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereCrossing {
    pub p_plus: (f64, f64),
    pub p_minus: (f64, f64),
    /// `∠(e₁, p⁺) = ∠(−e₁, p⁻)`.
    pub angle: f64,
    /// Arc length along the top shot to `p⁺`.
    pub t_top: f64,
    /// Arc length along the continued bottom shot to `p⁺`.
    pub t_bot: f64,
    /// Unit tangent of the top shot at `p⁺`.
    pub tangent_top: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalVerdict {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
}

impl IntervalVerdict {
    pub fn new(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            lo,
            hi,
            pass: lo <= value && value <= hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusCertificate {
    pub bracket: PhiBracket,
    pub a0: f64,
    pub b0: f64,
    /// Abscissa where both shots meet the cylinder.
    pub cylinder_x1: f64,
    pub t_top_cylinder: f64,
    pub t_bot_cylinder: f64,
    pub matching_position_gap: f64,
    pub matching_tangent_gap: f64,
    pub sphere: SphereCrossing,
    pub verdicts: Vec<IntervalVerdict>,
    pub config: ShootingConfig,
}

impl TorusCertificate {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, name: &str) -> Option<&IntervalVerdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    /// Re-integrates both shots from the stored heights.
    pub fn reconstruct(&self) -> Result<LocatedTorus> {
        let sh = Shooter::new(self.config);
        LocatedTorus::from_shots(&sh, sh.integrate_shot(self.a0)?, sh.integrate_shot(self.b0)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// The two matched shots of a located torus, plus the continuation of the
/// bottom shot past the cylinder up to the sphere.
#[derive(Debug, Clone)]
pub struct LocatedTorus {
    pub cfg: ShootingConfig,
    pub top: ShotTrajectory,
    pub bottom: ShotTrajectory,
}

/// The graph pieces over which the Grönwall ledgers are stated.
#[derive(Debug, Clone)]
pub struct TorusSegments {
    /// `x₂ = u_T(x₁)` on `[0, 3/5]`.
    pub top_x1: ProfileSegment,
    /// `x₁ = f_T(x₂)` from `u_T(3/5)` down to the sphere height `y_S`.
    pub top_x2_sphere: ProfileSegment,
    /// `x₁ = f_T(x₂)` from `y_S` down to `√2`.
    pub top_x2_cyl: ProfileSegment,
    /// `x₂ = u_B(x₁)` on `[0, 1/2]`.
    pub bot_x1: ProfileSegment,
    /// `x₁ = f_B(x₂)` from `u_B(1/2)` up to `√2`.
    pub bot_x2: ProfileSegment,
}

pub const TOP_X1_END: f64 = 3.0 / 5.0;
pub const BOT_X1_END: f64 = 1.0 / 2.0;
/// Node spacing for re-integrated graph pieces.
pub const GRAPH_STEP: f64 = 2.5e-3;

impl LocatedTorus {
    pub fn from_shots(sh: &Shooter, top: ShotTrajectory, bottom: ShotTrajectory) -> Result<Self> {
        Ok(Self {
            cfg: sh.cfg,
            top,
            bottom,
        })
    }

    pub fn a0(&self) -> f64 {
        self.top.start_height
    }

    pub fn b0(&self) -> f64 {
        self.bottom.start_height
    }

    /// Jumps in position and unit tangent (with the bottom reversed) where
    /// the two shots meet the cylinder.
    pub fn matching_gaps(&self) -> (f64, f64) {
        let (ct, cb) = (self.top.crossing, self.bottom.crossing);
        let pos = (ct.x1 - cb.x1).abs();
        let tan = (ct.tangent[0] + cb.tangent[0]).hypot(ct.tangent[1] + cb.tangent[1]);
        (pos, tan)
    }

    pub fn sphere_crossing(&self) -> Result<SphereCrossing> {
        let ev = Event::new(
            |_, s: &[f64; 4]| s[0] * s[0] + s[1] * s[1] - SPHERE_RADIUS * SPHERE_RADIUS,
            Direction::Falling,
        );
        let t_top = self
            .top
            .solution
            .first_root(&ev, 0.0)
            .ok_or_else(|| Error::Precondition("top arc does not meet the sphere".into()))?;
        let s = self.top.solution.eval(t_top);
        let n = s[2].hypot(s[3]);
        let bot = self.continued_bottom(Some(Direction::Rising))?;
        let t_bot = bot
            .t_end();
        Ok(SphereCrossing {
            p_plus: (s[0], s[1]),
            p_minus: (-s[0], s[1]),
            angle: s[1].atan2(s[0]),
            t_top,
            t_bot,
            tangent_top: [s[2] / n, s[3] / n],
        })
    }

    /// The bottom shot continued past the cylinder; with `Some(dir)` it stops
    /// on the sphere, otherwise at `max_param`.
    pub fn continued_bottom(&self, sphere: Option<Direction>) -> Result<DenseSolution<4>> {
        let ev = sphere.map(|d| {
            Event::new(
                |_, s: &[f64; 4]| s[0] * s[0] + s[1] * s[1] - SPHERE_RADIUS * SPHERE_RADIUS,
                d,
            )
        });
        let traj = Dopri5::new(self.cfg.tolerances()).solve(
            arc_rhs_checked,
            0.0,
            [0.0, self.b0(), 1.0, 0.0],
            self.cfg.max_param,
            ev.as_ref(),
        )?;
        if sphere.is_some() && traj.event.is_none() {
            return Err(Error::Precondition("bottom shot does not reach the sphere".into()));
        }
        Ok(traj.solution)
    }

    /// Right half of the profile, from `(0, a⁰)` along the top shot to the
    /// cylinder and back along the reversed bottom shot to `(0, b⁰)`, sampled
    /// at roughly `spacing` in arc length.
    pub fn half_profile(&self, spacing: f64) -> Vec<CurveState> {
        let mut out = Vec::new();
        let lt = self.top.crossing.t;
        let lb = self.bottom.crossing.t;
        let nt = ((lt / spacing).ceil() as usize).max(1);
        for i in 0..=nt {
            let t = lt * i as f64 / nt as f64;
            out.push(CurveState::from_array(t, self.top.solution.eval(t)));
        }
        let nb = ((lb / spacing).ceil() as usize).max(1);
        for i in 1..=nb {
            let s = lb * (1.0 - i as f64 / nb as f64);
            let [x, y, dx, dy] = self.bottom.solution.eval(s);
            out.push(CurveState {
                t: lt + lb - s,
                x,
                y,
                dx: -dx,
                dy: -dy,
            });
        }
        out
    }

    /// The closed profile: the right half followed by its mirror image.
    pub fn closed_profile(&self, spacing: f64) -> Vec<CurveState> {
        let half = self.half_profile(spacing);
        let l = half.last().map(|s| s.t).unwrap_or(0.0);
        let mut out = half.clone();
        for s in half.iter().rev().skip(1) {
            out.push(CurveState {
                t: 2.0 * l - s.t,
                x: -s.x,
                y: s.y,
                dx: s.dx,
                dy: -s.dy,
            });
        }
        out
    }

    /// Re-integrates the graph pieces the ledgers refer to, each directly in
    /// its own chart, and measures their residuals.
    pub fn segments(&self) -> Result<TorusSegments> {
        let tol = self.cfg.tolerances().with_max_step(GRAPH_STEP);
        let y_s = self.sphere_crossing()?.p_plus.1;
        let top_x1 = graph_piece(Chart::GraphX1, 0.0, TOP_X1_END, [self.a0(), 0.0], tol)?;
        let (u, p, _) = top_x1.eval(TOP_X1_END);
        let top_x2_sphere = graph_piece(Chart::GraphX2, u, y_s, [TOP_X1_END, 1.0 / p], tol)?;
        let (f, q, _) = top_x2_sphere.eval(y_s);
        let top_x2_cyl = graph_piece(Chart::GraphX2, y_s, CYLINDER_RADIUS, [f, q], tol)?;
        let bot_x1 = graph_piece(Chart::GraphX1, 0.0, BOT_X1_END, [self.b0(), 0.0], tol)?;
        let (u, p, _) = bot_x1.eval(BOT_X1_END);
        let bot_x2 = graph_piece(Chart::GraphX2, u, CYLINDER_RADIUS, [BOT_X1_END, 1.0 / p], tol)?;
        Ok(TorusSegments {
            top_x1,
            top_x2_sphere,
            top_x2_cyl,
            bot_x1,
            bot_x2,
        })
    }
}

/// Integrates the scalar shrinker ODE of `chart` from `lo` to `hi` (either
/// order) with initial `(u, u')` and packs the nodes as a segment.
pub fn graph_piece(
    chart: Chart,
    lo: f64,
    hi: f64,
    init: [f64; 2],
    tol: Tolerances,
) -> Result<ProfileSegment> {
    let rhs = |t: f64, s: &[f64; 2]| -> Result<[f64; 2]> {
        Ok([s[1], chart_operator(chart, s[0], s[1], t)?])
    };
    let traj = Dopri5::new(tol).solve(rhs, lo, init, hi, None)?;
    let sol = traj.solution;
    let u = sol.y.iter().map(|s| s[0]).collect();
    let du = sol.y.iter().map(|s| s[1]).collect();
    let ddu = sol.dy.iter().map(|d| d[1]).collect();
    ProfileSegment::from_samples(chart, sol.t, u, du, ddu)
}

/// Splits the arc-length solution on `[t0, t1]` into graph pieces: a piece
/// in the x₁-chart hands over to the x₂-chart once `|dx₂/dx₁|` exceeds the
/// switch slope and returns once it drops below the return slope.
pub fn chart_pieces(
    sol: &DenseSolution<4>,
    t0: f64,
    t1: f64,
    cfg: &ShootingConfig,
) -> Result<Vec<ProfileSegment>> {
    use crate::geometry::{CHART_RETURN_SLOPE, CHART_SWITCH_SLOPE};
    let spacing = GRAPH_STEP.min(cfg.max_step);
    let n = (((t1 - t0) / spacing).ceil() as usize).max(1);
    let states: Vec<([f64; 4], [f64; 4])> = (0..=n)
        .map(|i| sol.eval_with_derivative(t0 + (t1 - t0) * i as f64 / n as f64))
        .collect();
    let slope_x1 = |s: &[f64; 4]| (s[3] / s[2]).abs();
    let mut chart = if slope_x1(&states[0].0) <= CHART_SWITCH_SLOPE {
        Chart::GraphX1
    } else {
        Chart::GraphX2
    };
    let mut pieces = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for (i, (s, _)) in states.iter().enumerate() {
        let m = slope_x1(s);
        let next = match chart {
            Chart::GraphX1 if !(m <= CHART_SWITCH_SLOPE) => Some(Chart::GraphX2),
            Chart::GraphX2 if m < CHART_RETURN_SLOPE => Some(Chart::GraphX1),
            _ => None,
        };
        current.push(i);
        if let Some(c) = next {
            if current.len() >= 2 {
                pieces.push(pack(chart, &states, &current)?);
            }
            current = vec![i];
            chart = c;
        }
    }
    if current.len() >= 2 {
        pieces.push(pack(chart, &states, &current)?);
    }
    Ok(pieces)
}

fn pack(chart: Chart, states: &[([f64; 4], [f64; 4])], idx: &[usize]) -> Result<ProfileSegment> {
    let (mut t, mut u, mut du, mut ddu) = (vec![], vec![], vec![], vec![]);
    for &i in idx {
        let ([x, y, dx, dy], [_, _, ddx, ddy]) = states[i];
        match chart {
            Chart::GraphX1 => {
                t.push(x);
                u.push(y);
                du.push(dy / dx);
                ddu.push((ddy * dx - dy * ddx) / dx.powi(3));
            }
            _ => {
                t.push(y);
                u.push(x);
                du.push(dx / dy);
                ddu.push((ddx * dy - dx * ddy) / dy.powi(3));
            }
        }
    }
    ProfileSegment::from_samples(chart, t, u, du, ddu)
}

/// CSV rendering with header `t,x1,x2,dx1,dx2`.
pub fn profile_csv(states: &[CurveState]) -> String {
    let mut s = String::from("t,x1,x2,dx1,dx2\n");
    for p in states {
        s.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            p.t, p.x, p.y, p.dx, p.dy
        ));
    }
    s
}

/// SVG of the torus profile, the radius-2 sphere and the reference cylinder
/// in the half-plane.
pub fn profile_svg(states: &[CurveState]) -> String {
    let (w, h, scale) = (800.0, 440.0, 100.0);
    let px = |x: f64| w / 2.0 + scale * x;
    let py = |y: f64| h - 20.0 - scale * y;
    let mut path = String::new();
    for (i, p) in states.iter().enumerate() {
        let cmd = if i == 0 { 'M' } else { 'L' };
        path.push_str(&format!("{cmd}{:.2},{:.2} ", px(p.x), py(p.y)));
    }
    let r = SPHERE_RADIUS * scale;
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            "  <line x1=\"0\" y1=\"{ax:.2}\" x2=\"{w}\" y2=\"{ax:.2}\" stroke=\"#888\" stroke-width=\"1\"/>\n",
            "  <line x1=\"0\" y1=\"{cy:.2}\" x2=\"{w}\" y2=\"{cy:.2}\" stroke=\"#bbb\" stroke-dasharray=\"4 4\"/>\n",
            "  <path d=\"M{sl:.2},{ax:.2} A{r:.2},{r:.2} 0 0 1 {sr:.2},{ax:.2}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n",
            "  <path d=\"{path}Z\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        ax = py(0.0),
        cy = py(CYLINDER_RADIUS),
        sl = px(-SPHERE_RADIUS),
        sr = px(SPHERE_RADIUS),
        r = r,
        path = path.trim_end(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cylinder_shot_is_degenerate() {
        let s = Shooter::default().integrate_shot(CYLINDER_RADIUS).unwrap();
        assert_eq!(s.crossing.t, 0.0);
        assert_eq!(s.crossing.x1, 0.0);
    }

    #[test]
    fn parallel_tangents_have_zero_mismatch() {
        assert_eq!(tangent_mismatch([0.3, -0.8], [0.3, -0.8]), 0.0);
        assert_eq!(tangent_mismatch([0.3, -0.8], [-0.3, 0.8]), 0.0);
    }

    #[test]
    fn invert_degenerate_target() {
        assert_eq!(Shooter::default().invert_crossing(0.0).unwrap(), CYLINDER_RADIUS);
    }

    #[test]
    fn crossing_map_rejects_heights_above_cylinder() {
        assert!(matches!(Shooter::default().crossing_map(2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn round_trip_through_inverse() {
        let sh = Shooter::default();
        let i = sh.crossing_map(0.7).unwrap();
        assert_abs_diff_eq!(sh.invert_crossing(i).unwrap(), 0.7, epsilon = 1e-9);
    }

    #[test]
    fn invert_rejects_out_of_range_target() {
        assert!(matches!(Shooter::default().invert_crossing(1.5), Err(Error::Bracket(_))));
    }

    #[test]
    fn csv_header() {
        let s = CurveState::new(0.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        assert!(profile_csv(&[s]).starts_with("t,x1,x2,dx1,dx2\n"));
    }
}
