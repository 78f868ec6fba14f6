//! Stability operator of a rotation shrinker, its Fourier modes, and the
//! kernel verdicts on the torus pieces.
//!
//! The m-th mode in a constant-speed parametrization reads
//! `ω𝓛ₘv = v'' + (y'/y − ½(xx' + yy'))v' + ω(|A|² + ½ − m²/y²)v`.
//! In the graph charts the same operator is `v'' + Pv' + Qv` (x₁-graphs) or
//! `g'' + Rg' + Sg` (x₂-graphs) once the shrinker equation is used.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{arc_rhs, arc_rhs_checked, geom_quantities, k_ang, Chart, CurveState, ProfileSegment};
use crate::gronwall::{Bound, Piece, Slot};
use crate::ode::{Dopri5, DenseSolution, Direction, Event, Tolerances};
use crate::shooting::{LocatedTorus, TorusSegments, BOT_X1_END, GRAPH_STEP, TOP_X1_END};
use crate::verdict::{Verdict, DECISION_FACTOR};

/// `(P, Q)` for x₁-graphs or `(R, S)` for x₂-graphs at parameter `t` with
/// `(u, p) = (u, u')`.
pub fn graph_coeffs(chart: Chart, t: f64, u: f64, p: f64) -> Result<(f64, f64)> {
    let w = 1.0 + p * p;
    match chart {
        Chart::GraphX1 => {
            if !(u > 0.0) {
                return Err(Error::Domain(format!("x1-graph at height {u}")));
            }
            let a = (u - t * p) / 2.0 - 1.0 / u;
            Ok((-t / 2.0 * w, a * a + 1.0 / (u * u) + w / 2.0))
        }
        Chart::GraphX2 => {
            if !(t > 0.0) {
                return Err(Error::Domain(format!("x2-graph at height {t}")));
            }
            let a = (t * p - u) / 2.0 - p / t;
            Ok(((1.0 / t - t / 2.0) * w, a * a + p * p / (t * t) + w / 2.0))
        }
        c => Err(Error::ChartEscape { chart: c, t, reason: "not a graph chart".into() }),
    }
}

/// `(∂ₚP, ∂ᵤQ, ∂ₚQ)` (or the `R, S` analogues).
pub fn graph_coeff_partials(chart: Chart, t: f64, u: f64, p: f64) -> Result<(f64, f64, f64)> {
    match chart {
        Chart::GraphX1 => {
            let a = (u - t * p) / 2.0 - 1.0 / u;
            Ok((-t * p, 2.0 * a * (0.5 + 1.0 / (u * u)) - 2.0 / (u * u * u), -t * a + p))
        }
        Chart::GraphX2 => {
            let a = (t * p - u) / 2.0 - p / t;
            let c = t / 2.0 - 1.0 / t;
            Ok((-2.0 * c * p, -a, c * (t * p - u) + 4.0 * p / (t * t)))
        }
        c => Err(Error::ChartEscape { chart: c, t, reason: "not a graph chart".into() }),
    }
}

/// `v'' + first·v' + zeroth·v` is `ω𝓛ₘv` in the chart's parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeCoeffs {
    pub first: f64,
    pub zeroth: f64,
}

pub fn mode_operator_coeffs(m: u32, state: &CurveState, chart: Chart) -> Result<ModeCoeffs> {
    state.validate()?;
    let m2 = (m as f64).powi(2);
    match chart {
        Chart::GraphX1 => {
            let p = state.dy / state.dx;
            let (a, b) = graph_coeffs(chart, state.x, state.y, p)?;
            Ok(ModeCoeffs { first: a, zeroth: b - m2 * (1.0 + p * p) / (state.y * state.y) })
        }
        Chart::GraphX2 => {
            let q = state.dx / state.dy;
            let (a, b) = graph_coeffs(chart, state.y, state.x, q)?;
            Ok(ModeCoeffs { first: a, zeroth: b - m2 * (1.0 + q * q) / (state.y * state.y) })
        }
        Chart::ArcParam => {
            let g = geom_quantities(state)?;
            Ok(ModeCoeffs {
                first: state.dy / state.y - 0.5 * (state.x * state.dx + state.y * state.dy),
                zeroth: g.omega * (g.a_sq + 0.5 - m2 / (state.y * state.y)),
            })
        }
        Chart::Polar => Err(Error::ChartEscape {
            chart,
            t: state.t,
            reason: "mode equations are not set up in the polar chart".into(),
        }),
    }
}

/// `√λ = y e^{−|x|²/4}`: the Angenent length element. `J = √λ v` obeys
/// `J'' + K_Ang J = 0` in Angenent arc length `dτ = √λ ds`.
pub fn angenent_factor(x: f64, y: f64) -> f64 {
    y * (-(x * x + y * y) / 4.0).exp()
}

/// `𝓛ₘu` at one point for `u = u(t)e^{imθ}` along an arbitrary regular
/// parametrization with acceleration `accel`; `u = [u, u_t, u_tt]`.
pub fn stability_apply(state: &CurveState, accel: [f64; 2], m: u32, u: [f64; 3]) -> Result<f64> {
    let g = geom_quantities(state)?;
    let (w, sw) = (g.omega, g.omega.sqrt());
    let dw = 2.0 * (state.dx * accel[0] + state.dy * accel[1]);
    // ∂ₜ(y/√ω) = y'/√ω − y ω'/(2ω^{3/2}).
    let d_coef = state.dy / sw - state.y * dw / (2.0 * w * sw);
    let lap = (d_coef * u[1] + state.y / sw * u[2]) / (state.y * sw);
    let drift = 0.5 * (state.x * state.dx + state.y * state.dy) / w * u[1];
    let m2 = (m as f64).powi(2);
    Ok(lap - drift + (g.a_sq + 0.5 - m2 / (state.y * state.y)) * u[0])
}

/// Mean curvature `H = ½(xy' − yx')` and its first two arc-length
/// derivatives along a unit-speed shrinker profile.
pub fn mean_curvature_jet(s: [f64; 4]) -> [f64; 3] {
    let [x, y, dx, dy] = s;
    let r = (y * dx - x * dy) / 2.0 - dx / y;
    let (ddx, ddy) = (r * dy, -r * dx);
    let dr = (y * ddx - x * ddy) / 2.0 - ddx / y + dx * dy / (y * y);
    let (dddx, dddy) = (dr * dy + r * ddy, -dr * dx - r * ddx);
    [
        0.5 * (x * dy - y * dx),
        0.5 * (x * ddy - y * ddx),
        0.5 * (dx * ddy + x * dddy - dy * ddx - y * dddx),
    ]
}

/// `sup |𝓛H − H|` over `samples` points of a unit-speed profile solution.
pub fn eigenfunction_residual(curve: &DenseSolution<4>, samples: usize) -> Result<f64> {
    let (a, b) = (curve.t_start(), curve.t_end());
    let mut worst = 0.0f64;
    for i in 0..=samples {
        let t = a + (b - a) * i as f64 / samples as f64;
        let s = curve.eval(t);
        let acc = arc_rhs(s);
        let h = mean_curvature_jet(s);
        let st = CurveState::from_array(t, s);
        worst = worst.max((stability_apply(&st, [acc[2], acc[3]], 0, h)? - h[0]).abs());
    }
    Ok(worst)
}

/// Interior sign changes of `H` along a sampled profile.
pub fn mean_curvature_zeros(states: &[CurveState]) -> Result<usize> {
    let mut count = 0;
    let mut prev: Option<f64> = None;
    for st in states {
        let h = geom_quantities(st)?.h;
        if let Some(p) = prev {
            if p * h < 0.0 {
                count += 1;
            }
        }
        if h != 0.0 {
            prev = Some(h);
        }
    }
    Ok(count)
}

/// `e^{−g}𝓛(e^{g}w) − (Δ + |A|² − (|X|² + |X^⊥|²)/16 + 1)w` with
/// `g = |X|²/8`, for a rotation-invariant `w = [w, w', w'']` at a point of a
/// unit-speed shrinker profile.
pub fn conjugation_defect(s: [f64; 4], w: [f64; 3]) -> Result<f64> {
    let [x, y, dx, dy] = s;
    let acc = arc_rhs(s);
    let st = CurveState::from_array(0.0, s);
    let g = (x * x + y * y) / 8.0;
    let dg = (x * dx + y * dy) / 4.0;
    let ddg = (dx * dx + dy * dy + x * acc[2] + y * acc[3]) / 4.0;
    let e = g.exp();
    let u = [
        e * w[0],
        e * (w[1] + dg * w[0]),
        e * (w[2] + 2.0 * dg * w[1] + (ddg + dg * dg) * w[0]),
    ];
    let lhs = stability_apply(&st, [acc[2], acc[3]], 0, u)? / e;
    let q = geom_quantities(&st)?;
    let x_perp = 2.0 * q.h;
    let lap = w[2] + dy / y * w[1];
    let rhs = lap + (q.a_sq - (x * x + y * y + x_perp * x_perp) / 16.0 + 1.0) * w[0];
    Ok(lhs - rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

/// One Fourier mode on an arc of a shrinker profile, integrated together
/// with the curve in unit-speed arc length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeProblem {
    pub m: u32,
    /// Unit-speed initial state of the arc.
    pub start: CurveState,
    pub length: f64,
    pub left: Boundary,
    pub right: Boundary,
    /// `v(0)` for a Neumann left end, `v'(0)` for a Dirichlet one.
    pub pin: f64,
}

impl ModeProblem {
    pub fn validate(&self) -> Result<()> {
        self.start.validate()?;
        if !(self.length > 0.0) || self.pin == 0.0 {
            return Err(Error::Precondition("mode problem needs positive length and a nonzero pin".into()));
        }
        if (self.start.omega() - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition("mode problems start from a unit-speed state".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSolution {
    pub m: u32,
    pub length: f64,
    pub endpoint_value: f64,
    /// Derivative in the isothermal parameter `dt = ds/y` of the surface.
    pub endpoint_derivative: f64,
    pub endpoint_arc_derivative: f64,
    pub end_height: f64,
    pub zero_count: usize,
    pub zeros: Vec<f64>,
    /// Sup of the mode equation's residual on the dense interpolant.
    pub residual: f64,
}

impl ModeSolution {
    /// The quantity that vanishes iff the right boundary condition holds.
    pub fn right_condition(&self, right: Boundary) -> f64 {
        match right {
            Boundary::Dirichlet => self.endpoint_value,
            Boundary::Neumann => self.endpoint_derivative,
        }
    }
}

pub const MODE_STEP: f64 = GRAPH_STEP;

fn mode_rhs(m: u32) -> impl Fn(f64, &[f64; 6]) -> Result<[f64; 6]> {
    move |t, z| {
        let c = [z[0], z[1], z[2], z[3]];
        let d = arc_rhs_checked(t, &c)?;
        let k = mode_operator_coeffs(m, &CurveState::from_array(t, c), Chart::ArcParam)?;
        Ok([d[0], d[1], d[2], d[3], z[5], -(k.first * z[5] + k.zeroth * z[4])])
    }
}

/// Integrates `𝓛ₘv = 0` along the arc and returns the solution together
/// with its dense output `(x, y, x', y', v, v')`.
pub fn integrate_mode_dense(p: &ModeProblem, tol: Tolerances) -> Result<(ModeSolution, DenseSolution<6>)> {
    p.validate()?;
    let (v0, dv0) = match p.left {
        Boundary::Neumann => (p.pin, 0.0),
        Boundary::Dirichlet => (0.0, p.pin),
    };
    let s = p.start;
    let f = mode_rhs(p.m);
    let tol = Tolerances { max_step: tol.max_step.min(MODE_STEP), ..tol };
    let sol = Dopri5::new(tol).solve(&f, 0.0, [s.x, s.y, s.dx, s.dy, v0, dv0], p.length, None)?.solution;
    let end = sol.last();

    // Zero count: sign changes on nodes and interior sub-samples, with a
    // tangency guard.
    let mut zeros = Vec::new();
    let mut prev = (0.0, v0);
    let mut residual = 0.0f64;
    let scale = sol.y.iter().map(|z| z[4].abs().max(z[5].abs())).fold(0.0, f64::max);
    for i in 0..sol.len() - 1 {
        let (a, b) = (sol.t[i], sol.t[i + 1]);
        for k in 1..=4 {
            let t = a + (b - a) * k as f64 / 4.0;
            let (z, dz) = sol.eval_with_derivative(t);
            if k < 4 {
                residual = residual.max((dz[5] - f(t, &z)?[5]).abs());
            }
            if z[4].abs() < 1e-12 * scale && z[5].abs() < 1e-9 * scale {
                return Err(Error::Precondition(format!("mode solution is tangent to zero near s = {t}")));
            }
            let skip_start = i == 0 && k == 1 && p.left == Boundary::Dirichlet;
            if prev.1 * z[4] < 0.0 && !skip_start {
                let ev = Event::new(|_, z: &[f64; 6]| z[4], Direction::Either);
                zeros.push(sol.first_root(&ev, prev.0).unwrap_or(t));
            }
            if z[4] != 0.0 {
                prev = (t, z[4]);
            }
        }
    }
    // A root at the right end is a boundary value, not an interior zero.
    zeros.retain(|&t| p.length - t > 1e-9);
    let out = ModeSolution {
        m: p.m,
        length: p.length,
        endpoint_value: end[4],
        endpoint_derivative: end[1] * end[5],
        endpoint_arc_derivative: end[5],
        end_height: end[1],
        zero_count: zeros.len(),
        zeros,
        residual,
    };
    Ok((out, sol))
}

pub fn integrate_mode(p: &ModeProblem, tol: Tolerances) -> Result<ModeSolution> {
    Ok(integrate_mode_dense(p, tol)?.0)
}

/// The `m = 0` field again, now as `J = √λ v` solving `J'' + K_Ang J = 0`
/// in Angenent arc length; returns `max |J/√λ − v|` over the arc.
pub fn angenent_route_discrepancy(p: &ModeProblem, tol: Tolerances) -> Result<f64> {
    if p.m != 0 || p.left != Boundary::Neumann {
        return Err(Error::Precondition("the Angenent route covers the m = 0 Neumann problem".into()));
    }
    let (_, direct) = integrate_mode_dense(p, tol)?;
    let s = p.start;
    // (x, y, x', y', J, J_τ) as functions of Euclidean s; x' etc. in s.
    let rhs = |t: f64, z: &[f64; 6]| -> Result<[f64; 6]> {
        let c = [z[0], z[1], z[2], z[3]];
        let d = arc_rhs_checked(t, &c)?;
        let l = angenent_factor(z[0], z[1]);
        Ok([d[0], d[1], d[2], d[3], l * z[5], -l * k_ang(z[0], z[1]) * z[4]])
    };
    // J(0) = √λ v(0); J_τ(0) = (√λ)_s v / √λ + v_s = (√λ)_s/√λ · v at a Neumann end.
    let l0 = angenent_factor(s.x, s.y);
    let dlog = s.dy / s.y - (s.x * s.dx + s.y * s.dy) / 2.0;
    let j0 = l0 * p.pin;
    let jt0 = dlog * p.pin;
    let tol = Tolerances { max_step: tol.max_step.min(MODE_STEP), ..tol };
    let sol = Dopri5::new(tol).solve(rhs, 0.0, [s.x, s.y, s.dx, s.dy, j0, jt0], p.length, None)?.solution;
    let mut worst = 0.0f64;
    for i in 0..=400 {
        let t = p.length * i as f64 / 400.0;
        let z = sol.eval(t);
        let v = direct.eval(t)[4];
        worst = worst.max((z[4] / angenent_factor(z[0], z[1]) - v).abs());
    }
    Ok(worst)
}

/// Certified upper bound of `M₀ = sup y√(½ + |A|²)` from node values plus
/// a Lipschitz pad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeCutoff {
    pub node_sup: f64,
    pub bound: f64,
    pub lipschitz: f64,
}

impl ModeCutoff {
    /// First mode the cutoff disposes of.
    pub fn first_trivial_mode(&self) -> u32 {
        self.bound.ceil() as u32
    }
}

pub fn mode_cutoff(states: &[CurveState]) -> Result<ModeCutoff> {
    if states.len() < 2 {
        return Err(Error::Precondition("mode cutoff needs at least two samples".into()));
    }
    let vals: Vec<f64> = states
        .iter()
        .map(|s| geom_quantities(s).map(|g| s.y * (0.5 + g.a_sq).sqrt()))
        .collect::<Result<_>>()?;
    let mut lip = 0.0f64;
    let mut hmax = 0.0f64;
    for i in 1..states.len() {
        let h = (states[i].t - states[i - 1].t).abs();
        if h > 0.0 {
            lip = lip.max((vals[i] - vals[i - 1]).abs() / h);
        }
        hmax = hmax.max(h);
    }
    let node_sup = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Difference quotients underestimate the slope; double them.
    let lipschitz = 2.0 * lip;
    Ok(ModeCutoff { node_sup, bound: node_sup + lipschitz * hmax / 2.0, lipschitz })
}

/// The displayed matrix `[[u_t, −u_b], [u'_t, u'_b]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointMatrix {
    pub entries: [[f64; 2]; 2],
    pub det: f64,
}

impl EndpointMatrix {
    pub fn new(top: (f64, f64), bot: (f64, f64)) -> Self {
        let entries = [[top.0, -bot.0], [top.1, bot.1]];
        Self { entries, det: top.0 * bot.1 + bot.0 * top.1 }
    }

    /// Bound on `|Δdet|` when every top entry moves by `bt` and every
    /// bottom entry by `bb`.
    pub fn det_budget(&self, bt: f64, bb: f64) -> f64 {
        let [[a, b], [c, d]] = self.entries;
        (d.abs() + c.abs()) * bt + (a.abs() + b.abs()) * bb + 2.0 * bt * bb
    }
}

pub fn endpoint_matrix(top: &ModeSolution, bot: &ModeSolution) -> EndpointMatrix {
    EndpointMatrix::new(
        (top.endpoint_value, top.endpoint_derivative),
        (bot.endpoint_value, bot.endpoint_derivative),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SturmConsistency {
    /// At least two zeros: the field could still be a kernel element.
    Admissible,
    /// Fewer zeros than the comparison with `H` requires.
    CannotBeKernel,
}

/// Sturm comparison with `𝓛H = H`: with `H` changing sign `h_zeros` times,
/// a Neumann kernel element of the half torus must change sign at least
/// `h_zeros + 1` times.
pub fn sturm_zero_check(solution: &ModeSolution, h_zeros: usize) -> SturmConsistency {
    if solution.zero_count > h_zeros {
        SturmConsistency::Admissible
    } else {
        SturmConsistency::CannotBeKernel
    }
}

/// Jacobi field of one graph piece: nodes of the chart coordinate with
/// `(g, g')` and the certified residual of `g'' + Pg' + Qg` on the numerical
/// curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJacobi {
    pub piece: Piece,
    pub chart: Chart,
    pub nodes: Vec<f64>,
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
    pub delta: f64,
}

impl GraphJacobi {
    pub fn end(&self) -> (f64, f64) {
        (*self.g.last().unwrap(), *self.dg.last().unwrap())
    }

    /// Linear interpolation of `(g, g')` at chart coordinate `x`.
    pub fn at(&self, x: f64) -> (f64, f64) {
        let asc = self.nodes[self.nodes.len() - 1] >= self.nodes[0];
        let k = if asc {
            self.nodes.partition_point(|&s| s <= x)
        } else {
            self.nodes.partition_point(|&s| s >= x)
        }
        .clamp(1, self.nodes.len() - 1);
        let w = (x - self.nodes[k - 1]) / (self.nodes[k] - self.nodes[k - 1]);
        (
            self.g[k - 1] + w * (self.g[k] - self.g[k - 1]),
            self.dg[k - 1] + w * (self.dg[k] - self.dg[k - 1]),
        )
    }
}

pub fn graph_jacobi(piece: Piece, seg: &ProfileSegment, init: [f64; 2], tol: Tolerances) -> Result<GraphJacobi> {
    let chart = seg.chart;
    let rhs = |t: f64, z: &[f64; 2]| -> Result<[f64; 2]> {
        let (u, p, _) = seg.eval(t);
        let (a, b) = graph_coeffs(chart, t, u, p)?;
        Ok([z[1], -(a * z[1] + b * z[0])])
    };
    // `domain` is sorted; the field starts where the curve piece starts.
    let (t0, t1) = (seg.nodes[0], *seg.nodes.last().unwrap());
    let tol = Tolerances { max_step: tol.max_step.min(GRAPH_STEP), ..tol };
    let sol = Dopri5::new(tol).solve(rhs, t0, init, t1, None)?.solution;
    let mut delta = 0.0f64;
    for i in 0..sol.len() - 1 {
        for k in 1..8 {
            let t = sol.t[i] + (sol.t[i + 1] - sol.t[i]) * k as f64 / 8.0;
            let (z, dz) = sol.eval_with_derivative(t);
            delta = delta.max((dz[1] - rhs(t, &z)?[1]).abs());
        }
    }
    Ok(GraphJacobi {
        piece,
        chart,
        nodes: sol.t.clone(),
        g: sol.y.iter().map(|z| z[0]).collect(),
        dg: sol.y.iter().map(|z| z[1]).collect(),
        delta,
    })
}

/// The m = 0 Neumann field on every ledger piece, handed over between
/// charts with `dv/dx₂ = (dv/dx₁)/u'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusJacobi {
    pub pieces: BTreeMap<Piece, GraphJacobi>,
}

pub fn torus_jacobi(seg: &TorusSegments, tol: Tolerances) -> Result<TorusJacobi> {
    let mut pieces = BTreeMap::new();
    let top1 = graph_jacobi(Piece::TopX1, &seg.top_x1, [1.0, 0.0], tol)?;
    let (g, dg) = top1.end();
    let slope = seg.top_x1.eval(TOP_X1_END).1;
    let top2 = graph_jacobi(Piece::TopX2ToSphere, &seg.top_x2_sphere, [g, dg / slope], tol)?;
    let top3 = graph_jacobi(Piece::TopX2SphereToCyl, &seg.top_x2_cyl, {
        let (g, dg) = top2.end();
        [g, dg]
    }, tol)?;
    let bot1 = graph_jacobi(Piece::BotX1, &seg.bot_x1, [1.0, 0.0], tol)?;
    let (g, dg) = bot1.end();
    let slope = seg.bot_x1.eval(BOT_X1_END).1;
    let bot2 = graph_jacobi(Piece::BotX2ToCyl, &seg.bot_x2, [g, dg / slope], tol)?;
    for j in [top1, top2, top3, bot1, bot2] {
        pieces.insert(j.piece, j);
    }
    Ok(TorusJacobi { pieces })
}

pub fn piece_segment(seg: &TorusSegments, piece: Piece) -> &ProfileSegment {
    match piece {
        Piece::TopX1 => &seg.top_x1,
        Piece::TopX2ToSphere => &seg.top_x2_sphere,
        Piece::TopX2SphereToCyl => &seg.top_x2_cyl,
        Piece::BotX1 => &seg.bot_x1,
        Piece::BotX2ToCyl => &seg.bot_x2,
    }
}

/// Safety factor on measured envelopes.
pub const MEASURED_MARGIN: f64 = 1.05;

/// Tabulated envelopes measured on the numerical curve and Jacobi field,
/// inflated by [`MEASURED_MARGIN`].
pub fn measured_envelopes(seg: &TorusSegments, jac: &TorusJacobi) -> Result<BTreeMap<(Piece, Slot), Bound>> {
    use crate::gronwall::envelope::integrand_value;
    const N: usize = 600;
    let mut out = BTreeMap::new();
    for piece in Piece::ALL {
        let s = piece_segment(seg, piece);
        let j = &jac.pieces[&piece];
        // Cumulative integrals run from where the piece starts.
        let (a, b) = (s.nodes[0], *s.nodes.last().unwrap());
        for slot in Slot::ALL {
            let integrand = slot.integrand();
            let mut pts = Vec::with_capacity(N + 1);
            let mut acc = 0.0;
            let mut prev = 0.0;
            for i in 0..=N {
                let x = a + (b - a) * i as f64 / N as f64;
                let (u, p, _) = s.eval(x);
                let val = integrand_value(integrand, s.chart, x, u, p, Some(j.at(x)))?;
                let y = if integrand.is_cumulative() {
                    if i > 0 {
                        acc += 0.5 * (val + prev) * ((b - a) / N as f64).abs();
                    }
                    acc
                } else {
                    val
                };
                prev = val;
                pts.push((x, MEASURED_MARGIN * y));
            }
            out.insert((piece, slot), Bound::tabulated(pts));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KernelPiece {
    S2,
    S5,
    S6,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeVerdict {
    pub m: u32,
    /// Endpoint value (S₅, S₆) or `det 𝒩` (S₂).
    pub quantity: f64,
    pub budget: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub piece: KernelPiece,
    pub modes: Vec<ModeVerdict>,
    /// Modes from here on are disposed of by the cutoff.
    pub cutoff_mode: u32,
    pub verdict: Verdict,
}

/// The two arcs from the axis to the sphere point, as mode problems.
pub fn torus_arcs(t: &LocatedTorus) -> Result<(ModeProblem, ModeProblem)> {
    let sc = t.sphere_crossing()?;
    let arc = |h: f64, len: f64| ModeProblem {
        m: 0,
        start: CurveState { t: 0.0, x: 0.0, y: h, dx: 1.0, dy: 0.0 },
        length: len,
        left: Boundary::Neumann,
        right: Boundary::Dirichlet,
        pin: 1.0,
    };
    Ok((arc(t.a0(), sc.t_top), arc(t.b0(), sc.t_bot)))
}

/// Numerical error estimate of a mode endpoint: the change under a 100×
/// tighter tolerance.
pub fn refinement_error(p: &ModeProblem, tol: Tolerances) -> Result<(f64, f64)> {
    let coarse = integrate_mode(p, tol)?;
    let fine = integrate_mode(p, Tolerances { rtol: tol.rtol / 100.0, atol: tol.atol / 100.0, ..tol })?;
    Ok((
        (coarse.endpoint_value - fine.endpoint_value).abs(),
        (coarse.endpoint_derivative - fine.endpoint_derivative).abs(),
    ))
}

/// Kernel verdicts on the torus pieces. `ledger_budget` is the
/// Grönwall part of the endpoint error for (top, bottom), added to the
/// refinement estimate of every mode.
pub fn kernel_verdicts(
    t: &LocatedTorus,
    tol: Tolerances,
    cutoff: &ModeCutoff,
    ledger_budget: ((f64, f64), (f64, f64)),
) -> Result<Vec<KernelReport>> {
    let (top0, bot0) = torus_arcs(t)?;
    let last = cutoff.first_trivial_mode();
    let mut s2 = Vec::new();
    let mut s5 = Vec::new();
    let mut s6 = Vec::new();
    for m in 0..last {
        let top = ModeProblem { m, ..top0 };
        let bot = ModeProblem { m, ..bot0 };
        let (st, sb) = (integrate_mode(&top, tol)?, integrate_mode(&bot, tol)?);
        let (et, eb) = (refinement_error(&top, tol)?, refinement_error(&bot, tol)?);
        let ((lt_v, lt_d), (lb_v, lb_d)) = ledger_budget;
        let bt = (et.0 + lt_v, et.1 + lt_d);
        let bb = (eb.0 + lb_v, eb.1 + lb_d);
        let verdict = |q: f64, budget: f64| Verdict::from_margin(q.abs(), budget);
        s5.push(ModeVerdict { m, quantity: st.endpoint_value, budget: bt.0, verdict: verdict(st.endpoint_value, bt.0) });
        s6.push(ModeVerdict { m, quantity: sb.endpoint_value, budget: bb.0, verdict: verdict(sb.endpoint_value, bb.0) });
        let n = endpoint_matrix(&st, &sb);
        let db = n.det_budget(bt.0.max(bt.1), bb.0.max(bb.1));
        s2.push(ModeVerdict { m, quantity: n.det, budget: db, verdict: verdict(n.det, db) });
    }
    let aggregate = |modes: &Vec<ModeVerdict>| {
        if modes.iter().all(|v| v.verdict.is_trivial()) {
            Verdict::Trivial
        } else if modes.iter().any(|v| v.verdict == Verdict::NonTrivial) {
            Verdict::NonTrivial
        } else {
            Verdict::Inconclusive
        }
    };
    Ok([(KernelPiece::S2, s2), (KernelPiece::S5, s5), (KernelPiece::S6, s6)]
        .into_iter()
        .map(|(piece, modes)| KernelReport { piece, verdict: aggregate(&modes), modes, cutoff_mode: last })
        .collect())
}

/// Decision factor re-exported for reports.
pub const KERNEL_DECISION_FACTOR: f64 = DECISION_FACTOR;

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn cylinder_graph_coefficients() {
        let (p, q) = graph_coeffs(Chart::GraphX1, 0.3, SQRT_2, 0.0).unwrap();
        assert!((p + 0.15).abs() < 1e-15);
        // (√2/2 − 1/√2)² + 1/2 + 1/2 = 1.
        assert!((q - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_on_sphere_is_fixed_by_l() {
        // Unit-speed parametrization of the radius-2 circle.
        for &th in &[0.3, 0.9, 1.4] {
            let (s, c) = f64::sin_cos(th);
            let st = CurveState { t: 0.0, x: 2.0 * c, y: 2.0 * s, dx: -s, dy: c };
            let acc = arc_rhs(st.to_array());
            let lu = stability_apply(&st, [acc[2], acc[3]], 0, [3.0, 0.0, 0.0]).unwrap();
            assert!((lu - 3.0).abs() < 1e-13, "{lu}");
        }
    }

    #[test]
    fn arc_coefficients_match_graph_coefficients() {
        // On an x₁-graph both forms must give the same operator after
        // converting derivatives; on the cylinder y' = 0 makes this direct.
        let st = CurveState { t: 0.0, x: 0.4, y: SQRT_2, dx: 1.0, dy: 0.0 };
        let a = mode_operator_coeffs(0, &st, Chart::ArcParam).unwrap();
        let g = mode_operator_coeffs(0, &st, Chart::GraphX1).unwrap();
        assert!((a.first - g.first).abs() < 1e-14 && (a.zeroth - g.zeroth).abs() < 1e-14);
        let g1 = mode_operator_coeffs(1, &st, Chart::GraphX1).unwrap();
        assert!((g.zeroth - g1.zeroth - 0.5).abs() < 1e-14);
        assert!(mode_operator_coeffs(0, &st, Chart::Polar).is_err());
    }

    #[test]
    fn cutoff_on_cylinder_and_sphere() {
        let cyl: Vec<CurveState> = (0..50)
            .map(|i| CurveState { t: i as f64 * 0.02, x: i as f64 * 0.02, y: SQRT_2, dx: 1.0, dy: 0.0 })
            .collect();
        let c = mode_cutoff(&cyl).unwrap();
        assert!((c.bound - SQRT_2).abs() < 1e-12);
        let sph: Vec<CurveState> = (0..=400)
            .map(|i| {
                let th = 0.05 + 3.0 * i as f64 / 400.0;
                let (s, co) = th.sin_cos();
                CurveState { t: 2.0 * th, x: 2.0 * co, y: 2.0 * s, dx: -s, dy: co }
            })
            .collect();
        let c = mode_cutoff(&sph).unwrap();
        assert!(c.bound >= 2.0 && c.bound < 2.02, "{c:?}");
    }

    #[test]
    fn endpoint_matrix_determinants() {
        assert_eq!(EndpointMatrix::new((1.0, 0.0), (1.0, 0.0)).det, 0.0);
        let n = EndpointMatrix::new((-22.0 / 50.0, -37.0 / 50.0), (-77.0 / 50.0, -84.0 / 50.0));
        assert!((n.det - 4697.0 / 2500.0).abs() < 1e-14);
    }

    #[test]
    fn sturm_check_flags_too_few_zeros() {
        let s = ModeSolution {
            m: 0,
            length: 1.0,
            endpoint_value: 1.0,
            endpoint_derivative: 0.0,
            endpoint_arc_derivative: 0.0,
            end_height: 1.0,
            zero_count: 0,
            zeros: vec![],
            residual: 0.0,
        };
        assert_eq!(sturm_zero_check(&s, 1), SturmConsistency::CannotBeKernel);
    }
}
