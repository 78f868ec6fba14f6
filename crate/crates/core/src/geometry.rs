//! Profile-curve charts for rotationally symmetric self-shrinkers in the
//! half-plane `{(x₁, x₂) : x₂ > 0}`, rotated about the x₁-axis.
//!
//! Conventions:
//! * `x` is the coordinate along the rotation axis, `y > 0` the distance to it.
//! * The unit normal of a regular curve is `ν = (y′, −x′)/√ω`; for a circle
//!   about the origin traversed counterclockwise this is the outward normal.
//! * Polar coordinates measure `φ` from the rotation axis:
//!   `x = ρ cos φ`, `y = ρ sin φ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Height of the reference cylinder `{x₂ = √2}`, an exact shrinker.
pub const CYLINDER_RADIUS: f64 = std::f64::consts::SQRT_2;
/// Radius of the self-shrinking round sphere.
pub const SPHERE_RADIUS: f64 = 2.0;

/// Graph charts raise a chart escape beyond this slope; well below it the
/// segmenter hands over to the other graph chart.
pub const GRAPH_SLOPE_LIMIT: f64 = 1e3;
/// Slope above which a graph piece is handed to the other graph chart.
pub const CHART_SWITCH_SLOPE: f64 = 2.0;
/// Return threshold for the chart switch (hysteresis).
pub const CHART_RETURN_SLOPE: f64 = 1.5;
/// Below this polar angle `1/tan φ` is replaced by its series.
pub const POLE_GUARD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Chart {
    /// `x₂ = u(x₁)`, parameter `x₁`.
    GraphX1,
    /// `x₁ = f(x₂)`, parameter `x₂`.
    GraphX2,
    /// `ρ(φ)`, parameter `φ`.
    Polar,
    /// Arbitrary regular parametrization; the shrinker right-hand side keeps
    /// the speed constant.
    ArcParam,
}

/// A point of a profile curve together with its velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveState {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
}

impl CurveState {
    pub fn new(t: f64, x: f64, y: f64, dx: f64, dy: f64) -> Result<Self> {
        let s = Self { t, x, y, dx, dy };
        s.validate()?;
        Ok(s)
    }

    pub fn from_array(t: f64, s: [f64; 4]) -> Self {
        Self {
            t,
            x: s[0],
            y: s[1],
            dx: s[2],
            dy: s[3],
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.dx, self.dy]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.y > 0.0) {
            return Err(Error::Domain(format!("curve touches the axis: y = {}", self.y)));
        }
        if !(self.omega() > 0.0) {
            return Err(Error::Domain("degenerate velocity".into()));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        self.dx * self.dx + self.dy * self.dy
    }

    /// Mirror image under `x ↦ −x`.
    pub fn reflect(&self) -> Self {
        Self {
            x: -self.x,
            dx: -self.dx,
            ..*self
        }
    }

    /// Same point with the velocity scaled by `1/k`, i.e. parameter `t ↦ k t`.
    pub fn reparametrize(&self, k: f64) -> Self {
        Self {
            t: self.t * k,
            dx: self.dx / k,
            dy: self.dy / k,
            ..*self
        }
    }

    /// `(yx′ − xy′)/2 − x′/y`: the curvature term of the shrinker equation.
    pub fn shrinker_term(&self) -> f64 {
        (self.y * self.dx - self.x * self.dy) / 2.0 - self.dx / self.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomQuantities {
    pub omega: f64,
    /// Squared norm of the second fundamental form of the rotation surface.
    pub a_sq: f64,
    /// Gauss curvature of the Angenent metric at the point.
    pub k_ang: f64,
    /// Mean curvature `½ X·ν` of a shrinker through the point.
    pub h: f64,
}

/// Curvature operator for x₁-graphs: `u'' = M₁(u, u')` iff the graph rotates
/// to a shrinker.
pub fn eval_m1(u: f64, p: f64, x1: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::Domain(format!("x1-graph touches the axis: u = {u}")));
    }
    Ok(((x1 * p - u) / 2.0 + 1.0 / u) * (1.0 + p * p))
}

/// Curvature operator for x₂-graphs: `f'' = M₂(f, f')`.
pub fn eval_m2(f: f64, q: f64, x2: f64) -> Result<f64> {
    if !(x2 > 0.0) {
        return Err(Error::Domain(format!("x2-graph at non-positive height {x2}")));
    }
    Ok(((x2 / 2.0 - 1.0 / x2) * q - f / 2.0) * (1.0 + q * q))
}

pub fn dm1_du(u: f64, p: f64) -> f64 {
    (-0.5 - 1.0 / (u * u)) * (1.0 + p * p)
}

pub fn dm1_dp(u: f64, p: f64, x1: f64) -> f64 {
    x1 / 2.0 * (1.0 + p * p) + 2.0 * p * ((x1 * p - u) / 2.0 + 1.0 / u)
}

pub fn dm2_df(q: f64) -> f64 {
    -0.5 * (1.0 + q * q)
}

pub fn dm2_dq(f: f64, q: f64, x2: f64) -> f64 {
    (x2 / 2.0 - 1.0 / x2) * (1.0 + 3.0 * q * q) - f * q
}

/// `1/tan φ`, with the two-term Laurent series near the pole.
fn cot_guarded(phi: f64) -> f64 {
    if phi.abs() < POLE_GUARD {
        1.0 / phi - phi / 3.0
    } else {
        1.0 / phi.tan()
    }
}

/// `ρ''(φ)` for a polar profile `ρ(φ)` generating a shrinker.
///
/// At `φ = 0` the regular solution has `ρ'(0) = 0` and the singular term
/// `ρ'/tan φ` is replaced by its limit `ρ''(0)`.
pub fn polar_rhs(rho: f64, drho: f64, phi: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("polar radius {rho} is not positive")));
    }
    let w = rho * rho + drho * drho;
    if phi == 0.0 {
        if drho != 0.0 {
            return Err(Error::Singularity(
                "polar profile with non-zero slope at the pole".into(),
            ));
        }
        // ρ'' = (1/ρ){ρ² + (1 − ρ²/2 − ρ''/ρ)ρ²} solved for ρ''.
        return Ok(rho * (1.0 - rho * rho / 4.0));
    }
    let cot = cot_guarded(phi);
    Ok((rho * rho + 2.0 * drho * drho + (1.0 - rho * rho / 2.0 - drho / rho * cot) * w) / rho)
}

/// First-order right-hand side of the shrinker ODE in `chart`, returned as
/// `d/dt (x, y, x', y')` with `t` the chart parameter.
pub fn shrinker_rhs(state: &CurveState, chart: Chart) -> Result<[f64; 4]> {
    state.validate()?;
    match chart {
        Chart::ArcParam => Ok(arc_rhs(state.to_array())),
        Chart::GraphX1 => {
            if state.dx.abs() * GRAPH_SLOPE_LIMIT <= state.dy.abs() {
                return Err(escape(Chart::GraphX1, state.t, "vertical tangent"));
            }
            let p = state.dy / state.dx;
            Ok([1.0, p, 0.0, eval_m1(state.y, p, state.x)?])
        }
        Chart::GraphX2 => {
            if state.dy.abs() * GRAPH_SLOPE_LIMIT <= state.dx.abs() {
                return Err(escape(Chart::GraphX2, state.t, "horizontal tangent"));
            }
            let q = state.dx / state.dy;
            Ok([q, 1.0, eval_m2(state.x, q, state.y)?, 0.0])
        }
        Chart::Polar => {
            let phi = state.t;
            if !(0.0..=std::f64::consts::PI).contains(&phi) {
                return Err(escape(Chart::Polar, phi, "angle outside [0, π]"));
            }
            let rho = state.x.hypot(state.y);
            let drho = (state.x * state.dx + state.y * state.dy) / rho;
            let ddrho = polar_rhs(rho, drho, phi)?;
            let (s, c) = phi.sin_cos();
            Ok([
                state.dx,
                state.dy,
                ddrho * c - 2.0 * drho * s - rho * c,
                ddrho * s + 2.0 * drho * c - rho * s,
            ])
        }
    }
}

fn escape(chart: Chart, t: f64, reason: &str) -> Error {
    Error::ChartEscape {
        chart,
        t,
        reason: reason.to_string(),
    }
}

/// Shrinker geodesic equation in a constant-speed parametrization:
/// `(x'', y'') = R (y', −x')` with `R = (yx' − xy')/2 − x'/y`.
pub fn arc_rhs(s: [f64; 4]) -> [f64; 4] {
    let [x, y, dx, dy] = s;
    let r = (y * dx - x * dy) / 2.0 - dx / y;
    [dx, dy, r * dy, -r * dx]
}

/// Fallible form of [`arc_rhs`] for the integrator.
pub fn arc_rhs_checked(_t: f64, s: &[f64; 4]) -> Result<[f64; 4]> {
    if !(s[1] > 0.0) {
        return Err(Error::Domain(format!("trajectory reached the axis: y = {}", s[1])));
    }
    Ok(arc_rhs(*s))
}

/// Gauss curvature of the Angenent metric `y² e^{−(x²+y²)/2}(dx² + dy²)`.
pub fn k_ang(x: f64, y: f64) -> f64 {
    ((x * x + y * y) / 2.0).exp() / (y * y) * (1.0 + 1.0 / (y * y))
}

pub fn geom_quantities(state: &CurveState) -> Result<GeomQuantities> {
    state.validate()?;
    let omega = state.omega();
    let r = state.shrinker_term();
    let a_sq = (r * r + state.dx * state.dx / (state.y * state.y)) / omega;
    let h = 0.5 * (state.x * state.dy - state.y * state.dx) / omega.sqrt();
    Ok(GeomQuantities {
        omega,
        a_sq,
        k_ang: k_ang(state.x, state.y),
        h,
    })
}

/// Mean curvature (sum of principal curvatures w.r.t. `ν = (y′, −x′)/√ω`)
/// of the rotation surface of an arbitrary regular curve, given the
/// acceleration `(x'', y'')`.
pub fn mean_curvature(state: &CurveState, ddx: f64, ddy: f64) -> Result<f64> {
    state.validate()?;
    let w = state.omega();
    let profile = (state.dx * ddy - state.dy * ddx) / (w * w.sqrt());
    let parallel = state.dx / (state.y * w.sqrt());
    Ok(profile - parallel)
}

/// A sampled piece of a profile curve in a graph or polar chart: nodes of
/// the chart parameter with the dependent variable and its first two
/// derivatives. Values between nodes come from cubic Hermite interpolation
/// of `u` (from `u, u'`) and of `u'` (from `u', u''`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSegment {
    pub chart: Chart,
    pub domain: (f64, f64),
    pub nodes: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub ddu: Vec<f64>,
    /// Certified sup-norm residual of the shrinker ODE on `domain`.
    pub epsilon: f64,
}

impl ProfileSegment {
    /// Builds a segment from strictly monotone nodes and computes its residual.
    pub fn from_samples(
        chart: Chart,
        nodes: Vec<f64>,
        u: Vec<f64>,
        du: Vec<f64>,
        ddu: Vec<f64>,
    ) -> Result<Self> {
        if chart == Chart::ArcParam {
            return Err(Error::Precondition(
                "profile segments live in graph or polar charts".into(),
            ));
        }
        let n = nodes.len();
        if n < 2 || u.len() != n || du.len() != n || ddu.len() != n {
            return Err(Error::Precondition("segment needs ≥ 2 consistent nodes".into()));
        }
        let increasing = nodes[1] > nodes[0];
        if !nodes
            .windows(2)
            .all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] })
        {
            return Err(Error::Precondition("segment nodes must be strictly monotone".into()));
        }
        let (a, b) = (nodes[0], nodes[n - 1]);
        let mut seg = Self {
            chart,
            domain: (a.min(b), a.max(b)),
            nodes,
            u,
            du,
            ddu,
            epsilon: 0.0,
        };
        seg.check_validity()?;
        seg.epsilon = residual_sup(&seg)?;
        Ok(seg)
    }

    /// Samples `f(t) = (u, u', u'')` on `n + 1` equispaced nodes of `[lo, hi]`.
    pub fn sample(
        chart: Chart,
        lo: f64,
        hi: f64,
        n: usize,
        f: impl Fn(f64) -> (f64, f64, f64),
    ) -> Result<Self> {
        let n = n.max(1);
        let mut nodes = Vec::with_capacity(n + 1);
        let (mut u, mut du, mut ddu) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..=n {
            let t = lo + (hi - lo) * i as f64 / n as f64;
            let (a, b, c) = f(t);
            nodes.push(t);
            u.push(a);
            du.push(b);
            ddu.push(c);
        }
        Self::from_samples(chart, nodes, u, du, ddu)
    }

    fn check_validity(&self) -> Result<()> {
        for (i, &t) in self.nodes.iter().enumerate() {
            let ok = match self.chart {
                Chart::GraphX1 => self.u[i] > 0.0,
                Chart::GraphX2 => t > 0.0,
                Chart::Polar => self.u[i] > 0.0 && (0.0..=std::f64::consts::PI).contains(&t),
                Chart::ArcParam => false,
            };
            if !ok {
                return Err(Error::Domain(format!(
                    "{:?} segment leaves its chart at t = {t}",
                    self.chart
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn cell(&self, t: f64) -> usize {
        let n = self.nodes.len();
        let inc = self.nodes[1] > self.nodes[0];
        let idx = if inc {
            self.nodes.partition_point(|&s| s <= t)
        } else {
            self.nodes.partition_point(|&s| s >= t)
        };
        idx.clamp(1, n - 1) - 1
    }

    /// `(u, u', u'')` of the approximant at `t`; `u''` is the derivative of
    /// the interpolated `u'`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let i = self.cell(t);
        let (t0, t1) = (self.nodes[i], self.nodes[i + 1]);
        let (u, _) = hermite1(t0, t1, self.u[i], self.u[i + 1], self.du[i], self.du[i + 1], t);
        let (p, dp) = hermite1(t0, t1, self.du[i], self.du[i + 1], self.ddu[i], self.ddu[i + 1], t);
        (u, p, dp)
    }

    /// Pointwise shrinker residual `u'' − M(u, u')` of the approximant.
    pub fn residual_at(&self, t: f64) -> Result<f64> {
        let (u, p, dp) = self.eval(t);
        Ok(dp - chart_operator(self.chart, u, p, t)?)
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Cartesian point for the chart parameter `t`.
    pub fn point(&self, t: f64) -> (f64, f64) {
        let (u, _, _) = self.eval(t);
        match self.chart {
            Chart::GraphX1 => (t, u),
            Chart::GraphX2 => (u, t),
            Chart::Polar => (u * t.cos(), u * t.sin()),
            Chart::ArcParam => (f64::NAN, f64::NAN),
        }
    }
}

fn hermite1(t0: f64, t1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> (f64, f64) {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let y = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s) * y0
        + s * (1.0 - s) * (1.0 - s) * h * d0
        + s * s * (3.0 - 2.0 * s) * y1
        + s * s * (s - 1.0) * h * d1;
    let dy = 6.0 * s * (s - 1.0) * (y0 - y1) / h
        + (1.0 - s) * (1.0 - 3.0 * s) * d0
        + s * (3.0 * s - 2.0) * d1;
    (y, dy)
}

/// The shrinker operator of a scalar chart: `M₁`, `M₂` or the polar `ρ''`.
pub fn chart_operator(chart: Chart, u: f64, p: f64, t: f64) -> Result<f64> {
    match chart {
        Chart::GraphX1 => eval_m1(u, p, t),
        Chart::GraphX2 => eval_m2(u, p, t),
        Chart::Polar => polar_rhs(u, p, t),
        Chart::ArcParam => Err(Error::Precondition("ArcParam has no scalar operator".into())),
    }
}

/// Sub-samples per cell used by [`residual_sup`].
const RESIDUAL_SUBSAMPLES: usize = 8;

/// Upper bound on `sup |u'' − M(u, u')|` over the segment: the maximum over
/// a sub-sampled grid, padded by `L·h` with `L` the largest sampled slope of
/// the residual and `h` the largest sample spacing. Sampling between nodes
/// measures the interpolant, not just the integrator's node values.
pub fn residual_sup(segment: &ProfileSegment) -> Result<f64> {
    let mut ts = Vec::with_capacity(segment.len() * RESIDUAL_SUBSAMPLES + 1);
    for w in segment.nodes.windows(2) {
        for k in 0..RESIDUAL_SUBSAMPLES {
            ts.push(w[0] + (w[1] - w[0]) * k as f64 / RESIDUAL_SUBSAMPLES as f64);
        }
    }
    ts.push(segment.end());
    padded_sup(&ts, |t| segment.residual_at(t))
}

/// The same bound for a closed-form curve `t ↦ (u, u', u'')` on `n`
/// sub-intervals of `[lo, hi]`.
pub fn residual_sup_exact(
    chart: Chart,
    (lo, hi): (f64, f64),
    n: usize,
    f: impl Fn(f64) -> (f64, f64, f64),
) -> Result<f64> {
    let n = n.max(1);
    let ts: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    padded_sup(&ts, |t| {
        let (u, p, dp) = f(t);
        Ok(dp - chart_operator(chart, u, p, t)?)
    })
}

fn padded_sup(ts: &[f64], r: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let mut max_r = 0.0f64;
    let mut lip = 0.0f64;
    let mut h_max = 0.0f64;
    let mut prev: Option<(f64, f64)> = None;
    for &t in ts {
        let v = r(t)?;
        max_r = max_r.max(v.abs());
        if let Some((tp, vp)) = prev {
            let h = (t - tp).abs();
            h_max = h_max.max(h);
            if h > 0.0 {
                lip = lip.max((v - vp).abs() / h);
            }
        }
        prev = Some((t, v));
    }
    Ok(max_r + lip * h_max)
}
