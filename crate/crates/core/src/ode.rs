//! Adaptive Dormand–Prince 5(4) integration with cubic Hermite dense output
//! and first-crossing event location.
//!
//! All right-hand sides are fallible so that chart escapes and axis touches
//! surface as errors instead of NaNs.

use crate::error::{Error, Result};

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Step-size and tolerance settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step; also bounds the dense-output node spacing.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: 0.05,
            max_steps: 200_000,
        }
    }
}

impl Tolerances {
    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }
}

/// Accepted integration nodes with their states and derivatives; evaluates
/// the piecewise cubic Hermite interpolant between nodes.
#[derive(Debug, Clone)]
pub struct DenseSolution<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub dy: Vec<[f64; N]>,
}

impl<const N: usize> DenseSolution<N> {
    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().expect("solution has at least one node")
    }

    pub fn last(&self) -> [f64; N] {
        *self.y.last().expect("solution has at least one node")
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Index of the cell containing `t` (clamped to the covered range).
    fn cell(&self, t: f64) -> usize {
        let n = self.t.len();
        if n < 2 {
            return 0;
        }
        let forward = self.t[n - 1] >= self.t[0];
        let idx = if forward {
            self.t.partition_point(|&s| s <= t)
        } else {
            self.t.partition_point(|&s| s >= t)
        };
        idx.clamp(1, n - 1) - 1
    }

    /// Hermite interpolant of the state at `t`.
    pub fn eval(&self, t: f64) -> [f64; N] {
        self.eval_with_derivative(t).0
    }

    /// State and its `t`-derivative from the Hermite interpolant.
    pub fn eval_with_derivative(&self, t: f64) -> ([f64; N], [f64; N]) {
        if self.t.len() == 1 {
            return (self.y[0], self.dy[0]);
        }
        let i = self.cell(t);
        hermite(
            self.t[i],
            self.t[i + 1],
            &self.y[i],
            &self.y[i + 1],
            &self.dy[i],
            &self.dy[i + 1],
            t,
        )
    }

    /// Drops every node after `t` and appends the interpolated state at `t`.
    /// First accepted zero of `ev.g` strictly after `from`, located on the
    /// stored nodes and polished on the interpolant.
    pub fn first_root(&self, ev: &Event<'_, N>, from: f64) -> Option<f64> {
        let inc = self.t_end() >= self.t_start();
        let after = |t: f64| if inc { t > from } else { t < from };
        let mut prev = (from, (ev.g)(from, &self.eval(from)));
        for (i, &t) in self.t.iter().enumerate() {
            if !after(t) {
                continue;
            }
            let g = (ev.g)(t, &self.y[i]);
            if ev.direction.accepts(prev.1, g) {
                return Some(locate_root(self, ev, prev.0, t, prev.1, g));
            }
            prev = (t, g);
        }
        None
    }

    pub(crate) fn truncate_at(&mut self, t: f64, y: [f64; N], dy: [f64; N]) {
        let i = self.cell(t);
        self.t.truncate(i + 1);
        self.y.truncate(i + 1);
        self.dy.truncate(i + 1);
        if (self.t[i] - t).abs() > 0.0 {
            self.t.push(t);
            self.y.push(y);
            self.dy.push(dy);
        }
    }
}

fn hermite<const N: usize>(
    t0: f64,
    t1: f64,
    y0: &[f64; N],
    y1: &[f64; N],
    d0: &[f64; N],
    d1: &[f64; N],
    t: f64,
) -> ([f64; N], [f64; N]) {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    let g00 = 6.0 * s * (s - 1.0);
    let g10 = (1.0 - s) * (1.0 - 3.0 * s);
    let g01 = -g00;
    let g11 = s * (3.0 * s - 2.0);
    let mut y = [0.0; N];
    let mut dy = [0.0; N];
    for k in 0..N {
        y[k] = h00 * y0[k] + h10 * h * d0[k] + h01 * y1[k] + h11 * h * d1[k];
        dy[k] = (g00 * y0[k] + g01 * y1[k]) / h + g10 * d0[k] + g11 * d1[k];
    }
    (y, dy)
}

/// Crossing direction filter for an event function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

impl Direction {
    fn accepts(self, before: f64, after: f64) -> bool {
        let crossed = (before < 0.0 && after >= 0.0) || (before > 0.0 && after <= 0.0);
        crossed
            && match self {
                Direction::Rising => before < after,
                Direction::Falling => before > after,
                Direction::Either => true,
            }
    }
}

/// Event function `g(t, state)`.
pub type EventFn<'a, const N: usize> = Box<dyn Fn(f64, &[f64; N]) -> f64 + 'a>;

/// Terminal event: integration stops at the first zero of `g` crossed in
/// the requested direction.
pub struct Event<'a, const N: usize> {
    pub g: EventFn<'a, N>,
    pub direction: Direction,
    /// Root tolerance in the independent variable.
    pub tol: f64,
}

impl<'a, const N: usize> Event<'a, N> {
    pub fn new(g: impl Fn(f64, &[f64; N]) -> f64 + 'a, direction: Direction) -> Self {
        Self {
            g: Box::new(g),
            direction,
            tol: 1e-12,
        }
    }
}

/// Where a terminal event fired.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventHit<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
}

#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub solution: DenseSolution<N>,
    pub event: Option<EventHit<N>>,
}

/// Dormand–Prince 5(4) driver.
#[derive(Debug, Clone, Copy, Default)]
pub struct Dopri5 {
    pub tol: Tolerances,
}

impl Dopri5 {
    pub fn new(tol: Tolerances) -> Self {
        Self { tol }
    }

    /// Integrates `f` from `(t0, y0)` toward `t_end` (either direction),
    /// stopping early at the first accepted crossing of `event`.
    pub fn solve<const N: usize, F>(
        &self,
        mut f: F,
        t0: f64,
        y0: [f64; N],
        t_end: f64,
        event: Option<&Event<'_, N>>,
    ) -> Result<Trajectory<N>>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    {
        let tol = &self.tol;
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let span = (t_end - t0).abs();
        let mut sol = DenseSolution {
            t: vec![t0],
            y: vec![y0],
            dy: vec![f(t0, &y0)?],
        };
        if span == 0.0 {
            return Ok(Trajectory {
                solution: sol,
                event: None,
            });
        }

        let mut t = t0;
        let mut y = y0;
        let mut k1 = sol.dy[0];
        let mut h = initial_step(&y, &k1, tol).min(span).min(tol.max_step);
        let mut g_prev = event.map(|e| (e.g)(t, &y));
        let mut steps = 0usize;

        while (t_end - t) * dir > 0.0 {
            steps += 1;
            if steps > tol.max_steps {
                return Err(Error::Integration(format!(
                    "step budget {} exhausted at t = {t}",
                    tol.max_steps
                )));
            }
            h = h.min((t_end - t).abs()).min(tol.max_step);
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Integration(format!("step size underflow at t = {t}")));
            }
            let hs = h * dir;

            let mut yt = [0.0; N];
            macro_rules! stage {
                ($($a:expr, $k:expr);+) => {{
                    for i in 0..N {
                        yt[i] = y[i] + hs * (0.0 $(+ $a * $k[i])+);
                    }
                    yt
                }};
            }
            let k2 = f(t + C2 * hs, &stage!(A21, k1))?;
            let k3 = f(t + C3 * hs, &stage!(A31, k1; A32, k2))?;
            let k4 = f(t + C4 * hs, &stage!(A41, k1; A42, k2; A43, k3))?;
            let k5 = f(t + C5 * hs, &stage!(A51, k1; A52, k2; A53, k3; A54, k4))?;
            let k6 = f(t + hs, &stage!(A61, k1; A62, k2; A63, k3; A64, k4; A65, k5))?;
            let y_new = stage!(B1, k1; B3, k3; B4, k4; B5, k5; B6, k6);
            let k7 = f(t + hs, &y_new)?;

            let mut err = 0.0f64;
            for i in 0..N {
                let e = hs
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                h *= 0.25;
                continue;
            }
            if err <= 1.0 {
                let t_new = t + hs;
                sol.t.push(t_new);
                sol.y.push(y_new);
                sol.dy.push(k7);

                if let (Some(ev), Some(gp)) = (event, g_prev) {
                    let g_new = (ev.g)(t_new, &y_new);
                    if ev.direction.accepts(gp, g_new) {
                        let hit = locate_root(&sol, ev, t, t_new, gp, g_new);
                        let (ye, de) = sol.eval_with_derivative(hit);
                        sol.truncate_at(hit, ye, de);
                        return Ok(Trajectory {
                            solution: sol,
                            event: Some(EventHit { t: hit, y: ye }),
                        });
                    }
                    g_prev = Some(g_new);
                }

                t = t_new;
                y = y_new;
                k1 = k7;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
        }
        Ok(Trajectory {
            solution: sol,
            event: None,
        })
    }
}

fn initial_step<const N: usize>(y: &[f64; N], dy: &[f64; N], tol: &Tolerances) -> f64 {
    let mut d0 = 0.0f64;
    let mut d1 = 0.0f64;
    for i in 0..N {
        let sc = tol.atol + tol.rtol * y[i].abs();
        d0 = d0.max((y[i] / sc).abs());
        d1 = d1.max((dy[i] / sc).abs());
    }
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        (0.01 * d0 / d1).max(1e-8)
    }
}

/// Illinois-modified regula falsi on the Hermite interpolant of the last cell.
fn locate_root<const N: usize>(
    sol: &DenseSolution<N>,
    ev: &Event<'_, N>,
    t0: f64,
    t1: f64,
    g0: f64,
    g1: f64,
) -> f64 {
    if g1 == 0.0 {
        return t1;
    }
    let (mut a, mut b, mut ga, mut gb) = (t0, t1, g0, g1);
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * gb - b * ga) / (gb - ga);
        let c = if c.is_finite() { c } else { 0.5 * (a + b) };
        let gc = (ev.g)(c, &sol.eval(c));
        if gc == 0.0 || (b - a).abs() < ev.tol {
            return c;
        }
        if (gc < 0.0) == (ga < 0.0) {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() < ev.tol {
            break;
        }
    }
    let c = (a * gb - b * ga) / (gb - ga);
    if c.is_finite() {
        c
    } else {
        0.5 * (a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn oscillator(_t: f64, y: &[f64; 2]) -> Result<[f64; 2]> {
        Ok([y[1], -y[0]])
    }

    #[test]
    fn harmonic_oscillator_matches_closed_form() {
        let tr = Dopri5::default()
            .solve(oscillator, 0.0, [1.0, 0.0], 10.0, None)
            .unwrap();
        let y = tr.solution.last();
        assert_relative_eq!(y[0], 10f64.cos(), epsilon = 1e-8);
        assert_relative_eq!(y[1], -10f64.sin(), epsilon = 1e-8);
    }

    #[test]
    fn backward_integration() {
        let tr = Dopri5::default()
            .solve(oscillator, 0.0, [1.0, 0.0], -2.0, None)
            .unwrap();
        let y = tr.solution.last();
        assert_relative_eq!(y[0], 2f64.cos(), epsilon = 1e-9);
        assert_relative_eq!(y[1], 2f64.sin(), epsilon = 1e-9);
        // dense output in a decreasing grid
        let mid = tr.solution.eval(-1.3);
        assert_relative_eq!(mid[0], 1.3f64.cos(), epsilon = 1e-8);
    }

    #[test]
    fn dense_output_is_accurate_between_nodes() {
        let tr = Dopri5::new(Tolerances::default().with_max_step(0.01))
            .solve(oscillator, 0.0, [1.0, 0.0], 3.0, None)
            .unwrap();
        for i in 0..300 {
            let t = 0.00731 + i as f64 * 0.00997;
            let (y, dy) = tr.solution.eval_with_derivative(t);
            assert!((y[0] - t.cos()).abs() < 1e-9);
            assert!((dy[0] + t.sin()).abs() < 1e-7);
        }
    }

    #[test]
    fn event_locates_first_zero() {
        let ev = Event::new(|_t, y: &[f64; 2]| y[0], Direction::Falling);
        let tr = Dopri5::default()
            .solve(oscillator, 0.0, [1.0, 0.0], 10.0, Some(&ev))
            .unwrap();
        let hit = tr.event.unwrap();
        assert_relative_eq!(hit.t, std::f64::consts::FRAC_PI_2, epsilon = 1e-9);
        assert_relative_eq!(tr.solution.t_end(), hit.t);
    }

    #[test]
    fn direction_filter_skips_wrong_crossings() {
        let ev = Event::new(|_t, y: &[f64; 2]| y[0], Direction::Rising);
        let tr = Dopri5::default()
            .solve(oscillator, 0.0, [1.0, 0.0], 10.0, Some(&ev))
            .unwrap();
        assert_relative_eq!(tr.event.unwrap().t, 1.5 * std::f64::consts::PI, epsilon = 1e-9);
    }

    #[test]
    fn rhs_errors_propagate() {
        let r = Dopri5::default().solve(
            |t, _y: &[f64; 1]| {
                if t > 0.5 {
                    Err(Error::Domain("stop".into()))
                } else {
                    Ok([1.0])
                }
            },
            0.0,
            [0.0],
            1.0,
            None,
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
