use serde::{Deserialize, Serialize};

use super::interval::Interval;
use crate::error::{Error, Result};
use crate::geometry::{dm1_dp, dm1_du, dm2_df, dm2_dq, Chart, ProfileSegment};
use crate::jacobi::{graph_coeff_partials, graph_coeffs};

/// An upper envelope as a function of the chart coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    /// `Σ cₖ (x − shift)ᵏ`.
    Poly { shift: f64, coeffs: Vec<f64> },
    /// Pieces keyed by the left end of their range, ascending.
    Piecewise(Vec<(f64, Bound)>),
    /// Piecewise-linear through `(xs, ys)`, `xs` ascending; constant outside.
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

impl Bound {
    pub fn poly(shift: f64, coeffs: &[f64]) -> Self {
        Bound::Poly { shift, coeffs: coeffs.to_vec() }
    }

    pub fn constant(c: f64) -> Self {
        Bound::poly(0.0, &[c])
    }

    pub fn tabulated(mut pts: Vec<(f64, f64)>) -> Self {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (xs, ys) = pts.into_iter().unzip();
        Bound::Tabulated { xs, ys }
    }

    pub fn eval(&self, x: Interval) -> Interval {
        match self {
            Bound::Poly { shift, coeffs } => {
                let d = x - *shift;
                coeffs
                    .iter()
                    .enumerate()
                    .fold(Interval::point(0.0), |acc, (k, c)| acc + d.powi(k as u32) * *c)
            }
            Bound::Piecewise(pieces) => {
                let mut out: Option<Interval> = None;
                for (i, (start, b)) in pieces.iter().enumerate() {
                    let end = pieces.get(i + 1).map_or(f64::INFINITY, |p| p.0);
                    let first = i == 0;
                    if (first || x.hi >= *start) && x.lo <= end {
                        let lo = if first { x.lo } else { x.lo.max(*start) };
                        let part = b.eval(Interval::new(lo, x.hi.min(end).max(lo)));
                        out = Some(out.map_or(part, |o| o.hull(part)));
                    }
                }
                out.expect("piecewise bound without pieces")
            }
            Bound::Tabulated { xs, ys } => {
                let at = |t: f64| -> f64 {
                    let n = xs.len();
                    if t <= xs[0] {
                        return ys[0];
                    }
                    if t >= xs[n - 1] {
                        return ys[n - 1];
                    }
                    let k = xs.partition_point(|&v| v <= t).clamp(1, n - 1);
                    let w = (t - xs[k - 1]) / (xs[k] - xs[k - 1]);
                    ys[k - 1] + w * (ys[k] - ys[k - 1])
                };
                let (mut lo, mut hi) = {
                    let (a, b) = (at(x.lo), at(x.hi));
                    (a.min(b), a.max(b))
                };
                let i0 = xs.partition_point(|&v| v < x.lo);
                let i1 = xs.partition_point(|&v| v <= x.hi);
                for y in &ys[i0..i1] {
                    lo = lo.min(*y);
                    hi = hi.max(*y);
                }
                Interval::new(lo.next_down(), hi.next_up())
            }
        }
    }

    pub fn at(&self, x: f64) -> f64 {
        self.eval(Interval::point(x)).mid()
    }
}

/// What an envelope is supposed to dominate on the true curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrand {
    /// `∫ |∂ᵤM|` from the stage anchor.
    GeodesicU,
    /// `∫ |∂ₚM|` from the stage anchor.
    GeodesicP,
    /// `∫ |P|` (x₁-chart) or `∫ |R|` (x₂-chart) from the anchor.
    CoefP,
    /// `∫ |Q|` or `∫ |S|` from the anchor.
    CoefQ,
    /// `|∂ₚP||v'| + |∂ₚQ||v|` pointwise, `v` the Jacobi field.
    W1,
    /// `|∂ᵤQ||v|` pointwise.
    W2,
}

impl Integrand {
    pub fn is_cumulative(self) -> bool {
        !matches!(self, Integrand::W1 | Integrand::W2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSpec {
    pub name: String,
    pub integrand: Integrand,
    /// Chart-coordinate range the bound must hold on.
    pub domain: (f64, f64),
    /// Where cumulative integrands start.
    pub anchor: f64,
    pub bound: Bound,
}

impl EnvelopeSpec {
    pub fn new(name: &str, integrand: Integrand, domain: (f64, f64), anchor: f64, bound: Bound) -> Self {
        Self { name: name.to_string(), integrand, domain, anchor, bound }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub name: String,
    /// `max(measured − bound)` over the domain; nonpositive means it holds.
    pub max_excess: f64,
    pub worst_x: f64,
    /// Largest `measured / bound` where the bound is positive.
    pub max_ratio: f64,
    pub pass: bool,
}

/// Pointwise value of an integrand at chart coordinate `x`. `field` gives
/// `(v, dv/dx)` of the Jacobi field in the same chart.
pub fn integrand_value(
    integrand: Integrand,
    chart: Chart,
    x: f64,
    u: f64,
    p: f64,
    field: Option<(f64, f64)>,
) -> Result<f64> {
    Ok(match (integrand, chart) {
        (Integrand::GeodesicU, Chart::GraphX1) => dm1_du(u, p).abs(),
        (Integrand::GeodesicP, Chart::GraphX1) => dm1_dp(u, p, x).abs(),
        (Integrand::GeodesicU, Chart::GraphX2) => dm2_df(p).abs(),
        (Integrand::GeodesicP, Chart::GraphX2) => dm2_dq(u, p, x).abs(),
        (Integrand::CoefP, _) => graph_coeffs(chart, x, u, p)?.0.abs(),
        (Integrand::CoefQ, _) => graph_coeffs(chart, x, u, p)?.1.abs(),
        (Integrand::W1 | Integrand::W2, _) => {
            let (v, dv) = field.ok_or_else(|| {
                Error::Precondition("pointwise Jacobi envelopes need the Jacobi field".into())
            })?;
            let (p_p, q_u, q_p) = graph_coeff_partials(chart, x, u, p)?;
            if integrand == Integrand::W1 {
                p_p.abs() * dv.abs() + q_p.abs() * v.abs()
            } else {
                q_u.abs() * v.abs()
            }
        }
        (_, c) => return Err(Error::Precondition(format!("no geodesic envelopes in the {c:?} chart"))),
    })
}

/// Measures each envelope's integrand along `segment` (trapezoid on a fine
/// grid for cumulative ones) and compares with the stated bound.
pub fn verify_envelopes(
    segment: &ProfileSegment,
    specs: &[EnvelopeSpec],
    field: Option<&dyn Fn(f64) -> (f64, f64)>,
) -> Result<Vec<EnvelopeCheck>> {
    const SAMPLES: usize = 4000;
    let (s0, s1) = segment.domain;
    let (dlo, dhi) = (s0.min(s1), s0.max(s1));
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let (a, b) = spec.domain;
        if a.min(b) < dlo - 1e-9 || a.max(b) > dhi + 1e-9 {
            return Err(Error::Precondition(format!(
                "envelope {} domain {:?} exceeds segment {:?}",
                spec.name, spec.domain, segment.domain
            )));
        }
        let from = if spec.integrand.is_cumulative() { spec.anchor } else { a };
        let far = if (a - from).abs() > (b - from).abs() { a } else { b };
        let value_at = |x: f64| -> Result<f64> {
            let (u, p, _) = segment.eval(x);
            integrand_value(spec.integrand, segment.chart, x, u, p, field.map(|f| f(x)))
        };
        let (mut excess, mut worst, mut ratio) = (f64::NEG_INFINITY, from, 0.0f64);
        let mut pass = true;
        let mut acc = 0.0;
        let mut prev = value_at(from)?;
        let h = (far - from) / SAMPLES as f64;
        for i in 0..=SAMPLES {
            let x = from + h * i as f64;
            let g = value_at(x)?;
            if i > 0 {
                acc += 0.5 * (g + prev) * h.abs();
            }
            prev = g;
            let inside = x >= a.min(b) - 1e-12 && x <= a.max(b) + 1e-12;
            if !inside {
                continue;
            }
            let measured = if spec.integrand.is_cumulative() { acc } else { g };
            let bound = spec.bound.at(x);
            pass &= measured <= bound + 1e-12 * (1.0 + bound.abs());
            if measured - bound > excess {
                excess = measured - bound;
                worst = x;
            }
            if bound > 0.0 {
                ratio = ratio.max(measured / bound);
            }
        }
        out.push(EnvelopeCheck {
            name: spec.name.clone(),
            max_excess: excess,
            worst_x: worst,
            max_ratio: ratio,
            pass,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_and_piecewise_enclose_pointwise_values() {
        let b = Bound::poly(1.0, &[1.0, 0.0, 2.0]);
        let iv = b.eval(Interval::new(0.0, 2.0));
        assert!(iv.contains(1.0) && iv.contains(3.0));
        let pw = Bound::Piecewise(vec![(0.0, Bound::constant(1.0)), (1.0, Bound::constant(5.0))]);
        assert!(pw.eval(Interval::new(0.2, 0.5)).hi < 1.1);
        assert!(pw.eval(Interval::new(0.5, 1.5)).hi >= 5.0);
    }

    #[test]
    fn tabulated_sup_covers_interior_nodes() {
        let b = Bound::tabulated(vec![(0.0, 0.0), (1.0, 3.0), (2.0, 1.0)]);
        assert!(b.eval(Interval::new(0.5, 1.5)).hi >= 3.0);
        assert!((b.at(0.5) - 1.5).abs() < 1e-12);
    }
}
