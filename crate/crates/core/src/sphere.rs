//! Kernel checks on the spherical pieces via Legendre functions of the
//! non-integer degree `l₀ = (√17 − 1)/2`, the positive root of `l(l+1) = 4`.
//!
//! On the radius-2 sphere the rotationally symmetric Jacobi equation in the
//! polar angle reads `w'' + w'/tan φ + 4w = 0`; its solutions are
//! `C₁ P_{l₀}(cos φ) + C₂ Q_{l₀}(cos φ)` with Ferrers functions `P`, `Q`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, gamma};

use crate::error::{Error, Result};
use crate::geometry::polar_rhs;
use crate::ode::{Dopri5, Tolerances};
use crate::shooting::{EPS_GAP, SPHERE_ANGLE, SPHERE_TOLERANCE};
use crate::verdict::Verdict;

/// `l₀ = (√17 − 1)/2`.
pub fn l0() -> f64 {
    (17f64.sqrt() - 1.0) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LegendreKind {
    P,
    Q,
}

/// `C₁ P_l(cos φ) + C₂ Q_l(cos φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendrePair {
    pub degree: f64,
    pub c1: f64,
    pub c2: f64,
}

impl LegendrePair {
    /// Value and φ-derivative at `φ ∈ (0, π)`.
    pub fn eval(&self, phi: f64) -> Result<(f64, f64)> {
        let x = phi.cos();
        let (p, dp) = legendre_eval(LegendreKind::P, self.degree, x)?;
        let (q, dq) = if self.c2 == 0.0 {
            (0.0, 0.0)
        } else {
            legendre_eval(LegendreKind::Q, self.degree, x)?
        };
        Ok((self.c1 * p + self.c2 * q, self.c1 * dp + self.c2 * dq))
    }
}

const SERIES_TERMS: usize = 400;
const SERIES_EPS: f64 = 1e-18;

/// `₂F₁(−ν, ν+1; 1; z)` and its z-derivative by the power series at `z = 0`.
fn hyp_direct(nu: f64, z: f64) -> (f64, f64) {
    let (a, b) = (-nu, nu + 1.0);
    let (mut term, mut f, mut df) = (1.0, 1.0, 0.0);
    for n in 0..SERIES_TERMS {
        let nf = n as f64;
        // term_{n+1} = term_n (a+n)(b+n)/((n+1)²) z
        let ratio = (a + nf) * (b + nf) / ((nf + 1.0) * (nf + 1.0));
        let coef = term * ratio; // coefficient of z^{n+1} without the power
        df += coef * (nf + 1.0) * z.powi(n as i32);
        term = coef;
        let t = coef * z.powi(n as i32 + 1);
        f += t;
        if t.abs() < SERIES_EPS * f.abs().max(1.0) && nf > 4.0 {
            break;
        }
    }
    (f, df)
}

/// Same function for `z` near 1, through the logarithmic connection formula
/// of the degenerate case `c = a + b`, in powers of `w = 1 − z`.
fn hyp_log(nu: f64, z: f64) -> (f64, f64) {
    let (a, b) = (-nu, nu + 1.0);
    let w = 1.0 - z;
    let lw = w.ln();
    let k = 1.0 / (gamma(a) * gamma(b));
    let (mut psi_a, mut psi_b, mut psi_1) = (digamma(a), digamma(b), -0.577_215_664_901_532_9);
    let mut c = 1.0; // (a)_n (b)_n / (n!)²
    let (mut f, mut dfdw) = (0.0, 0.0);
    for n in 0..SERIES_TERMS {
        let nf = n as f64;
        let h = 2.0 * psi_1 - psi_a - psi_b;
        let wn = w.powi(n as i32);
        let t = c * (h - lw) * wn;
        f += t;
        if n > 0 {
            dfdw += c * ((h - lw) * nf * w.powi(n as i32 - 1) - w.powi(n as i32 - 1));
        } else {
            dfdw += -c / w;
        }
        if t.abs() < SERIES_EPS * f.abs().max(1.0) && n > 4 {
            break;
        }
        c *= (a + nf) * (b + nf) / ((nf + 1.0) * (nf + 1.0));
        psi_a += 1.0 / (a + nf);
        psi_b += 1.0 / (b + nf);
        psi_1 += 1.0 / (nf + 1.0);
    }
    (k * f, -k * dfdw)
}

/// Ferrers `P_ν(x)` and `dP_ν/dx` for `x ∈ (−1, 1]`.
fn ferrers_p(nu: f64, x: f64) -> (f64, f64) {
    let z = (1.0 - x) / 2.0;
    let (f, dfdz) = if z <= 0.5 { hyp_direct(nu, z) } else { hyp_log(nu, z) };
    (f, -0.5 * dfdz)
}

/// Value and φ-derivative of `P_l(cos φ)` or `Q_l(cos φ)` at `x = cos φ`.
pub fn legendre_eval(kind: LegendreKind, degree: f64, x: f64) -> Result<(f64, f64)> {
    let sin_phi = (1.0 - x * x).max(0.0).sqrt();
    match kind {
        LegendreKind::P => {
            if !(x > -1.0 && x <= 1.0) {
                return Err(Error::Singularity(format!("P evaluated at x = {x}")));
            }
            let (p, dp) = ferrers_p(degree, x);
            Ok((p, -sin_phi * dp))
        }
        LegendreKind::Q => {
            if !(x.abs() < 1.0) {
                return Err(Error::Singularity(format!("Q evaluated at x = {x}")));
            }
            let (s, c) = (degree * PI).sin_cos();
            let k = PI / (2.0 * s);
            let (p, dp) = ferrers_p(degree, x);
            let (pm, dpm) = ferrers_p(degree, -x);
            let q = k * (c * p - pm);
            let dq = k * (c * dp + dpm);
            Ok((q, -sin_phi * dq))
        }
    }
}

/// The closed form of `d/dφ P_{l₀}(cos φ)` at `φ = π/2`.
pub fn gamma_formula_derivative() -> f64 {
    let r = 17f64.sqrt();
    PI.sqrt() / 2.0 * (r + 1.0) / (gamma((1.0 - r) / 4.0) * gamma((5.0 + r) / 4.0))
}

/// Right-hand side of the polar shrinker equation (shared with the Polar chart).
pub fn polar_shrinker_rhs(rho: f64, drho: f64, phi: f64) -> Result<f64> {
    polar_rhs(rho, drho, phi)
}

/// Residual `w'' + w'/tan φ + 4w` of a solution candidate given `(w, w', w'')`.
pub fn pollin_residual(w: f64, dw: f64, ddw: f64, phi: f64) -> f64 {
    ddw + dw / phi.tan() + 4.0 * w
}

/// Start of the regular solution near the pole.
pub const POLE_START: f64 = 1e-6;

/// Independent oracle: integrates `w'' + w'/tan φ + 4w = 0` from
/// `POLE_START` with the regular expansion `w = 1 − φ² + O(φ⁴)` and returns
/// `(w, w')` at each requested angle (ascending).
pub fn regular_solution_by_ode(angles: &[f64], tol: Tolerances) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(angles.len());
    let mut phi = POLE_START;
    let mut state = [1.0 - phi * phi, -2.0 * phi];
    let rhs = |p: f64, s: &[f64; 2]| -> Result<[f64; 2]> {
        Ok([s[1], -s[1] / p.tan() - 4.0 * s[0]])
    };
    let solver = Dopri5::new(tol);
    for &target in angles {
        if target < phi {
            return Err(Error::Precondition("angles must be ascending".into()));
        }
        let traj = solver.solve(rhs, phi, state, target, None)?;
        state = traj.solution.last();
        phi = target;
        out.push((state[0], state[1]));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpherePiece {
    /// Cap about the pole with a Neumann condition at the equator.
    S1,
    /// Cap about the pole cut off at the crossing angle (Dirichlet).
    S3,
    /// Band from the crossing angle to the equator: Dirichlet / Neumann.
    S4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereVerdict {
    pub piece: SpherePiece,
    /// The decisive quantity (minimum over the certified interval where relevant).
    pub quantity: f64,
    pub error_budget: f64,
    /// The stated lower bound the quantity is compared with, if any.
    pub stated_bound: Option<f64>,
    pub stated_bound_pass: bool,
    pub verdict: Verdict,
    /// Supplementary named values.
    pub details: Vec<(String, f64)>,
}

/// Samples across the certified angle interval.
const ANGLE_SAMPLES: usize = 200;

/// Values of `w` on `[lo, hi]`: the minimum over a grid padded by the
/// sampled Lipschitz constant, plus the largest series/ODE discrepancy.
fn interval_minimum(pair: &LegendrePair, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let mut min = f64::INFINITY;
    let mut lip = 0.0f64;
    for i in 0..=ANGLE_SAMPLES {
        let phi = lo + (hi - lo) * i as f64 / ANGLE_SAMPLES as f64;
        let (w, dw) = pair.eval(phi)?;
        min = min.min(w);
        lip = lip.max(dw.abs());
    }
    let h = (hi - lo) / ANGLE_SAMPLES as f64;
    Ok((min, lip * h / 2.0))
}

fn oracle_tolerances() -> Tolerances {
    Tolerances {
        rtol: 1e-13,
        atol: 1e-14,
        max_step: 0.01,
        max_steps: 1_000_000,
    }
}

/// Largest series/ODE discrepancy of `P_{l₀}(cos φ)` at the given angles.
fn series_vs_ode(angles: &[f64]) -> Result<f64> {
    let l = l0();
    let ode = regular_solution_by_ode(angles, oracle_tolerances())?;
    let mut worst = 0.0f64;
    for (&phi, &(w, dw)) in angles.iter().zip(&ode) {
        let (p, dp) = legendre_eval(LegendreKind::P, l, phi.cos())?;
        worst = worst.max((p - w).abs()).max((dp - dw).abs());
    }
    Ok(worst)
}

/// The solution with `w(π/2) = 1`, `w'(π/2) = 0`, from the (P, Q) system.
pub fn equator_normalized_pair() -> Result<LegendrePair> {
    let l = l0();
    let (p0, pp) = legendre_eval(LegendreKind::P, l, 0.0)?;
    let (q0, qp) = legendre_eval(LegendreKind::Q, l, 0.0)?;
    let det = p0 * qp - q0 * pp;
    if det.abs() < 1e-12 {
        return Err(Error::Singularity("P, Q Wronskian vanishes at the equator".into()));
    }
    Ok(LegendrePair {
        degree: l,
        c1: qp / det,
        c2: -pp / det,
    })
}

pub fn sphere_kernel_check(piece: SpherePiece, angle: f64) -> Result<SphereVerdict> {
    let (lo, hi) = (SPHERE_ANGLE - SPHERE_TOLERANCE, SPHERE_ANGLE + SPHERE_TOLERANCE);
    if !(lo..=hi).contains(&angle) {
        return Err(Error::Precondition(format!(
            "crossing angle {angle} outside the certified interval [{lo}, {hi}]"
        )));
    }
    let l = l0();
    match piece {
        SpherePiece::S1 => {
            // Regularity at the pole forces C₂ = 0; a Neumann mode would need
            // dP/dφ = 0 at the equator.
            let (_, dp) = legendre_eval(LegendreKind::P, l, 0.0)?;
            let closed = gamma_formula_derivative();
            let budget = series_vs_ode(&[FRAC_PI_2])?.max((dp - closed).abs());
            Ok(SphereVerdict {
                piece,
                quantity: dp,
                error_budget: budget,
                stated_bound: None,
                stated_bound_pass: dp != 0.0,
                verdict: Verdict::from_margin(dp, budget),
                details: vec![("gamma_formula".into(), closed)],
            })
        }
        SpherePiece::S3 => {
            let pair = LegendrePair {
                degree: l,
                c1: 1.0,
                c2: 0.0,
            };
            let (min, pad) = interval_minimum(&pair, lo, hi)?;
            let alt_angle = 10.0 / 11.0 + 50.0 * EPS_GAP;
            let (alt, _) = pair.eval(alt_angle)?;
            let (at_angle, _) = pair.eval(angle)?;
            let budget = pad + series_vs_ode(&[lo, angle, hi])?;
            let bound = 3.0 / 50.0;
            Ok(SphereVerdict {
                piece,
                quantity: min,
                error_budget: budget,
                stated_bound: Some(bound),
                stated_bound_pass: min - budget > bound && alt > bound,
                verdict: Verdict::from_margin(min.max(0.0), budget),
                details: vec![
                    ("at_crossing_angle".into(), at_angle),
                    ("at_10/11+50eps".into(), alt),
                ],
            })
        }
        SpherePiece::S4 => {
            let pair = equator_normalized_pair()?;
            let (min, pad) = interval_minimum(&pair, lo, hi)?;
            let (at_angle, _) = pair.eval(angle)?;
            let (at_center, _) = pair.eval(SPHERE_ANGLE)?;
            // The normalized solution's own accuracy: it must reproduce the
            // equator data it was built from.
            let (w_eq, dw_eq) = pair.eval(FRAC_PI_2)?;
            let norm = pair.c1.abs() + pair.c2.abs();
            let budget =
                pad + norm * series_vs_ode(&[lo, hi])? + (w_eq - 1.0).abs() + dw_eq.abs();
            let bound = 0.5;
            Ok(SphereVerdict {
                piece,
                quantity: min,
                error_budget: budget,
                stated_bound: Some(bound),
                stated_bound_pass: min - budget > bound,
                verdict: Verdict::from_margin(min.max(0.0), budget),
                details: vec![
                    ("at_crossing_angle".into(), at_angle),
                    ("at_11/10".into(), at_center),
                    ("at_11/10_minus_100eps".into(), at_center - 100.0 * EPS_GAP),
                    ("c1".into(), pair.c1),
                    ("c2".into(), pair.c2),
                ],
            })
        }
    }
}
