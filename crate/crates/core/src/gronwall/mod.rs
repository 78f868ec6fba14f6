//! Certified Grönwall ledgers for the graph pieces of the torus profile.
//!
//! Every stage bounds the gap between the true curve (or Jacobi field) and
//! its numerical stand-in at the end of a piece. All bounds are linear in the
//! residuals and the starting gap, so they are carried as [`LinearBound`]s
//! and chained symbolically before any number is plugged in.

pub mod envelope;
pub mod interval;
pub mod replay;
pub mod stages;

pub use envelope::{verify_envelopes, Bound, EnvelopeCheck, EnvelopeSpec, Integrand};
pub use interval::{upper_integral, Cumulative, Grid, Interval};
pub use replay::{paper_envelopes, replay_paper_ledger, LedgerContext, ReplayReport, DEFAULT_SLACK};
pub use stages::{
    chain_all, propagate_stage, select_stages, BoundLedger, EnvelopeBook, GapBounds, Input, Kind, LedgerGeometry, LinearBound,
    Piece, Slot, StageId, Term,
};

use crate::error::{Error, Result};

const MONOTONE_SAMPLES: usize = 512;

/// Integral form of Grönwall's inequality: if `u ≤ α + ∫ₐᵗ βu` on `[a, b]`
/// with `α` nondecreasing and `β ≥ 0`, then `u(b) ≤ α(b) exp(∫ₐᵇ β)`.
/// Both hypotheses are checked on a grid; the exponent is an upper sum.
pub fn gronwall_bound(alpha: impl Fn(f64) -> f64, beta: impl Fn(Interval) -> Interval, a: f64, b: f64) -> Result<f64> {
    if !(b >= a) {
        return Err(Error::Domain(format!("empty Grönwall interval [{a}, {b}]")));
    }
    let step = (b - a) / MONOTONE_SAMPLES as f64;
    let mut prev = alpha(a);
    for k in 1..=MONOTONE_SAMPLES {
        let t = a + step * k as f64;
        let cur = alpha(t);
        if !(cur >= prev) {
            return Err(Error::Precondition(format!("α decreases near t = {t}: {prev} → {cur}")));
        }
        prev = cur;
    }
    let grid = Grid::new(b - a, 4 * MONOTONE_SAMPLES);
    for k in 0..grid.cells {
        // Outward rounding may push an exact zero just below it.
        let iv = beta(grid.cell(k) + a);
        if iv.lo < -1e-12 * (1.0 + iv.hi.abs()) {
            return Err(Error::Precondition(format!("β is negative near t = {}", a + grid.node(k))));
        }
    }
    let exponent = upper_integral(&grid, |s| beta(s + a)).max(0.0);
    Ok(prev * exponent.exp().next_up())
}
