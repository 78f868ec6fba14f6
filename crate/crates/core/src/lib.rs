// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod error;
pub mod geometry;
pub mod gronwall;
pub mod jacobi;
pub mod ode;
pub mod shooting;
pub mod sphere;
pub mod verdict;
