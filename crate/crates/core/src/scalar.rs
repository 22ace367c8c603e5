//! Floating-point abstraction shared by every numeric routine in this crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar type the factorization routines are generic over.
///
/// The CLI and the benchmark experiments instantiate `f64`; `f32` is
/// available for callers that trade precision for memory. Multiplicative
/// updates amplify rounding through square roots, so the monotonicity
/// tolerances in [`crate::solver`] are calibrated for `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + ScalarOperand
    + Sum
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Conversion from `f64`, used for constants and RNG output.
    fn real(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 constant")
    }

    /// Parse the decimal text produced by `Display`.
    fn parse_str(text: &str) -> Option<Self>;
}

impl Scalar for f64 {
    fn parse_str(text: &str) -> Option<Self> {
        text.trim().parse().ok()
    }
}

impl Scalar for f32 {
    fn parse_str(text: &str) -> Option<Self> {
        text.trim().parse().ok()
    }
}
