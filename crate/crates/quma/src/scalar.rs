//! Scalar abstraction for the physics and discrimination math.
//!
//! Everything that touches amplitudes or integration results is generic over
//! [`Scalar`] so the same code runs in `f32` and `f64`. Concrete aliases for
//! the common instantiations live at the crate root.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign, NumCast};

/// Floating-point scalar used by the qubit simulator and the measurement
/// discrimination unit.
pub trait Scalar: Float + FloatConst + NumAssign + Sum + Debug + Send + Sync + 'static {
    /// Lossy conversion from `f64`, for constants and configuration values.
    fn from_f64(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 converts to scalar")
    }
}

impl<T> Scalar for T where T: Float + FloatConst + NumAssign + Sum + Debug + Send + Sync + 'static {}
