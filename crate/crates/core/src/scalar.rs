//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Scalar`] so the same
//! code instantiates at f32 and f64. The shipped binaries and the checkpoint
//! format use f64 exclusively; see the aliases at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point element type for matrices, vectors and model parameters.
pub trait Scalar:
    Float + NumAssignOps + FromPrimitive + ToPrimitive + Sum<Self> + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from f64. Constants and parsed values enter generic
    /// code through here; f64 -> f64 is the identity.
    fn from_double(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Scalar")
    }

    /// Widening conversion to f64, used by reports and serialization.
    fn to_double(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + NumAssignOps
        + FromPrimitive
        + ToPrimitive
        + Sum<T>
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
