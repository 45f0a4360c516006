use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Floating-point type the analytic bounds and the LP solver are generic over.
pub trait Scalar: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
