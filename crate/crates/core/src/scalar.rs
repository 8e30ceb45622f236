//! Scalar abstraction shared by every numerical module.
//!
//! Networks, optimizers, critics and the risk verifiers are written against
//! [`Scalar`] so the same code runs in `f32` and `f64`. The training pipeline
//! and the verification suite use `f64`; identity tolerances such as `1e-12`
//! are not reachable in single precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar usable by the networks and optimizers.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal or sample into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        // FromPrimitive::from_f64 never fails for f32/f64.
        Self::from_f64(x).expect("f64 converts to scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
