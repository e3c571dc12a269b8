//! Dense 2-D tensors with tape-based reverse-mode differentiation.
//!
//! Every forward operation appends a node to a [`Tape`]; [`Tape::backward`]
//! walks the tape in reverse and returns [`Gradients`] for every parameter
//! that contributed to the loss. Parameters live in a [`ParamStore`] that the
//! tape borrows for the duration of a forward/backward pass.

mod params;
mod tape;

pub use params::{Param, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type a tensor is stored in (`f32` for training, `f64` for
/// gradient checks).
pub trait Element:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    const DTYPE: &'static str;

    fn erf(self) -> Self;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Element for f32 {
    const DTYPE: &'static str = "f32";

    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Element for f64 {
    const DTYPE: &'static str = "f64";

    fn erf(self) -> Self {
        libm::erf(self)
    }
}

/// Additive logit used to exclude attention positions.
pub const MASK_LOGIT: f64 = -1e9;

/// Variance epsilon of layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;
