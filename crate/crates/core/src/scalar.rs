//! Scalar abstraction shared by the geometry and element kernels.
//!
//! Mesh geometry, quadrature rules, reference shape functions and the
//! analytic benchmark fields are written against [`Real`], so they work in
//! `f32` as well as `f64`. The solver layers (sparse factorizations, POD,
//! reduced models) run in `f64` only.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + FromStr + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
