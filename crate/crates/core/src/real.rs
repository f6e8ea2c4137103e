use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar for network parameters. Models train in `f32`;
/// `f64` instances exist for finite-difference gradient checks.
pub trait Real:
    Float
    + NumAssign
    + FromPrimitive
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }

    fn from_f32_value(v: f32) -> Self {
        Self::from_f32(v).expect("representable value")
    }
}

impl Real for f32 {}
impl Real for f64 {}
