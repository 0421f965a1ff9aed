//! Scalar abstraction: every numeric routine in this crate is generic over a
//! floating-point type so the same formulas run in f32 or f64.

use core::fmt::{Debug, Display, LowerExp};
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Floating-point scalar the library is generic over.
///
/// `num_traits::Float` supplies arithmetic and elementary functions;
/// `FromPrimitive`/`ToPrimitive` bridge to the f64 boundary (config files,
/// CSV export, RNG draws).
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + LowerExp
    + Default
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an f64 literal into the working scalar type.
///
/// Panics only if the target type cannot represent any f64 at all, which no
/// `Real` impl in this crate triggers.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal must convert to the scalar type")
}

/// Standard gravity in m/s^2, as used by every road-load term.
#[inline]
pub fn gravity<T: Real>() -> T {
    real(9.81)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_conversion_round_trips() {
        let x: f64 = real(9.81);
        assert_eq!(x, 9.81);
        let y: f32 = real(9.81);
        assert_eq!(y, 9.81f32);
    }

    #[test]
    fn gravity_is_shared_constant() {
        assert_eq!(gravity::<f64>(), 9.81);
    }
}
