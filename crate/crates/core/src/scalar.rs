//! Numeric traits the scoring and metric code is generic over.
//!
//! Two tiers exist. [`Field`] needs only exact field arithmetic and is
//! satisfied by `f32`, `f64` and `Ratio<i64>`; set-overlap metrics such as
//! TRACC and recall are written against it so they can be evaluated exactly.
//! [`Real`] adds transcendental functions (`ln`, `log2`, `sqrt`) and is what
//! BM25, cosine similarity and NDCG require.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, Num};

/// Exact-capable scalar: closed under `+ - * /`, constructible from counts.
pub trait Field: Num + Copy + PartialOrd + FromPrimitive + Debug + Display + Send + Sync + 'static {
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl<T> Field for T where T: Num + Copy + PartialOrd + FromPrimitive + Debug + Display + Send + Sync + 'static {}

/// Floating-point scalar used by similarity scorers and discounted metrics.
pub trait Real: Field + Float {
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 representable in scalar type")
    }
}

impl<T> Real for T where T: Field + Float {}

/// Exact rational scalar.
pub type Rational = num_rational::Ratio<i64>;

#[cfg(test)]
mod tests {
    use super::*;

    fn half<S: Field>() -> S {
        S::one() / S::from_count(2)
    }

    #[test]
    fn field_is_satisfied_by_floats_and_rationals() {
        assert_eq!(half::<f64>(), 0.5);
        assert_eq!(half::<f32>(), 0.5);
        assert_eq!(half::<Rational>(), Rational::new(1, 2));
    }
}
