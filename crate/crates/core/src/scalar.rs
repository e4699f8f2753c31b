//! Numeric abstraction for utilization-valued quantities.
//!
//! Time stays in integer ticks everywhere. Utilizations, cache sensitivity
//! potentials and scheduling demands are ratios of ticks; they are computed
//! in a [`Scalar`] chosen by the caller, either a float (`f32`, `f64`) or an
//! exact rational (`Ratio<i64>`, `Ratio<i128>`, `BigRational`).

use std::cmp::Ordering;
use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Num, ToPrimitive};

use crate::taskmodel::Tick;

/// A number type usable for utilization arithmetic.
///
/// Implemented for `f32`, `f64` and the `num-rational` ratio types. Float
/// implementations compare with `total_cmp`, so sorting never panics.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    /// The ratio `num / den` of two tick counts. `den` must be non-zero.
    fn from_ticks(num: Tick, den: Tick) -> Self;

    /// Lossy conversion used for reporting.
    fn to_f64(&self) -> f64;

    /// Total order used by sorts and dominance checks.
    fn total_cmp(&self, other: &Self) -> Ordering {
        self.partial_cmp(other).unwrap_or(Ordering::Equal)
    }

    /// Whether two values should be treated as identical for tie handling.
    fn same_as(&self, other: &Self) -> bool {
        self.total_cmp(other) == Ordering::Equal
    }
}

impl Scalar for f64 {
    fn from_ticks(num: Tick, den: Tick) -> Self {
        num as f64 / den as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn total_cmp(&self, other: &Self) -> Ordering {
        f64::total_cmp(self, other)
    }
}

impl Scalar for f32 {
    fn from_ticks(num: Tick, den: Tick) -> Self {
        (num as f64 / den as f64) as f32
    }
    fn to_f64(&self) -> f64 {
        *self as f64
    }
    fn total_cmp(&self, other: &Self) -> Ordering {
        f32::total_cmp(self, other)
    }
}

macro_rules! impl_ratio_scalar {
    ($int:ty) => {
        impl Scalar for Ratio<$int> {
            fn from_ticks(num: Tick, den: Tick) -> Self {
                Ratio::new(
                    <$int>::try_from(num).expect("tick count exceeds rational range"),
                    <$int>::try_from(den).expect("tick count exceeds rational range"),
                )
            }
            fn to_f64(&self) -> f64 {
                ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
            }
            fn total_cmp(&self, other: &Self) -> Ordering {
                self.cmp(other)
            }
        }
    };
}

impl_ratio_scalar!(i64);
impl_ratio_scalar!(i128);

impl Scalar for BigRational {
    fn from_ticks(num: Tick, den: Tick) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn total_cmp(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
}

/// Compares `Σ num_i / den_i` against 1 exactly.
///
/// A float sum decides clear cases; sums within 1e-9 of 1 are settled with
/// arbitrary-precision rationals.
pub fn cmp_sum_to_one<I>(terms: I) -> Ordering
where
    I: IntoIterator<Item = (Tick, Tick)> + Clone,
{
    let approx: f64 = terms
        .clone()
        .into_iter()
        .map(|(n, d)| n as f64 / d as f64)
        .sum();
    if approx > 1.0 + 1e-9 {
        return Ordering::Greater;
    }
    if approx < 1.0 - 1e-9 {
        return Ordering::Less;
    }
    let exact = terms
        .into_iter()
        .fold(BigRational::from_integer(0.into()), |acc, (n, d)| {
            acc + BigRational::from_ticks(n, d)
        });
    exact.cmp(&BigRational::from_integer(1.into()))
}
