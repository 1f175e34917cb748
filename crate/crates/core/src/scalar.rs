//! Scalar abstraction shared by the analytic code paths.
//!
//! Everything that is pure arithmetic (photon-number distributions, detector
//! response, correlation functions) is written against [`Real`] so it can be
//! evaluated in `f32` or `f64`. The Monte Carlo engine is `f64` only.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// Floating point scalar usable by the analytic modules.
pub trait Real: Float + FloatConst + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Smallest relative tolerance an iterative routine may be asked to meet.
    const TOL_FLOOR: f64;

    /// Complementary error function.
    fn erfc(self) -> Self;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Exponential variate with unit mean.
    fn exp1<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f64 {
    const TOL_FLOOR: f64 = 1e-14;

    fn erfc(self) -> Self {
        libm::erfc(self)
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Exp1.sample(rng)
    }
}

impl Real for f32 {
    const TOL_FLOOR: f64 = 1e-5;

    fn erfc(self) -> Self {
        libm::erfcf(self)
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Exp1.sample(rng)
    }
}

/// Converts an `f64` constant into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// `n!` evaluated in `T`.
pub fn factorial<T: Real>(n: usize) -> T {
    (2..=n).fold(T::one(), |acc, k| acc * from_usize::<T>(k))
}

/// Falling factorial `n (n-1) ... (n-k+1)`.
pub fn falling_factorial<T: Real>(n: usize, k: usize) -> T {
    if k > n {
        return T::zero();
    }
    ((n - k + 1)..=n).fold(T::one(), |acc, j| acc * from_usize::<T>(j))
}

/// Natural log of `n!`, summed directly (exact enough for `n` in the low thousands).
pub fn ln_factorial<T: Real>(n: usize) -> T {
    (2..=n).map(|k| from_usize::<T>(k).ln()).sum()
}
