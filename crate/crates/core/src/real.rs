//! Scalar abstraction shared by every numeric module.
//!
//! All geometry, kernel and network code is written once against [`Real`]
//! and instantiated for `f32` and `f64`. Tolerances that are stated for
//! double precision are widened for `f32` through [`Real::tol`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::igso3::CdfCache;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + LinalgScalar
    + ScalarOperand
    + 'static
{
    /// Smallest tolerance that is meaningful at this precision.
    const TOL_FLOOR: f64;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// A tolerance stated for f64, widened to what this precision can resolve.
    #[inline]
    fn tol(base: f64) -> Self {
        Self::of(base.max(Self::TOL_FLOOR))
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform draw in `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Process-wide cache of angle CDF tables at this precision.
    fn cdf_cache() -> &'static CdfCache<Self>;
}

impl Real for f64 {
    const TOL_FLOOR: f64 = 0.0;

    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }

    fn cdf_cache() -> &'static CdfCache<Self> {
        static CACHE: std::sync::OnceLock<CdfCache<f64>> = std::sync::OnceLock::new();
        CACHE.get_or_init(CdfCache::new)
    }
}

impl Real for f32 {
    const TOL_FLOOR: f64 = 5e-5;

    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }

    fn cdf_cache() -> &'static CdfCache<Self> {
        static CACHE: std::sync::OnceLock<CdfCache<f32>> = std::sync::OnceLock::new();
        CACHE.get_or_init(CdfCache::new)
    }
}
