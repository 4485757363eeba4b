//! Isotropic Gaussian distribution `IG(mu, eps)` on SO(3).
//!
//! Densities are relative to the normalized Haar measure. The score of
//! `x` is the gradient of the log density along the right-perturbation
//! `x expm(s X_i)` for the basis generators `X_i = hat(e_i)`.

pub mod cdf;
pub mod kernel;

use rand::Rng;

pub use cdf::{build_cdf, snap_eps, AngleCdfTable, CdfCache, CACHE_LOG_RESOLUTION, CDF_GRID};
pub use kernel::{f_approx, f_eps, f_series, f_series_adaptive, KernelEval, CROSSOVER};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::so3::{
    angle_of, expm, sample_unit_vector, skew_part, vec3, Mat3, Rotation, TangentVector,
};

/// Scores are undefined this close to the antipode of the mean.
pub const CUT_LOCUS_MARGIN: f64 = 1e-4;

/// Mean and scale of an isotropic Gaussian on SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IgParams<T: Real = f64> {
    pub mu: Rotation<T>,
    pub eps: T,
}

impl<T: Real> IgParams<T> {
    pub fn new(mu: Rotation<T>, eps: T) -> Result<Self> {
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "IG scale must be positive and finite, got {eps}"
            )));
        }
        Ok(IgParams { mu, eps })
    }

    pub fn centered(eps: T) -> Result<Self> {
        Self::new(Rotation::identity(), eps)
    }
}

/// Draw a rotation angle from the tabulated CDF at (snapped) scale `eps`.
pub fn sample_angle<T: Real, R: Rng + ?Sized>(eps: T, rng: &mut R) -> Result<T> {
    let table = T::cdf_cache().get(eps)?;
    Ok(table.quantile(T::unit_uniform(rng)))
}

/// Draw a tangent vector `w v` with `w ~ IG angle law` and `v` uniform on the sphere.
pub fn sample_tangent<T: Real, R: Rng + ?Sized>(eps: T, rng: &mut R) -> Result<TangentVector<T>> {
    let w = sample_angle(eps, rng)?;
    let v = sample_unit_vector::<T, _>(rng);
    Ok(TangentVector(vec3::scale(&v, w)))
}

/// `x = mu expm(w v)`.
///
/// The angle table is looked up at `snap_eps(eps)`; callers that also need
/// the density or score of the same draw should evaluate them at the
/// snapped scale too.
pub fn sample<T: Real, R: Rng + ?Sized>(params: &IgParams<T>, rng: &mut R) -> Result<Rotation<T>> {
    let v = sample_tangent(params.eps, rng)?;
    Ok(params.mu.compose(&expm(&v)))
}

pub fn sample_n<T: Real, R: Rng + ?Sized>(
    params: &IgParams<T>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Rotation<T>>> {
    (0..n).map(|_| sample(params, rng)).collect()
}

/// Angle of the relative rotation `m = mu^T x` and the log-kernel there.
pub(crate) fn eval_relative<T: Real>(m: &Mat3<T>, eps: T) -> Result<(T, KernelEval<T>)> {
    let w = angle_of(m);
    Ok((w, kernel::eval(w, eps)?))
}

/// `log f_eps(angle(mu^T x))`.
pub fn log_density<T: Real>(x: &Rotation<T>, params: &IgParams<T>) -> Result<T> {
    Ok(eval_relative(params.mu.between(x).matrix(), params.eps)?
        .1
        .log_f)
}

/// Score given the relative rotation `m = mu^T x` as a raw matrix.
pub(crate) fn score_relative<T: Real>(m: &Mat3<T>, eps: T) -> Result<TangentVector<T>> {
    let w = angle_of(m);
    if w > T::PI() - T::of(CUT_LOCUS_MARGIN) {
        return Err(Error::NearCutLocus {
            omega: w.to_f64_lossy(),
        });
    }
    let e = kernel::eval(w, eps)?;
    // d w / d s along X_i equals the i-th axis component; sin(w) * axis is
    // the skew part of m, so the ratio form stays finite at w = 0.
    Ok(TangentVector(vec3::scale(
        &skew_part(m),
        e.d_omega_over_sin,
    )))
}

/// Gradient of `log_density` along `x expm(s X_i)`, `i = 1..3`.
pub fn score<T: Real>(x: &Rotation<T>, params: &IgParams<T>) -> Result<TangentVector<T>> {
    score_relative(params.mu.between(x).matrix(), params.eps)
}
