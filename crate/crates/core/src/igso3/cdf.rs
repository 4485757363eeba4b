//! Tabulated angle CDFs for inverse-transform sampling.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::kernel;
use crate::error::{Error, Result};
use crate::real::Real;

/// Default number of grid points per table.
pub const CDF_GRID: usize = 1024;
/// Tables are shared between scales whose logarithms round to the same
/// multiple of this value (a relative resolution of about 0.1%).
pub const CACHE_LOG_RESOLUTION: f64 = 1e-3;

/// Beyond this many standard deviations of the Gaussian limit the angle
/// density is below `exp(-190)` of its peak; the table stops there.
const TAIL_SIGMAS: f64 = 28.0;

/// Cumulative distribution of the rotation angle on a uniform grid over
/// `[0, upper]`; `upper` is pi unless the distribution is very concentrated.
#[derive(Clone, Debug)]
pub struct AngleCdfTable<T: Real = f64> {
    eps: T,
    upper: T,
    cdf: Vec<T>,
}

impl<T: Real> AngleCdfTable<T> {
    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    /// Largest tabulated angle; the CDF is 1 beyond it.
    pub fn upper(&self) -> T {
        self.upper
    }

    fn step(&self) -> T {
        self.upper / T::of((self.cdf.len() - 1) as f64)
    }

    pub fn grid(&self) -> Vec<T> {
        let h = self.step();
        (0..self.cdf.len()).map(|k| h * T::of(k as f64)).collect()
    }

    pub fn cdf_values(&self) -> &[T] {
        &self.cdf
    }

    /// Linear interpolation of the CDF at `omega`.
    pub fn cdf(&self, omega: T) -> T {
        if omega <= T::zero() {
            return T::zero();
        }
        if omega >= self.upper {
            return T::one();
        }
        let pos = omega / self.step();
        let k = pos.floor().to_usize().unwrap_or(0).min(self.cdf.len() - 2);
        let frac = pos - T::of(k as f64);
        self.cdf[k] + frac * (self.cdf[k + 1] - self.cdf[k])
    }

    /// Inverse CDF by linear interpolation between bracketing grid points.
    pub fn quantile(&self, u: T) -> T {
        let u = u.max(T::zero()).min(T::one());
        let hi = self.cdf.partition_point(|&c| c < u);
        if hi == 0 {
            return T::zero();
        }
        if hi >= self.cdf.len() {
            return self.upper;
        }
        let lo = hi - 1;
        let (c0, c1) = (self.cdf[lo], self.cdf[hi]);
        let frac = if c1 > c0 {
            (u - c0) / (c1 - c0)
        } else {
            T::zero()
        };
        self.step() * (T::of(lo as f64) + frac)
    }
}

/// Trapezoidal cumulative integral of `(1 - cos w) / pi * f_eps(w)`.
pub fn build_cdf<T: Real>(eps: T, n_grid: usize) -> Result<AngleCdfTable<T>> {
    if n_grid < 64 {
        return Err(Error::InvalidArgument(format!(
            "CDF grid needs at least 64 points, got {n_grid}"
        )));
    }
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "kernel scale must be positive and finite, got {eps}"
        )));
    }
    let upper = T::PI().min(T::of(TAIL_SIGMAS) * eps.sqrt());
    let h = upper / T::of((n_grid - 1) as f64);
    let log_pi = T::PI().ln();
    let mut density = Vec::with_capacity(n_grid);
    for k in 0..n_grid {
        let w = h * T::of(k as f64);
        let d = if k == 0 {
            T::zero()
        } else {
            let log_f = kernel::eval(w, eps)?.log_f;
            ((T::one() - w.cos()).ln() - log_pi + log_f).exp()
        };
        if !d.is_finite() {
            return Err(Error::NonFiniteDensity {
                omega: w.to_f64_lossy(),
                eps: eps.to_f64_lossy(),
            });
        }
        density.push(d.max(T::zero()));
    }
    let mut cdf = Vec::with_capacity(n_grid);
    let mut acc = T::zero();
    cdf.push(acc);
    let half_h = h * T::of(0.5);
    for k in 1..n_grid {
        acc += half_h * (density[k - 1] + density[k]);
        cdf.push(acc);
    }
    if !(acc > T::zero()) || !acc.is_finite() {
        return Err(Error::NonFiniteDensity {
            omega: upper.to_f64_lossy(),
            eps: eps.to_f64_lossy(),
        });
    }
    for c in cdf.iter_mut() {
        *c /= acc;
    }
    *cdf.last_mut().expect("non-empty") = T::one();
    Ok(AngleCdfTable { eps, upper, cdf })
}

/// Shared store of tables keyed by quantized `ln eps`.
///
/// Lookups take a read lock; a miss builds the table outside any lock and
/// inserts it, so concurrent misses on the same key may build twice but all
/// callers observe an equivalent table.
#[derive(Debug, Default)]
pub struct CdfCache<T: Real> {
    tables: RwLock<HashMap<i64, Arc<AngleCdfTable<T>>>>,
}

fn cache_key<T: Real>(eps: T) -> i64 {
    (eps.to_f64_lossy().ln() / CACHE_LOG_RESOLUTION).round() as i64
}

/// The representative scale used for all lookups near `eps`.
pub fn snap_eps<T: Real>(eps: T) -> T {
    T::of((cache_key(eps) as f64 * CACHE_LOG_RESOLUTION).exp())
}

impl<T: Real> CdfCache<T> {
    pub fn new() -> Self {
        CdfCache {
            tables: RwLock::new(HashMap::new()),
        }
    }

    /// Table for the snapped scale `snap_eps(eps)`.
    pub fn get(&self, eps: T) -> Result<Arc<AngleCdfTable<T>>> {
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "kernel scale must be positive and finite, got {eps}"
            )));
        }
        let key = cache_key(eps);
        if let Some(t) = self.tables.read().expect("cdf cache poisoned").get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(build_cdf(snap_eps(eps), CDF_GRID)?);
        let mut w = self.tables.write().expect("cdf cache poisoned");
        Ok(Arc::clone(w.entry(key).or_insert(table)))
    }

    pub fn len(&self) -> usize {
        self.tables.read().expect("cdf cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
