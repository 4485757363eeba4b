//! The SO(3) heat kernel `f_eps(omega)` relative to the Haar measure.
//!
//! Convention: `f_eps(w) = sum_l (2l+1) exp(-l(l+1) eps) chi_l(w)`, with the
//! scale `eps` entering linearly. This is the convention under which the
//! closed-form small-scale expression agrees with the series, the scale is
//! additive under convolution, and `IG(I, eps)` approaches `N(0, 2 eps I)` in
//! tangent coordinates (`eps = sigma^2 / 2`).
//!
//! Both branches are evaluated in log space, so the deep tail at tiny scales
//! never underflows to zero.

use crate::error::{Error, Result};
use crate::real::Real;

/// Scale at which [`f_eps`] switches from the closed form to the series.
pub const CROSSOVER: f64 = 1.0;
/// Hard cap on the adaptive series truncation.
pub const L_MAX_CAP: usize = 2000;
/// Relative size of the last series term at which summation stops.
pub const SERIES_TOL: f64 = 1e-12;

/// Value and first derivatives of `log f_eps(omega)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelEval<T: Real = f64> {
    pub log_f: T,
    /// d log f / d omega.
    pub d_omega: T,
    /// (d log f / d omega) / sin(omega): finite at 0 and pi.
    pub d_omega_over_sin: T,
    /// d log f / d eps.
    pub d_eps: T,
}

/// `chi_l(w) = sin((l + 1/2) w) / sin(w / 2)`, accumulated as `1 + 2 sum cos(m w)`.
///
/// The cosine form has no removable singularity at `w = 0`.
pub fn f_series<T: Real>(omega: T, eps: T, l_max: usize) -> T {
    let mut chi = T::one();
    let mut sum = T::one();
    for l in 1..=l_max {
        let lf = T::of(l as f64);
        chi += T::of(2.0) * (lf * omega).cos();
        sum += (T::of(2.0) * lf + T::one()) * (-lf * (lf + T::one()) * eps).exp() * chi;
    }
    sum
}

/// Series truncated adaptively once the term bound drops below [`SERIES_TOL`].
pub fn f_series_adaptive<T: Real>(omega: T, eps: T) -> Result<(T, usize)> {
    let eval = series_eval(omega, eps)?;
    Ok((eval.0.log_f.exp(), eval.1))
}

/// Closed-form small-scale expression with three periodic images.
pub fn f_approx<T: Real>(omega: T, eps: T) -> T {
    approx_eval(omega, eps).log_f.exp()
}

/// Series for `eps >= CROSSOVER`, closed form below.
pub fn f_eps<T: Real>(omega: T, eps: T) -> Result<T> {
    Ok(eval(omega, eps)?.log_f.exp())
}

/// Log-kernel and derivatives, dispatching on [`CROSSOVER`].
pub fn eval<T: Real>(omega: T, eps: T) -> Result<KernelEval<T>> {
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "kernel scale must be positive and finite, got {eps}"
        )));
    }
    let out = if eps >= T::of(CROSSOVER) {
        series_eval(omega, eps)?.0
    } else {
        approx_eval(omega, eps)
    };
    if !out.log_f.is_finite() || !out.d_omega.is_finite() || !out.d_eps.is_finite() {
        return Err(Error::NonFiniteDensity {
            omega: omega.to_f64_lossy(),
            eps: eps.to_f64_lossy(),
        });
    }
    Ok(out)
}

/// Adaptive series with derivatives; also returns the truncation order used.
pub(crate) fn series_eval<T: Real>(omega: T, eps: T) -> Result<(KernelEval<T>, usize)> {
    let two = T::of(2.0);
    let c = omega.cos();
    let s = omega.sin();
    // chi_l, chi_l', chi_l' / sin(w), and Chebyshev U_{l-1}(cos w), U_{l-2}
    let (mut chi, mut dchi, mut rho) = (T::one(), T::zero(), T::zero());
    let (mut u_prev, mut u_cur) = (T::zero(), T::one());
    let (mut f, mut df, mut dfs, mut dfe) = (T::one(), T::zero(), T::zero(), T::zero());
    let tol = T::of(SERIES_TOL);
    for l in 1..=L_MAX_CAP {
        let lf = T::of(l as f64);
        let lw = lf * omega;
        chi += two * lw.cos();
        dchi -= two * lf * lw.sin();
        rho -= two * lf * u_cur;
        let weight = (two * lf + T::one()) * (-lf * (lf + T::one()) * eps).exp();
        f += weight * chi;
        df += weight * dchi;
        dfs += weight * rho;
        dfe -= lf * (lf + T::one()) * weight * chi;
        let u_next = two * c * u_cur - u_prev;
        u_prev = u_cur;
        u_cur = u_next;
        // |chi_l| <= 2l+1; derivative factors grow polynomially in l.
        let bound = weight * (two * lf + T::one()) * (lf + T::one()).powi(3);
        if bound < tol * f.abs().max(T::one()) {
            let _ = s;
            return Ok((
                KernelEval {
                    log_f: f.ln(),
                    d_omega: df / f,
                    d_omega_over_sin: dfs / f,
                    d_eps: dfe / f,
                },
                l,
            ));
        }
    }
    Err(Error::Unconverged {
        eps: eps.to_f64_lossy(),
        l_max: L_MAX_CAP,
    })
}

/// Below this angle the closed form cancels catastrophically and its Taylor
/// expansion about 0 is used instead; the switch balances `a^2` truncation
/// against `ulp / a^2` rounding.
fn origin_margin<T: Real>() -> T {
    T::epsilon().sqrt().sqrt()
}

/// Distance from pi at which the even-symmetric ratio is frozen.
fn pi_margin<T: Real>() -> T {
    T::epsilon().cbrt()
}

struct ApproxTerms<T> {
    b: T,
    b_a: T,
    b_e: T,
}

fn approx_terms<T: Real>(a: T, eps: T) -> ApproxTerms<T> {
    let pi = T::PI();
    let two_pi = pi + pi;
    let e1 = (pi * (a - pi) / eps).exp();
    let e2 = (-pi * (a + pi) / eps).exp();
    let am = a - two_pi;
    let ap = a + two_pi;
    let eps2 = eps * eps;
    ApproxTerms {
        b: a - am * e1 - ap * e2,
        b_a: T::one() - e1 - am * e1 * pi / eps - e2 + ap * e2 * pi / eps,
        b_e: am * e1 * pi * (a - pi) / eps2 - ap * e2 * pi * (a + pi) / eps2,
    }
}

/// Closed form written as
/// `sqrt(pi) eps^-3/2 e^(eps/4 - a^2/(4 eps)) B(a) / (2 sin(a/2))`
/// with `B(a) = a - (a - 2pi) e^(pi(a - pi)/eps) - (a + 2pi) e^(-pi(a + pi)/eps)`,
/// algebraically identical to the product form but free of overflow.
pub(crate) fn approx_eval<T: Real>(omega: T, eps: T) -> KernelEval<T> {
    let pi = T::PI();
    let a = omega.abs().min(pi);
    let sign = if omega < T::zero() {
        -T::one()
    } else {
        T::one()
    };
    let two = T::of(2.0);
    let half = T::of(0.5);
    let quarter = T::of(0.25);
    let log_c = half * pi.ln() - T::of(1.5) * eps.ln() + eps * quarter;
    let gauss = -a * a / (T::of(4.0) * eps);
    let base_eps = -T::of(1.5) / eps + quarter + a * a / (T::of(4.0) * eps * eps);

    if a < origin_margin::<T>() {
        // B(a) = b1 a + b3 a^3 + ..., with E = exp(-pi^2/eps), k = pi/eps
        let e = (-pi * pi / eps).exp();
        let k = pi / eps;
        let b1 = T::one() - two * e + T::of(4.0) * pi * k * e;
        let b3 = e * k * k * (two * pi * k / T::of(3.0) - T::one());
        let db1 = e * k * k * (T::of(4.0) * pi * k - T::of(6.0));
        let r = -T::one() / (two * eps) + two * b3 / b1 + T::one() / T::of(12.0);
        let log_ratio = b1.ln() + (b3 / b1 + T::one() / T::of(24.0)) * a * a;
        return KernelEval {
            log_f: log_c + gauss + log_ratio,
            d_omega: sign * r * a.sin(),
            d_omega_over_sin: r,
            d_eps: base_eps + db1 / b1,
        };
    }

    let t = approx_terms(a, eps);
    let log_f = log_c + gauss + t.b.ln() - (two * (a * half).sin()).ln();
    let slope = |x: T, t: &ApproxTerms<T>| -x / (two * eps) + t.b_a / t.b - half / (x * half).tan();
    let (d_omega_over_sin, d_abs) = if a > pi - pi_margin::<T>() {
        let x = pi - pi_margin::<T>();
        let r = slope(x, &approx_terms(x, eps)) / x.sin();
        (r, r * a.sin())
    } else {
        let d = slope(a, &t);
        (d / a.sin(), d)
    };

    KernelEval {
        log_f,
        d_omega: sign * d_abs,
        d_omega_over_sin,
        d_eps: base_eps + t.b_e / t.b,
    }
}
