//! Rotation group arithmetic and rotation representations.
//!
//! Rotations are stored as 3x3 matrices. Quaternions are a conversion target
//! used for fractional powers and for Haar-uniform sampling; the 6D frame
//! representation is the continuous output parameterization of networks.
//!
//! The Lie algebra is coordinatized by the standard generators
//! `X_i = hat(e_i)`, so that `hat(v) w = v x w`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;

/// Orthogonality / determinant tolerance accepted when constructing a rotation.
pub const ROTATION_TOL: f64 = 1e-9;
/// Tolerance for exp/log and quaternion round trips.
pub const ROUND_TRIP_TOL: f64 = 1e-8;
/// Maximum deviation of a quaternion norm from 1 accepted by [`from_quaternion`].
pub const QUATERNION_NORM_TOL: f64 = 1e-6;
/// Symmetry residual tolerated by [`vee`].
pub const SKEW_TOL: f64 = 1e-8;

/// Angles below this use the Taylor branch of the log map.
const LOG_SMALL_ANGLE: f64 = 1e-4;
/// Angles within this distance of pi use the diagonal (axis extraction) branch.
const LOG_NEAR_PI: f64 = 1e-2;

pub type Mat3<T> = [[T; 3]; 3];
pub type Vec3<T> = [T; 3];

pub(crate) mod vec3 {
    use super::{Mat3, Vec3};
    use crate::real::Real;

    #[inline]
    pub fn dot<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    #[inline]
    pub fn cross<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    #[inline]
    pub fn norm<T: Real>(a: &Vec3<T>) -> T {
        dot(a, a).sqrt()
    }

    #[inline]
    pub fn scale<T: Real>(a: &Vec3<T>, s: T) -> Vec3<T> {
        [a[0] * s, a[1] * s, a[2] * s]
    }

    #[inline]
    pub fn add<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    #[inline]
    pub fn sub<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    #[inline]
    pub fn matmul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
        let mut out = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        out
    }

    /// `a^T b` without materializing the transpose.
    #[inline]
    pub fn matmul_tn<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
        let mut out = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = a[0][i] * b[0][j] + a[1][i] * b[1][j] + a[2][i] * b[2][j];
            }
        }
        out
    }

    #[inline]
    pub fn matvec<T: Real>(a: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
        [
            a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
            a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
            a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
        ]
    }

    #[inline]
    pub fn transpose<T: Real>(a: &Mat3<T>) -> Mat3<T> {
        let mut out = *a;
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = a[j][i];
            }
        }
        out
    }

    #[inline]
    pub fn trace<T: Real>(a: &Mat3<T>) -> T {
        a[0][0] + a[1][1] + a[2][2]
    }

    pub fn det<T: Real>(a: &Mat3<T>) -> T {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    }

    pub fn identity<T: Real>() -> Mat3<T> {
        let (o, z) = (T::one(), T::zero());
        [[o, z, z], [z, o, z], [z, z, o]]
    }

    /// Largest absolute entry of `a - b`.
    pub fn max_abs_diff<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> T {
        let mut m = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                m = m.max((a[i][j] - b[i][j]).abs());
            }
        }
        m
    }
}

/// Coordinates of an element of so(3) in the basis `{hat(e_i)}`.
///
/// Used for axis-angle vectors, integrator increments and score values.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TangentVector<T: Real = f64>(pub Vec3<T>);

impl<T: Real> TangentVector<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self([x, y, z])
    }

    pub fn zero() -> Self {
        Self([T::zero(); 3])
    }

    pub fn norm(&self) -> T {
        vec3::norm(&self.0)
    }

    pub fn dot(&self, other: &Self) -> T {
        vec3::dot(&self.0, &other.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn scale(&self, s: T) -> Self {
        Self(vec3::scale(&self.0, s))
    }

    pub fn cast<U: Real>(&self) -> TangentVector<U> {
        TangentVector(self.0.map(|x| U::of(x.to_f64_lossy())))
    }
}

impl<T: Real> Add for TangentVector<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(vec3::add(&self.0, &rhs.0))
    }
}

impl<T: Real> Sub for TangentVector<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self(vec3::sub(&self.0, &rhs.0))
    }
}

impl<T: Real> Neg for TangentVector<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self(self.0.map(|x| -x))
    }
}

impl<T: Real> Mul<T> for TangentVector<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        self.scale(rhs)
    }
}

/// A 3x3 orthogonal matrix with unit determinant.
#[derive(Clone, Copy, PartialEq)]
pub struct Rotation<T: Real = f64> {
    m: Mat3<T>,
}

impl<T: Real> fmt::Debug for Rotation<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rotation({:?})", self.m)
    }
}

impl<T: Real> Default for Rotation<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        Self {
            m: vec3::identity(),
        }
    }

    /// Validates orthogonality and determinant at [`ROTATION_TOL`].
    pub fn from_matrix(m: Mat3<T>) -> Result<Self> {
        Self::from_matrix_tol(m, ROTATION_TOL)
    }

    pub fn from_matrix_tol(m: Mat3<T>, tol: f64) -> Result<Self> {
        let (ortho, det) = rotation_residuals(&m);
        let tol = T::tol(tol);
        if !(ortho <= tol) || !((det - T::one()).abs() <= tol) {
            return Err(Error::NotRotation {
                ortho: ortho.to_f64_lossy(),
                det: det.to_f64_lossy(),
            });
        }
        Ok(Self { m })
    }

    /// Wraps a matrix that is a rotation by construction.
    #[inline]
    pub(crate) fn from_matrix_unchecked(m: Mat3<T>) -> Self {
        Self { m }
    }

    #[inline]
    pub fn matrix(&self) -> &Mat3<T> {
        &self.m
    }

    /// Row-major entries.
    pub fn to_array(&self) -> [T; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    /// Column `j` of the matrix.
    pub fn column(&self, j: usize) -> Vec3<T> {
        [self.m[0][j], self.m[1][j], self.m[2][j]]
    }

    pub fn inverse(&self) -> Self {
        Self {
            m: vec3::transpose(&self.m),
        }
    }

    /// Matrix product `self * rhs`.
    pub fn compose(&self, rhs: &Self) -> Self {
        Self {
            m: vec3::matmul(&self.m, &rhs.m),
        }
    }

    /// `self^T * rhs`, the relative rotation taking `self` to `rhs`.
    pub fn between(&self, rhs: &Self) -> Self {
        Self {
            m: vec3::matmul_tn(&self.m, &rhs.m),
        }
    }

    pub fn rotate(&self, v: &Vec3<T>) -> Vec3<T> {
        vec3::matvec(&self.m, v)
    }

    pub fn log(&self) -> TangentVector<T> {
        log_unchecked(&self.m)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> T {
        angle_of(&self.m)
    }

    pub fn cast<U: Real>(&self) -> Rotation<U> {
        Rotation {
            m: self.m.map(|row| row.map(|x| U::of(x.to_f64_lossy()))),
        }
    }

    /// Orthogonality residual and determinant.
    pub fn residuals(&self) -> (T, T) {
        rotation_residuals(&self.m)
    }
}

impl<T: Real> Mul for Rotation<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.compose(&rhs)
    }
}

fn rotation_residuals<T: Real>(m: &Mat3<T>) -> (T, T) {
    let mtm = vec3::matmul_tn(m, m);
    let ortho = vec3::max_abs_diff(&mtm, &vec3::identity());
    (ortho, vec3::det(m))
}

pub fn hat<T: Real>(v: &TangentVector<T>) -> Mat3<T> {
    let [x, y, z] = v.0;
    let o = T::zero();
    [[o, -z, y], [z, o, -x], [-y, x, o]]
}

pub fn vee<T: Real>(s: &Mat3<T>) -> Result<TangentVector<T>> {
    let mut residual = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            residual = residual.max((s[i][j] + s[j][i]).abs());
        }
    }
    if !(residual <= T::tol(SKEW_TOL)) {
        return Err(Error::NotSkew {
            residual: residual.to_f64_lossy(),
        });
    }
    Ok(TangentVector([s[2][1], s[0][2], s[1][0]]))
}

/// `vee((m - m^T) / 2)`; equals `sin(angle) * axis` for a rotation.
#[inline]
pub(crate) fn skew_part<T: Real>(m: &Mat3<T>) -> Vec3<T> {
    let half = T::of(0.5);
    [
        (m[2][1] - m[1][2]) * half,
        (m[0][2] - m[2][0]) * half,
        (m[1][0] - m[0][1]) * half,
    ]
}

/// Rotation angle of `m` via `atan2(|skew|, (tr - 1)/2)`, stable at 0 and pi.
#[inline]
pub(crate) fn angle_of<T: Real>(m: &Mat3<T>) -> T {
    let s = vec3::norm(&skew_part(m));
    let c = (vec3::trace(m) - T::one()) * T::of(0.5);
    s.atan2(c.max(-T::one()).min(T::one()))
}

/// Rodrigues formula.
pub fn expm<T: Real>(v: &TangentVector<T>) -> Rotation<T> {
    let theta2 = v.dot(v);
    let theta = theta2.sqrt();
    // a = sin(t)/t, b = (1 - cos t)/t^2
    let (a, b) = if theta < T::of(1e-4) {
        (
            T::one() - theta2 / T::of(6.0),
            T::of(0.5) - theta2 / T::of(24.0),
        )
    } else {
        (theta.sin() / theta, (T::one() - theta.cos()) / theta2)
    };
    let k = hat(v);
    let k2 = vec3::matmul(&k, &k);
    let mut m = vec3::identity();
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    Rotation::from_matrix_unchecked(m)
}

/// Principal logarithm of a raw matrix, validating it first.
pub fn logm_matrix<T: Real>(m: &Mat3<T>) -> Result<TangentVector<T>> {
    let r = Rotation::from_matrix(*m)?;
    Ok(r.log())
}

pub fn logm<T: Real>(r: &Rotation<T>) -> TangentVector<T> {
    r.log()
}

fn log_unchecked<T: Real>(m: &Mat3<T>) -> TangentVector<T> {
    let w = skew_part(m);
    let s = vec3::norm(&w);
    let c = ((vec3::trace(m) - T::one()) * T::of(0.5))
        .max(-T::one())
        .min(T::one());
    let theta = s.atan2(c);
    if theta < T::of(LOG_SMALL_ANGLE) {
        // theta / sin(theta) ~ 1 + theta^2 / 6
        let f = T::one() + theta * theta / T::of(6.0);
        return TangentVector(vec3::scale(&w, f));
    }
    if T::PI() - theta > T::of(LOG_NEAR_PI) {
        return TangentVector(vec3::scale(&w, theta / s));
    }
    // Near pi: (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) n n^T.
    let one_minus_c = T::one() - c;
    let mut sym = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            sym[i][j] = (m[i][j] + m[j][i]) * T::of(0.5);
        }
        sym[i][i] -= c;
    }
    let k = (0..3)
        .max_by(|&i, &j| sym[i][i].partial_cmp(&sym[j][j]).unwrap())
        .unwrap();
    let nk = (sym[k][k] / one_minus_c).max(T::zero()).sqrt();
    let denom = one_minus_c * nk;
    let mut n = [sym[0][k] / denom, sym[1][k] / denom, sym[2][k] / denom];
    let nn = vec3::norm(&n);
    n = vec3::scale(&n, T::one() / nn);
    if vec3::dot(&n, &w) < T::zero() {
        n = vec3::scale(&n, -T::one());
    }
    TangentVector(vec3::scale(&n, theta))
}

pub fn compose<T: Real>(r1: &Rotation<T>, r2: &Rotation<T>) -> Rotation<T> {
    r1.compose(r2)
}

pub fn inverse<T: Real>(r: &Rotation<T>) -> Rotation<T> {
    r.inverse()
}

/// Bi-invariant distance `arccos((tr(R1^T R2) - 1)/2)` in `[0, pi]`.
pub fn geodesic_angle<T: Real>(r1: &Rotation<T>, r2: &Rotation<T>) -> T {
    angle_of(&vec3::matmul_tn(&r1.m, &r2.m))
}

/// Unit quaternion `a + b i + c j + d k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quaternion<T: Real = f64> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

impl<T: Real> Quaternion<T> {
    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Self { a, b, c, d }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    pub fn norm(&self) -> T {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.a / n, self.b / n, self.c / n, self.d / n)
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.a, -self.b, -self.c, -self.d)
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.a, self.b, self.c, self.d]
    }
}

/// Matrix to unit quaternion (Shepperd's method), on the hemisphere `a >= 0`.
pub fn to_quaternion<T: Real>(r: &Rotation<T>) -> Quaternion<T> {
    let m = &r.m;
    let tr = vec3::trace(m);
    let quarter = T::of(0.25);
    let one = T::one();
    let two = T::of(2.0);
    let q = if tr >= m[0][0] && tr >= m[1][1] && tr >= m[2][2] {
        let s = (one + tr).sqrt() * two;
        Quaternion::new(
            quarter * s,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        )
    } else if m[0][0] >= m[1][1] && m[0][0] >= m[2][2] {
        let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * two;
        Quaternion::new(
            (m[2][1] - m[1][2]) / s,
            quarter * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        )
    } else if m[1][1] >= m[2][2] {
        let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * two;
        Quaternion::new(
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            quarter * s,
            (m[1][2] + m[2][1]) / s,
        )
    } else {
        let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * two;
        Quaternion::new(
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            quarter * s,
        )
    };
    let q = q.normalized();
    if q.a < T::zero() {
        q.neg()
    } else {
        q
    }
}

/// Rejects quaternions whose norm deviates from 1 by more than [`QUATERNION_NORM_TOL`].
pub fn from_quaternion<T: Real>(q: &Quaternion<T>) -> Result<Rotation<T>> {
    let n = q.norm();
    if !((n - T::one()).abs() <= T::tol(QUATERNION_NORM_TOL)) {
        return Err(Error::NonUnitQuaternion {
            norm: n.to_f64_lossy(),
        });
    }
    Ok(quat_to_rotation(&q.normalized()))
}

pub(crate) fn quat_to_rotation<T: Real>(q: &Quaternion<T>) -> Rotation<T> {
    let Quaternion { a, b, c, d } = *q;
    let one = T::one();
    let two = T::of(2.0);
    Rotation::from_matrix_unchecked([
        [
            one - two * (c * c + d * d),
            two * (b * c - a * d),
            two * (b * d + a * c),
        ],
        [
            two * (b * c + a * d),
            one - two * (b * b + d * d),
            two * (c * d - a * b),
        ],
        [
            two * (b * d - a * c),
            two * (c * d + a * b),
            one - two * (b * b + c * c),
        ],
    ])
}

/// Hamilton product.
pub fn quat_product<T: Real>(p: &Quaternion<T>, q: &Quaternion<T>) -> Quaternion<T> {
    Quaternion::new(
        p.a * q.a - p.b * q.b - p.c * q.c - p.d * q.d,
        p.a * q.b + p.b * q.a + p.c * q.d - p.d * q.c,
        p.a * q.c - p.b * q.d + p.c * q.a + p.d * q.b,
        p.a * q.d + p.b * q.c - p.c * q.b + p.d * q.a,
    )
}

pub fn quat_conj<T: Real>(q: &Quaternion<T>) -> Quaternion<T> {
    Quaternion::new(q.a, -q.b, -q.c, -q.d)
}

/// `q^p = exp(p ln q)` for a unit quaternion.
pub fn quat_power<T: Real>(q: &Quaternion<T>, p: T) -> Quaternion<T> {
    if p == T::one() {
        return *q;
    }
    let v = [q.b, q.c, q.d];
    let vn = vec3::norm(&v);
    // ln q = (0, half_angle * axis)
    let half = vn.atan2(q.a);
    let scaled = half * p;
    let (s, c) = scaled.sin_cos();
    if vn <= T::epsilon() {
        // Vector part vanishes: q = +-1; (+1)^p = 1, (-1)^p rotates about an arbitrary axis.
        if q.a >= T::zero() || p == T::zero() {
            return Quaternion::identity();
        }
        return Quaternion::new(c, s, T::zero(), T::zero());
    }
    let k = s / vn;
    Quaternion::new(c, v[0] * k, v[1] * k, v[2] * k)
}

/// Variance-preserving composition `x^sqrt(alpha) * delta^sqrt(1 - alpha)`.
pub fn vp_compose<T: Real>(x: &Rotation<T>, delta: &Rotation<T>, alpha: T) -> Rotation<T> {
    if alpha >= T::one() {
        return *x;
    }
    let qx = quat_power(&to_quaternion(x), alpha.sqrt());
    let qd = quat_power(&to_quaternion(delta), (T::one() - alpha).sqrt());
    quat_to_rotation(&quat_product(&qx, &qd).normalized())
}

/// Two columns of an unconstrained 3x2 frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SixD<T: Real = f64> {
    pub u: Vec3<T>,
    pub w: Vec3<T>,
}

impl<T: Real> SixD<T> {
    pub fn new(u: Vec3<T>, w: Vec3<T>) -> Self {
        Self { u, w }
    }

    pub fn from_slice(s: &[T]) -> Self {
        Self {
            u: [s[0], s[1], s[2]],
            w: [s[3], s[4], s[5]],
        }
    }

    /// The first two columns of a rotation.
    pub fn from_rotation(r: &Rotation<T>) -> Self {
        Self {
            u: r.column(0),
            w: r.column(1),
        }
    }
}

const SIXD_MIN_NORM: f64 = 1e-12;

/// Gram-Schmidt decoding of a 6D frame.
pub fn from_sixd<T: Real>(s: &SixD<T>) -> Result<Rotation<T>> {
    let min = T::of(SIXD_MIN_NORM);
    let nu = vec3::norm(&s.u);
    if !(nu > min) {
        return Err(Error::DegenerateFrame);
    }
    let c1 = vec3::scale(&s.u, T::one() / nu);
    let w_perp = vec3::sub(&s.w, &vec3::scale(&c1, vec3::dot(&c1, &s.w)));
    let nw = vec3::norm(&w_perp);
    if !(nw > min * nu.max(vec3::norm(&s.w)).max(T::one())) {
        return Err(Error::DegenerateFrame);
    }
    let c2 = vec3::scale(&w_perp, T::one() / nw);
    let c3 = vec3::cross(&c1, &c2);
    Ok(Rotation::from_matrix_unchecked([
        [c1[0], c2[0], c3[0]],
        [c1[1], c2[1], c3[1]],
        [c1[2], c2[2], c3[2]],
    ]))
}

/// Backpropagates `dL/dR` through [`from_sixd`] to `dL/d(u, w)`.
pub fn from_sixd_backward<T: Real>(s: &SixD<T>, grad: &Mat3<T>) -> [T; 6] {
    let nu = vec3::norm(&s.u);
    let c1 = vec3::scale(&s.u, T::one() / nu);
    let c1w = vec3::dot(&c1, &s.w);
    let w_perp = vec3::sub(&s.w, &vec3::scale(&c1, c1w));
    let nw = vec3::norm(&w_perp);
    let c2 = vec3::scale(&w_perp, T::one() / nw);
    let col = |j: usize| [grad[0][j], grad[1][j], grad[2][j]];
    let (g1, g2, g3) = (col(0), col(1), col(2));
    // c3 = c1 x c2
    let g_c1 = vec3::add(&g1, &vec3::cross(&c2, &g3));
    let g_c2 = vec3::add(&g2, &vec3::cross(&g3, &c1));
    // c2 = w_perp / |w_perp|
    let g_wp = vec3::scale(
        &vec3::sub(&g_c2, &vec3::scale(&c2, vec3::dot(&c2, &g_c2))),
        T::one() / nw,
    );
    // w_perp = w - (c1.w) c1
    let g_w = vec3::sub(&g_wp, &vec3::scale(&c1, vec3::dot(&c1, &g_wp)));
    let g_c1_total = vec3::sub(
        &vec3::sub(&g_c1, &vec3::scale(&s.w, vec3::dot(&c1, &g_wp))),
        &vec3::scale(&g_wp, c1w),
    );
    // c1 = u / |u|
    let g_u = vec3::scale(
        &vec3::sub(&g_c1_total, &vec3::scale(&c1, vec3::dot(&c1, &g_c1_total))),
        T::one() / nu,
    );
    [g_u[0], g_u[1], g_u[2], g_w[0], g_w[1], g_w[2]]
}

/// Haar-uniform rotation from a normalized 4-vector of standard normals.
pub fn sample_uniform<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Rotation<T> {
    loop {
        let q = Quaternion::new(
            T::standard_normal(rng),
            T::standard_normal(rng),
            T::standard_normal(rng),
            T::standard_normal(rng),
        );
        let n = q.norm();
        if n > T::of(1e-6) {
            return quat_to_rotation(&Quaternion::new(q.a / n, q.b / n, q.c / n, q.d / n));
        }
    }
}

/// Uniform direction on the unit sphere.
pub fn sample_unit_vector<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Vec3<T> {
    loop {
        let v = [
            T::standard_normal(rng),
            T::standard_normal(rng),
            T::standard_normal(rng),
        ];
        let n = vec3::norm(&v);
        if n > T::of(1e-6) {
            return vec3::scale(&v, T::one() / n);
        }
    }
}

/// Rotation about the z axis.
pub fn rot_z<T: Real>(angle: T) -> Rotation<T> {
    expm(&TangentVector::new(T::zero(), T::zero(), angle))
}

/// Rotation about the y axis.
pub fn rot_y<T: Real>(angle: T) -> Rotation<T> {
    expm(&TangentVector::new(T::zero(), angle, T::zero()))
}

/// Rotation about the x axis.
pub fn rot_x<T: Real>(angle: T) -> Rotation<T> {
    expm(&TangentVector::new(angle, T::zero(), T::zero()))
}

/// Canonical-axis decomposition `R = Rz(azimuth) Ry(polar) Rz(tilt)`.
///
/// The canonical axis is `R e_z`, with `polar` its angle from `+z` and
/// `azimuth` its longitude. `tilt` is the residual rotation about that axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalAxis<T: Real = f64> {
    pub azimuth: T,
    pub polar: T,
    pub tilt: T,
}

pub fn canonical_axis<T: Real>(r: &Rotation<T>) -> CanonicalAxis<T> {
    let axis = r.column(2);
    let polar = axis[2].max(-T::one()).min(T::one()).acos();
    let azimuth = if axis[0] == T::zero() && axis[1] == T::zero() {
        T::zero()
    } else {
        axis[1].atan2(axis[0])
    };
    let align = rot_z(azimuth).compose(&rot_y(polar));
    let rest = align.between(r);
    let tilt = rest.m[1][0].atan2(rest.m[0][0]);
    CanonicalAxis {
        azimuth,
        polar,
        tilt,
    }
}

pub fn from_canonical_axis<T: Real>(c: &CanonicalAxis<T>) -> Rotation<T> {
    rot_z(c.azimuth)
        .compose(&rot_y(c.polar))
        .compose(&rot_z(c.tilt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mat_close(a: &Mat3<f64>, b: &Mat3<f64>, tol: f64) -> bool {
        vec3::max_abs_diff(a, b) <= tol
    }

    #[test]
    fn hat_basics() {
        let z = hat(&TangentVector::<f64>::zero());
        assert_eq!(z, [[0.0; 3]; 3]);
        let k = hat(&TangentVector::new(0.0, 0.0, 1.0));
        assert_eq!(k, [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let v = TangentVector::new(0.3, -1.2, 2.0);
        let w = [0.7, 0.1, -0.4];
        let hv = hat(&v);
        let lhs = vec3::matvec(&hv, &w);
        let rhs = vec3::cross(&v.0, &w);
        for i in 0..3 {
            assert_abs_diff_eq!(lhs[i], rhs[i], epsilon = 1e-15);
            for j in 0..3 {
                assert_eq!(hv[i][j], -hv[j][i]);
            }
        }
    }

    #[test]
    fn vee_round_trip_and_errors() {
        let v = TangentVector::new(1.0, 2.0, 3.0);
        assert_eq!(vee(&hat(&v)).unwrap(), v);
        assert_eq!(vee(&[[0.0f64; 3]; 3]).unwrap(), TangentVector::zero());
        let sym = [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(vee(&sym), Err(Error::NotSkew { .. })));
    }

    #[test]
    fn expm_quarter_turn() {
        let r = expm(&TangentVector::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let want = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(mat_close(r.matrix(), &want, 1e-15));
        assert_eq!(expm(&TangentVector::<f64>::zero()), Rotation::identity());
    }

    #[test]
    fn logm_edges() {
        assert_eq!(Rotation::<f64>::identity().log(), TangentVector::zero());
        let pi = std::f64::consts::PI;
        let rx = [[1.0f64, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
        let v = logm_matrix(&rx).unwrap();
        assert_abs_diff_eq!(v.0[0].abs(), pi, epsilon = 1e-12);
        assert_abs_diff_eq!(v.0[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.0[2], 0.0, epsilon = 1e-12);
        let v = TangentVector::new(0.3, -0.1, 0.2);
        let back = expm(&v).log();
        for i in 0..3 {
            assert_abs_diff_eq!(back.0[i], v.0[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn logm_near_pi_and_near_zero() {
        let axis = [0.48, -0.6, 0.64];
        for theta in [1e-9, 1e-6, 5e-5, 2e-4, 3.14, 3.1415, 3.141592] {
            let v = TangentVector(vec3::scale(&axis, theta));
            let back = expm(&v).log();
            for i in 0..3 {
                assert_abs_diff_eq!(back.0[i], v.0[i], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn logm_rejects_non_rotation() {
        let m = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(logm_matrix(&m), Err(Error::NotRotation { .. })));
        let refl = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            Rotation::from_matrix(refl),
            Err(Error::NotRotation { .. })
        ));
    }

    #[test]
    fn compose_inverse_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r: Rotation = sample_uniform(&mut rng);
        assert_eq!(Rotation::identity().compose(&r), r);
        let e = r.compose(&r.inverse());
        assert!(mat_close(e.matrix(), &vec3::identity(), 1e-9));
        let v = TangentVector::new(0.4, 0.5, -0.3);
        assert!(mat_close(
            expm(&v).inverse().matrix(),
            expm(&-v).matrix(),
            1e-15
        ));
    }

    #[test]
    fn geodesic_angle_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r: Rotation = sample_uniform(&mut rng);
        assert_abs_diff_eq!(geodesic_angle(&r, &r), 0.0, epsilon = 1e-12);
        for theta in [-3.0, -1.0, 0.0, 0.5, 2.0, std::f64::consts::PI] {
            let g = geodesic_angle(&Rotation::identity(), &rot_z(theta));
            assert_abs_diff_eq!(g, f64::abs(theta), epsilon = 1e-12);
        }
    }

    #[test]
    fn quaternion_conventions() {
        let q = to_quaternion(&Rotation::<f64>::identity());
        assert_eq!(q, Quaternion::identity());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r: Rotation = sample_uniform(&mut rng);
        let q = to_quaternion(&r);
        assert!(q.a >= 0.0);
        let r1 = from_quaternion(&q).unwrap();
        let r2 = from_quaternion(&q.neg()).unwrap();
        assert!(mat_close(r1.matrix(), r2.matrix(), 1e-15));
        assert!(mat_close(r1.matrix(), r.matrix(), 1e-12));
        let bad = Quaternion::new(1.1, 0.0, 0.0, 0.0);
        assert!(matches!(
            from_quaternion(&bad),
            Err(Error::NonUnitQuaternion { .. })
        ));
    }

    #[test]
    fn hamilton_basis() {
        let i = Quaternion::new(0.0, 1.0, 0.0, 0.0);
        let j = Quaternion::new(0.0, 0.0, 1.0, 0.0);
        let k = Quaternion::new(0.0, 0.0, 0.0, 1.0);
        assert_eq!(quat_product(&i, &j), k);
        let q = Quaternion::new(0.5, 0.5, -0.5, 0.5);
        assert_eq!(quat_product(&q, &Quaternion::identity()), q);
        let e = quat_product(&q, &quat_conj(&q));
        assert_abs_diff_eq!(e.a, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.b, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn quat_power_cases() {
        let q = to_quaternion(&expm(&TangentVector::new(0.3, 0.9, -0.2)));
        assert_eq!(quat_power(&q, 0.0), Quaternion::identity());
        let q2 = quat_power(&q, 2.0);
        let qq = quat_product(&q, &q);
        for (x, y) in q2.to_array().iter().zip(qq.to_array()) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
        }
        let h = quat_power(&q, 0.5);
        let hh = quat_product(&h, &h);
        for (x, y) in hh.to_array().iter().zip(q.to_array()) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn vp_compose_limits() {
        let x = expm(&TangentVector::new(0.2, -0.7, 1.1));
        let d = expm(&TangentVector::new(-1.0, 0.1, 0.4));
        assert_eq!(vp_compose(&x, &d, 1.0), x);
        let near = vp_compose(&x, &d, 1e-14);
        assert!(geodesic_angle(&near, &d) < 1e-6);
        let e = vp_compose(&Rotation::<f64>::identity(), &Rotation::identity(), 0.37);
        assert!(mat_close(e.matrix(), &vec3::identity(), 1e-15));
        let c = vp_compose(&x, &Rotation::identity(), 0.49);
        assert_abs_diff_eq!(c.angle(), 0.7 * x.angle(), epsilon = 1e-12);
    }

    #[test]
    fn sixd_cases() {
        let s = SixD::new([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        assert_eq!(from_sixd(&s).unwrap(), Rotation::identity());
        let s = SixD::new([2.0, 0.0, 0.0], [0.0, 3.0, 0.0]);
        assert_eq!(from_sixd(&s).unwrap(), Rotation::identity());
        let s = SixD::new([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]);
        assert!(matches!(from_sixd(&s), Err(Error::DegenerateFrame)));
        let s = SixD::new([0.0, 0.0, 0.0], [2.0, 4.0, 6.0]);
        assert!(matches!(from_sixd(&s), Err(Error::DegenerateFrame)));
    }

    #[test]
    fn sixd_backward_matches_finite_differences() {
        let s = SixD::new([0.3, -1.2, 0.5], [0.9, 0.4, -0.7]);
        let g = [[0.3, -0.2, 0.5], [1.1, 0.0, -0.4], [0.2, 0.7, -0.9]];
        let loss = |s: &SixD<f64>| {
            let r = from_sixd(s).unwrap();
            let m = r.matrix();
            (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| g[i][j] * m[i][j])
                .sum::<f64>()
        };
        let analytic = from_sixd_backward(&s, &g);
        let h = 1e-6;
        for k in 0..6 {
            let mut raw = [s.u[0], s.u[1], s.u[2], s.w[0], s.w[1], s.w[2]];
            raw[k] += h;
            let lp = loss(&SixD::from_slice(&raw));
            raw[k] -= 2.0 * h;
            let lm = loss(&SixD::from_slice(&raw));
            let fd = (lp - lm) / (2.0 * h);
            assert_abs_diff_eq!(analytic[k], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn canonical_axis_identity_and_round_trip() {
        let c = canonical_axis(&Rotation::<f64>::identity());
        assert_eq!((c.azimuth, c.polar, c.tilt), (0.0, 0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let r: Rotation = sample_uniform(&mut rng);
            let back = from_canonical_axis(&canonical_axis(&r));
            assert!(mat_close(back.matrix(), r.matrix(), 1e-10));
        }
    }

    #[test]
    fn f32_instantiation() {
        let v = TangentVector::<f32>::new(0.3, -0.1, 0.2);
        let r = expm(&v);
        let (ortho, det) = r.residuals();
        assert!(ortho < 1e-6 && (det - 1.0).abs() < 1e-6);
        let back = r.log();
        for i in 0..3 {
            assert!((back.0[i] - v.0[i]).abs() < 1e-6);
        }
    }
}
