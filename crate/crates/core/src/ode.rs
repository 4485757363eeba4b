//! Fixed-step integration on SO(3): Heun-type RK-MK and a geodesic random walk.

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::so3::{expm, Rotation, TangentVector};

/// Strictly monotone time points; decreasing grids integrate backwards.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid<T: Real = f64> {
    t: Vec<T>,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t: Vec<T>) -> Result<Self> {
        if t.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "time grid needs at least 2 points, got {}",
                t.len()
            )));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "time grid has non-finite entries".into(),
            ));
        }
        let up = t[1] > t[0];
        let monotone = t
            .windows(2)
            .all(|w| if up { w[1] > w[0] } else { w[1] < w[0] });
        if !monotone {
            return Err(Error::InvalidArgument(
                "time grid must be strictly monotone".into(),
            ));
        }
        Ok(TimeGrid { t })
    }

    /// `n_steps + 1` equally spaced points from `t0` to `t1`.
    pub fn uniform(t0: T, t1: T, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
        }
        let h = (t1 - t0) / T::of(n_steps as f64);
        let mut t: Vec<T> = (0..n_steps).map(|k| t0 + h * T::of(k as f64)).collect();
        t.push(t1);
        Self::new(t)
    }

    /// Points equally spaced in `ln t`; both endpoints must be positive.
    pub fn geometric(t0: T, t1: T, n_steps: usize) -> Result<Self> {
        if !(t0 > T::zero() && t1 > T::zero()) {
            return Err(Error::InvalidArgument(
                "geometric grid endpoints must be positive".into(),
            ));
        }
        let g = Self::uniform(t0.ln(), t1.ln(), n_steps)?;
        let mut t: Vec<T> = g.t.iter().map(|v| v.exp()).collect();
        t[0] = t0;
        t[n_steps] = t1;
        Self::new(t)
    }

    pub fn times(&self) -> &[T] {
        &self.t
    }

    pub fn n_steps(&self) -> usize {
        self.t.len() - 1
    }

    pub fn is_forward(&self) -> bool {
        self.t[1] > self.t[0]
    }

    pub fn start(&self) -> T {
        self.t[0]
    }

    pub fn end(&self) -> T {
        self.t[self.t.len() - 1]
    }
}

/// A time-dependent tangent field `f(x, t)`.
pub trait VectorField<T: Real> {
    fn eval(&self, x: &Rotation<T>, t: T) -> TangentVector<T>;
}

impl<T: Real, F> VectorField<T> for F
where
    F: Fn(&Rotation<T>, T) -> TangentVector<T>,
{
    fn eval(&self, x: &Rotation<T>, t: T) -> TangentVector<T> {
        self(x, t)
    }
}

/// A field evaluated on many states at a shared time, e.g. a network.
pub trait BatchField<T: Real> {
    fn eval_batch(&self, xs: &[Rotation<T>], t: T) -> Result<Vec<TangentVector<T>>>;
}

/// Lifts a pointwise field to a [`BatchField`].
pub struct Pointwise<F>(pub F);

impl<T: Real, F: VectorField<T>> BatchField<T> for Pointwise<F> {
    fn eval_batch(&self, xs: &[Rotation<T>], t: T) -> Result<Vec<TangentVector<T>>> {
        Ok(xs.iter().map(|x| self.0.eval(x, t)).collect())
    }
}

/// Which side increments are applied on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Trivialization {
    /// `x_{n+1} = expm(y) x_n`.
    #[default]
    Left,
    /// `x_{n+1} = x_n expm(y)`; matches scores defined by right perturbation.
    Right,
}

impl Trivialization {
    #[inline]
    pub fn apply<T: Real>(self, x: &Rotation<T>, y: &TangentVector<T>) -> Rotation<T> {
        match self {
            Trivialization::Left => expm(y).compose(x),
            Trivialization::Right => x.compose(&expm(y)),
        }
    }
}

fn checked_increment<T: Real>(v: TangentVector<T>, h: T, t: T) -> Result<TangentVector<T>> {
    if !v.is_finite() {
        return Err(Error::NonFiniteField {
            t: t.to_f64_lossy(),
        });
    }
    let y = v.scale(h);
    let norm = y.norm();
    if norm > T::PI() {
        return Err(Error::StepTooLarge {
            norm: norm.to_f64_lossy(),
            t: t.to_f64_lossy(),
        });
    }
    Ok(y)
}

/// One Heun step from `t` to `t + h`.
pub fn heun_step<T: Real, F: VectorField<T> + ?Sized>(
    f: &F,
    x: &Rotation<T>,
    t: T,
    h: T,
    side: Trivialization,
) -> Result<Rotation<T>> {
    let half = T::of(0.5);
    let y1 = checked_increment(f.eval(x, t), h, t)?;
    let mid = side.apply(x, &y1.scale(half));
    let y2 = checked_increment(f.eval(&mid, t + half * h), h, t + half * h)?;
    Ok(side.apply(x, &y2))
}

/// Left-multiplicative Heun integration; returns every iterate including `x0`.
pub fn heun_integrate<T: Real, F: VectorField<T> + ?Sized>(
    f: &F,
    x0: &Rotation<T>,
    grid: &TimeGrid<T>,
) -> Result<Vec<Rotation<T>>> {
    heun_integrate_with(f, x0, grid, Trivialization::Left)
}

pub fn heun_integrate_with<T: Real, F: VectorField<T> + ?Sized>(
    f: &F,
    x0: &Rotation<T>,
    grid: &TimeGrid<T>,
    side: Trivialization,
) -> Result<Vec<Rotation<T>>> {
    let mut traj = Vec::with_capacity(grid.t.len());
    traj.push(*x0);
    let mut x = *x0;
    for w in grid.t.windows(2) {
        x = heun_step(f, &x, w[0], w[1] - w[0], side)?;
        traj.push(x);
    }
    Ok(traj)
}

/// Integrates a batch of initial states and returns the terminal states.
pub fn heun_integrate_batch<T: Real, F: BatchField<T> + ?Sized>(
    f: &F,
    x0: &[Rotation<T>],
    grid: &TimeGrid<T>,
    side: Trivialization,
) -> Result<Vec<Rotation<T>>> {
    let half = T::of(0.5);
    let mut xs = x0.to_vec();
    for w in grid.t.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let v1 = f.eval_batch(&xs, t)?;
        check_len(v1.len(), xs.len())?;
        let mut y1 = Vec::with_capacity(xs.len());
        for v in v1 {
            y1.push(checked_increment(v, h, t)?);
        }
        let mids: Vec<Rotation<T>> = xs
            .iter()
            .zip(&y1)
            .map(|(x, y)| side.apply(x, &y.scale(half)))
            .collect();
        let tm = t + half * h;
        let v2 = f.eval_batch(&mids, tm)?;
        check_len(v2.len(), xs.len())?;
        for (x, v) in xs.iter_mut().zip(v2) {
            let y2 = checked_increment(v, h, tm)?;
            *x = side.apply(x, &y2);
        }
    }
    Ok(xs)
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::ShapeMismatch { expected, got });
    }
    Ok(())
}

/// Euler-Maruyama on the group: `x <- expm(h f + sqrt(h) g xi) x`.
pub fn geodesic_random_walk<T, F, G, R>(
    f: &F,
    g: G,
    x0: &Rotation<T>,
    grid: &TimeGrid<T>,
    rng: &mut R,
) -> Result<Rotation<T>>
where
    T: Real,
    F: VectorField<T> + ?Sized,
    G: Fn(T) -> T,
    R: Rng + ?Sized,
{
    if !grid.is_forward() {
        return Err(Error::InvalidArgument(
            "random walk needs a forward time grid".into(),
        ));
    }
    let mut x = *x0;
    for w in grid.t.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let drift = f.eval(&x, t);
        if !drift.is_finite() {
            return Err(Error::NonFiniteField {
                t: t.to_f64_lossy(),
            });
        }
        let s = h.sqrt() * g(t);
        let xi = TangentVector::new(
            T::standard_normal(rng),
            T::standard_normal(rng),
            T::standard_normal(rng),
        );
        x = expm(&(drift.scale(h) + xi.scale(s))).compose(&x);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::{geodesic_angle, rot_z, sample_uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(seed: u64) -> Rotation {
        sample_uniform(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0, 0.5]).is_err());
        assert!(TimeGrid::<f64>::uniform(0.0, 1.0, 0).is_err());
        let g = TimeGrid::uniform(1.0, 0.0, 4).unwrap();
        assert!(!g.is_forward());
        assert_eq!(g.n_steps(), 4);
        assert_eq!(g.end(), 0.0);
        let geo = TimeGrid::geometric(2.0, 1e-3, 10).unwrap();
        assert_eq!(geo.start(), 2.0);
        assert_eq!(geo.end(), 1e-3);
    }

    #[test]
    fn constant_field_is_exact() {
        let x0 = random_rotation(1);
        let c = TangentVector::new(0.3, -0.2, 0.5);
        let f = move |_: &Rotation, _: f64| c;
        let grid = TimeGrid::uniform(0.0, 1.0, 7).unwrap();
        let traj = heun_integrate(&f, &x0, &grid).unwrap();
        let one = expm(&c.scale(1.0 / 7.0)).compose(&x0);
        assert!(geodesic_angle(&traj[1], &one) < 1e-12);
        let all = expm(&c).compose(&x0);
        assert!(geodesic_angle(&traj[7], &all) < 1e-12);
    }

    #[test]
    fn zero_field_is_constant() {
        let x0 = random_rotation(2);
        let f = |_: &Rotation, _: f64| TangentVector::zero();
        let traj = heun_integrate(&f, &x0, &TimeGrid::uniform(0.0, 3.0, 5).unwrap()).unwrap();
        assert!(traj.iter().all(|x| *x == x0));
    }

    #[test]
    fn second_order_convergence() {
        let t_end = 2.0f64;
        let f = |_: &Rotation, t: f64| TangentVector::new(0.0, 0.0, t.cos());
        let exact = rot_z(t_end.sin());
        let err = |n: usize| {
            let g = TimeGrid::uniform(0.0, t_end, n).unwrap();
            let x = heun_integrate(&f, &Rotation::identity(), &g).unwrap();
            geodesic_angle(x.last().unwrap(), &exact)
        };
        for n in [10, 20, 40] {
            let ratio = err(n) / err(2 * n);
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn state_dependent_field_converges_at_second_order() {
        // rotation toward a fixed target along the geodesic
        let target = random_rotation(3);
        let f = move |x: &Rotation, t: f64| x.between(&target).log().scale(0.5 + t);
        for side in [Trivialization::Left, Trivialization::Right] {
            let fine = {
                let g = TimeGrid::uniform(0.0, 1.0, 2000).unwrap();
                *heun_integrate_with(&f, &Rotation::identity(), &g, side)
                    .unwrap()
                    .last()
                    .unwrap()
            };
            let err = |n: usize| {
                let g = TimeGrid::uniform(0.0, 1.0, n).unwrap();
                let x = heun_integrate_with(&f, &Rotation::identity(), &g, side).unwrap();
                geodesic_angle(x.last().unwrap(), &fine)
            };
            let ratio = err(20) / err(40);
            assert!((3.5..=4.5).contains(&ratio), "{side:?} ratio {ratio}");
        }
    }

    #[test]
    fn iterates_stay_on_the_group() {
        let f = |x: &Rotation, t: f64| {
            let m = x.matrix();
            TangentVector::new(5.0 * m[0][1] + t, -3.0 * m[2][2], 4.0 * m[1][0])
        };
        let traj = heun_integrate(
            &f,
            &random_rotation(4),
            &TimeGrid::uniform(0.0, 5.0, 20).unwrap(),
        )
        .unwrap();
        for x in traj {
            let (o, d) = x.residuals();
            assert!(o < 1e-8 && (d - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn state_independent_field_acts_by_right_factor() {
        let f = |_: &Rotation, t: f64| TangentVector::new(t, 1.0 - t, 0.3);
        let g = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let a = *heun_integrate(&f, &Rotation::identity(), &g)
            .unwrap()
            .last()
            .unwrap();
        let x0 = random_rotation(5);
        let b = *heun_integrate(&f, &x0, &g).unwrap().last().unwrap();
        assert!(geodesic_angle(&b, &a.compose(&x0)) < 1e-12);
    }

    #[test]
    fn errors_on_bad_fields() {
        let nan = |_: &Rotation, _: f64| TangentVector::new(f64::NAN, 0.0, 0.0);
        let g = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
        assert!(matches!(
            heun_integrate(&nan, &Rotation::identity(), &g),
            Err(Error::NonFiniteField { .. })
        ));
        let big = |_: &Rotation, _: f64| TangentVector::new(100.0, 0.0, 0.0);
        assert!(matches!(
            heun_integrate(&big, &Rotation::identity(), &g),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn batch_matches_pointwise() {
        let f = |x: &Rotation, t: f64| x.log().scale(-t) + TangentVector::new(0.1, 0.0, 0.0);
        let g = TimeGrid::uniform(1.0, 0.1, 13).unwrap();
        let x0: Vec<Rotation> = (0..5).map(random_rotation).collect();
        let batch = heun_integrate_batch(&Pointwise(f), &x0, &g, Trivialization::Right).unwrap();
        for (x, b) in x0.iter().zip(&batch) {
            let single = heun_integrate_with(&f, x, &g, Trivialization::Right).unwrap();
            assert!(geodesic_angle(single.last().unwrap(), b) < 1e-12);
        }
    }

    #[test]
    fn random_walk_without_noise_or_drift_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x0 = random_rotation(7);
        let zero = |_: &Rotation, _: f64| TangentVector::zero();
        let g = TimeGrid::uniform(0.0, 1.0, 50).unwrap();
        let x = geodesic_random_walk(&zero, |_| 0.0, &x0, &g, &mut rng).unwrap();
        assert!(geodesic_angle(&x, &x0) < 1e-14);
    }
}
