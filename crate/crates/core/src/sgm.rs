//! Score-based generative model: heat-kernel noising, denoising score
//! matching, and probability-flow sampling.
//!
//! Noise at scale `eps` is `IG(x, eps)`, i.e. Brownian motion run until the
//! heat equation `dp/deps = Laplacian(p)` has advanced by `eps`. The
//! matching deterministic flow is `dx/deps = -score(x, eps)`; with
//! `eps(t) = t` the sampler integrates `dx/dt = -eps'(t) s(x, eps(t))` from
//! `t_max` down to `eps_min`, applying increments on the right to match the
//! right-perturbation definition of the score.

use ndarray::Array2;
use rand::Rng;

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::igso3::{self, snap_eps, IgParams};
use crate::nn::{featurize_batch, AdamConfig, AdamState, Mlp, BASE_FEATURES};
use crate::ode::{heun_integrate_batch, BatchField, TimeGrid, Trivialization};
use crate::real::Real;
use crate::so3::{sample_uniform, Rotation, TangentVector};
use crate::train::Trainer;

/// Attempts per item when a noisy draw lands on the cut locus of its mean.
pub const MAX_RETRIES: usize = 10;

/// Noise schedule `eps(t) = max(t, eps_min)` on `[0, t_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VeSchedule {
    pub t_max: f64,
    pub eps_min: f64,
    /// Training scales are `|N(0, sigma_eps^2)|` clamped to `[eps_min, t_max]`.
    pub sigma_eps: f64,
}

impl Default for VeSchedule {
    fn default() -> Self {
        VeSchedule {
            t_max: 3.0,
            eps_min: 1e-3,
            sigma_eps: 0.8,
        }
    }
}

impl VeSchedule {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.t_max) && pos(self.eps_min) && pos(self.sigma_eps)) {
            return Err(Error::InvalidArgument(format!(
                "schedule constants must be positive and finite: {self:?}"
            )));
        }
        if self.eps_min >= self.t_max {
            return Err(Error::InvalidArgument(format!(
                "eps_min ({}) must be below t_max ({})",
                self.eps_min, self.t_max
            )));
        }
        Ok(())
    }

    pub fn eps_of_t(&self, t: f64) -> f64 {
        t.max(self.eps_min)
    }

    pub fn deps_dt(&self, _t: f64) -> f64 {
        1.0
    }

    /// A training noise scale, snapped to the shared CDF table resolution.
    pub fn draw_eps<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let z = T::standard_normal(rng).to_f64_lossy();
        let e = (self.sigma_eps * z).abs().clamp(self.eps_min, self.t_max);
        snap_eps(T::of(e))
    }

    /// Reverse grid from `t_max` to `eps_min`, geometric in time.
    pub fn sampling_grid<T: Real>(&self, n_steps: usize) -> Result<TimeGrid<T>> {
        TimeGrid::geometric(T::of(self.t_max), T::of(self.eps_min), n_steps)
    }
}

/// Anything that can estimate the score at given scales.
pub trait ScoreFn<T: Real> {
    fn context_dim(&self) -> usize {
        0
    }

    /// One score per rotation; `contexts` is empty when the context dimension is 0.
    fn score_batch(
        &self,
        xs: &[Rotation<T>],
        eps: &[T],
        contexts: &[&[T]],
    ) -> Result<Vec<TangentVector<T>>>;
}

/// The score of the Haar distribution.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroScore;

impl<T: Real> ScoreFn<T> for ZeroScore {
    fn score_batch(
        &self,
        xs: &[Rotation<T>],
        _: &[T],
        _: &[&[T]],
    ) -> Result<Vec<TangentVector<T>>> {
        Ok(vec![TangentVector::zero(); xs.len()])
    }
}

/// Exact score of a noised mixture `sum_k w_k IG(mu_k, eps0_k)`.
#[derive(Clone, Debug)]
pub struct IgMixtureScore<T: Real = f64> {
    /// `(mu_k, eps0_k, w_k)`.
    pub components: Vec<(Rotation<T>, T, T)>,
}

impl<T: Real> IgMixtureScore<T> {
    pub fn single(mu: Rotation<T>, eps0: T) -> Self {
        IgMixtureScore {
            components: vec![(mu, eps0, T::one())],
        }
    }

    fn score_one(&self, x: &Rotation<T>, eps: T) -> Result<TangentVector<T>> {
        let mut logs = Vec::with_capacity(self.components.len());
        let mut scores = Vec::with_capacity(self.components.len());
        for (mu, e0, w) in &self.components {
            let p = IgParams::new(*mu, *e0 + eps)?;
            logs.push(w.ln() + igso3::log_density(x, &p)?);
            // the density is flat across the antipode, so its gradient vanishes there
            scores.push(match igso3::score(x, &p) {
                Ok(s) => s,
                Err(Error::NearCutLocus { .. }) => TangentVector::zero(),
                Err(e) => return Err(e),
            });
        }
        let top = logs.iter().copied().fold(T::neg_infinity(), T::max);
        let weights: Vec<T> = logs.iter().map(|l| (*l - top).exp()).collect();
        let total: T = weights.iter().copied().sum();
        let mut out = TangentVector::zero();
        for (w, s) in weights.iter().zip(scores) {
            out = out + s.scale(*w / total);
        }
        Ok(out)
    }
}

impl<T: Real> ScoreFn<T> for IgMixtureScore<T> {
    fn score_batch(
        &self,
        xs: &[Rotation<T>],
        eps: &[T],
        _: &[&[T]],
    ) -> Result<Vec<TangentVector<T>>> {
        xs.iter()
            .zip(eps)
            .map(|(x, e)| self.score_one(x, *e))
            .collect()
    }
}

/// Network score estimate `s(x, eps) = net(features) / sqrt(eps)`.
///
/// The `1/sqrt(eps)` factor matches the scale of the target score, so the
/// network regresses an order-one quantity at every noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreModel<T: Real = f64> {
    pub net: Mlp<T>,
    pub schedule: VeSchedule,
    pub context_dim: usize,
}

impl<T: Real> ScoreModel<T> {
    pub fn new<R: Rng + ?Sized>(
        hidden: &[usize],
        schedule: VeSchedule,
        context_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        schedule.validate()?;
        let mut widths = vec![BASE_FEATURES + context_dim];
        widths.extend_from_slice(hidden);
        widths.push(3);
        let net = Mlp::init(&widths, rng)?;
        Ok(ScoreModel {
            net,
            schedule,
            context_dim,
        })
    }

    pub fn from_parts(net: Mlp<T>, schedule: VeSchedule, context_dim: usize) -> Result<Self> {
        schedule.validate()?;
        if net.input_dim() != BASE_FEATURES + context_dim {
            return Err(Error::ShapeMismatch {
                expected: BASE_FEATURES + context_dim,
                got: net.input_dim(),
            });
        }
        if net.output_dim() != 3 {
            return Err(Error::ShapeMismatch {
                expected: 3,
                got: net.output_dim(),
            });
        }
        Ok(ScoreModel {
            net,
            schedule,
            context_dim,
        })
    }
}

impl<T: Real> ScoreFn<T> for ScoreModel<T> {
    fn context_dim(&self) -> usize {
        self.context_dim
    }

    fn score_batch(
        &self,
        xs: &[Rotation<T>],
        eps: &[T],
        contexts: &[&[T]],
    ) -> Result<Vec<TangentVector<T>>> {
        let feats = featurize_batch(xs, eps, contexts, self.context_dim)?;
        let out = self.net.predict(feats.view())?;
        Ok(out
            .rows()
            .into_iter()
            .zip(eps)
            .map(|(r, e)| {
                let s = T::one() / e.sqrt();
                TangentVector::new(r[0] * s, r[1] * s, r[2] * s)
            })
            .collect())
    }
}

/// Noisy inputs, scales and regression targets for one DSM batch.
#[derive(Clone, Debug)]
pub struct DsmDraw<T: Real> {
    pub noisy: Vec<Rotation<T>>,
    pub eps: Vec<T>,
    pub targets: Vec<TangentVector<T>>,
}

/// For each clean `x`: draw a scale, a noisy `x~ ~ IG(x, eps)` and the
/// conditional score at `x~`.
pub fn draw_dsm<T: Real, R: Rng + ?Sized>(
    schedule: &VeSchedule,
    xs: &[Rotation<T>],
    rng: &mut R,
) -> Result<DsmDraw<T>> {
    let mut d = DsmDraw {
        noisy: Vec::with_capacity(xs.len()),
        eps: Vec::with_capacity(xs.len()),
        targets: Vec::with_capacity(xs.len()),
    };
    for x in xs {
        let e = schedule.draw_eps::<T, _>(rng);
        let p = IgParams::new(*x, e)?;
        let mut done = false;
        for _ in 0..MAX_RETRIES {
            let noisy = igso3::sample(&p, rng)?;
            match igso3::score(&noisy, &p) {
                Ok(s) => {
                    d.noisy.push(noisy);
                    d.eps.push(e);
                    d.targets.push(s);
                    done = true;
                    break;
                }
                Err(Error::NearCutLocus { .. }) => continue,
                Err(err) => return Err(err),
            }
        }
        if !done {
            return Err(Error::RetriesExhausted(format!(
                "{MAX_RETRIES} noisy draws at eps = {e} all landed on the cut locus"
            )));
        }
    }
    Ok(d)
}

/// `mean_i eps_i |s(x~_i, eps_i) - target_i|^2` for any score estimate.
pub fn dsm_loss_of<T: Real, S: ScoreFn<T> + ?Sized>(
    score: &S,
    draw: &DsmDraw<T>,
    contexts: &[&[T]],
) -> Result<T> {
    let s = score.score_batch(&draw.noisy, &draw.eps, contexts)?;
    let n = T::of(s.len() as f64);
    Ok(s.iter()
        .zip(&draw.targets)
        .zip(&draw.eps)
        .map(|((a, b), e)| {
            let d = *a - *b;
            *e * d.dot(&d)
        })
        .sum::<T>()
        / n)
}

/// DSM loss and parameter gradients of a network model.
pub fn dsm_loss<T: Real, R: Rng + ?Sized>(
    model: &ScoreModel<T>,
    xs: &[Rotation<T>],
    contexts: &[&[T]],
    rng: &mut R,
) -> Result<(T, Mlp<T>)> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let draw = draw_dsm(&model.schedule, xs, rng)?;
    let feats = featurize_batch(&draw.noisy, &draw.eps, contexts, model.context_dim)?;
    let (out, cache) = model.net.forward_batch(feats.view())?;
    let n = T::of(xs.len() as f64);
    let two = T::of(2.0);
    let mut up = Array2::zeros((xs.len(), 3));
    let mut loss = T::zero();
    for i in 0..xs.len() {
        let se = draw.eps[i].sqrt();
        for k in 0..3 {
            let d = out[[i, k]] / se - draw.targets[i].0[k];
            loss += draw.eps[i] * d * d;
            up[[i, k]] = two * se * d / n;
        }
    }
    let (grads, _) = model.net.backward(&cache, up.view())?;
    Ok((loss / n, grads))
}

pub(crate) fn gather<'a, T: Real>(
    data: &'a SampleSet<T>,
    idx: &[usize],
) -> (Vec<Rotation<T>>, Vec<&'a [T]>) {
    let xs = idx.iter().map(|&i| data.rotations[i]).collect();
    let ctx = if data.context_dim() == 0 {
        Vec::new()
    } else {
        idx.iter().map(|&i| data.context(i)).collect()
    };
    (xs, ctx)
}

/// Score model plus optimizer state.
#[derive(Clone, Debug)]
pub struct SgmTrainer<T: Real = f64> {
    pub model: ScoreModel<T>,
    pub adam: AdamState<T>,
}

impl<T: Real> SgmTrainer<T> {
    pub fn new(model: ScoreModel<T>, adam: AdamConfig) -> Result<Self> {
        adam.validate()?;
        let adam = AdamState::new(&model.net, adam);
        Ok(SgmTrainer { model, adam })
    }
}

impl<T: Real> Trainer for SgmTrainer<T> {
    type Scalar = T;

    fn steps_done(&self) -> u64 {
        self.adam.step
    }

    fn train_step<R: Rng + ?Sized>(
        &mut self,
        data: &SampleSet<T>,
        batch: &[usize],
        rng: &mut R,
    ) -> Result<f64> {
        if data.context_dim() != self.model.context_dim {
            return Err(Error::ShapeMismatch {
                expected: self.model.context_dim,
                got: data.context_dim(),
            });
        }
        let (xs, ctx) = gather(data, batch);
        let (loss, grads) = dsm_loss(&self.model, &xs, &ctx, rng)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.adam.step + 1,
            });
        }
        self.adam.step(&mut self.model.net, &grads)?;
        Ok(loss.to_f64_lossy())
    }
}

/// The probability-flow field at model time `t`.
struct Flow<'a, T: Real, S: ?Sized> {
    score: &'a S,
    schedule: &'a VeSchedule,
    context: &'a [T],
}

impl<T: Real, S: ScoreFn<T> + ?Sized> BatchField<T> for Flow<'_, T, S> {
    fn eval_batch(&self, xs: &[Rotation<T>], t: T) -> Result<Vec<TangentVector<T>>> {
        let tf = t.to_f64_lossy();
        let eps = vec![T::of(self.schedule.eps_of_t(tf)); xs.len()];
        let ctx: Vec<&[T]> = if self.context.is_empty() {
            Vec::new()
        } else {
            vec![self.context; xs.len()]
        };
        let rate = T::of(-self.schedule.deps_dt(tf));
        Ok(self
            .score
            .score_batch(xs, &eps, &ctx)?
            .into_iter()
            .map(|s| s.scale(rate))
            .collect())
    }
}

fn check_context<T: Real, S: ScoreFn<T> + ?Sized>(score: &S, context: &[T]) -> Result<()> {
    if context.len() != score.context_dim() {
        return Err(Error::ShapeMismatch {
            expected: score.context_dim(),
            got: context.len(),
        });
    }
    Ok(())
}

/// Draws `n` Haar-uniform states at `t_max` and transports them to `eps_min`.
pub fn sample<T, S, R>(
    score: &S,
    schedule: &VeSchedule,
    n: usize,
    context: &[T],
    n_steps: usize,
    rng: &mut R,
) -> Result<SampleSet<T>>
where
    T: Real,
    S: ScoreFn<T> + ?Sized,
    R: Rng + ?Sized,
{
    schedule.validate()?;
    check_context(score, context)?;
    let x0: Vec<Rotation<T>> = (0..n).map(|_| sample_uniform(rng)).collect();
    let grid = schedule.sampling_grid::<T>(n_steps)?;
    let flow = Flow {
        score,
        schedule,
        context,
    };
    let xs = heun_integrate_batch(&flow, &x0, &grid, Trivialization::Right)?;
    let set = if context.is_empty() {
        SampleSet::new(xs, "sgm")
    } else {
        let ctx = context.repeat(n);
        SampleSet::with_contexts(xs, ctx, context.len(), "sgm")?
    };
    Ok(set.with_provenance(0, n_steps as u32))
}

/// Step for the central differences in the divergence.
#[cfg(feature = "likelihood")]
pub const DIVERGENCE_STEP: f64 = 1e-4;

#[cfg(feature = "likelihood")]
fn divergence<T: Real, F: BatchField<T>>(f: &F, xs: &[Rotation<T>], t: T) -> Result<Vec<T>> {
    use crate::so3::expm;
    let h = T::of(DIVERGENCE_STEP);
    let mut div = vec![T::zero(); xs.len()];
    for i in 0..3 {
        let mut e = [T::zero(); 3];
        e[i] = h;
        let up = expm(&TangentVector(e));
        e[i] = -h;
        let dn = expm(&TangentVector(e));
        let plus: Vec<Rotation<T>> = xs.iter().map(|x| x.compose(&up)).collect();
        let minus: Vec<Rotation<T>> = xs.iter().map(|x| x.compose(&dn)).collect();
        let vp = f.eval_batch(&plus, t)?;
        let vm = f.eval_batch(&minus, t)?;
        for k in 0..xs.len() {
            div[k] += (vp[k].0[i] - vm[k].0[i]) / (h + h);
        }
    }
    Ok(div)
}

/// Model log-density (relative to Haar) of each `x`, by integrating the flow
/// forward from `eps_min` to `t_max` and accumulating its divergence.
///
/// Left-invariant frame fields are divergence-free for the Haar measure, so
/// the divergence of `x hat(v(x))` is `sum_i X_i v_i`. The terminal density
/// is taken to be uniform.
#[cfg(feature = "likelihood")]
pub fn log_likelihood_batch<T, S>(
    score: &S,
    schedule: &VeSchedule,
    xs: &[Rotation<T>],
    context: &[T],
    n_steps: usize,
) -> Result<Vec<T>>
where
    T: Real,
    S: ScoreFn<T> + ?Sized,
{
    schedule.validate()?;
    check_context(score, context)?;
    let grid = TimeGrid::geometric(T::of(schedule.eps_min), T::of(schedule.t_max), n_steps)?;
    let flow = Flow {
        score,
        schedule,
        context,
    };
    let half = T::of(0.5);
    let side = Trivialization::Right;
    let mut x = xs.to_vec();
    let mut acc = vec![T::zero(); xs.len()];
    for w in grid.times().windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let v1 = flow.eval_batch(&x, t)?;
        let mid: Vec<Rotation<T>> = x
            .iter()
            .zip(&v1)
            .map(|(x, v)| side.apply(x, &v.scale(half * h)))
            .collect();
        let tm = t + half * h;
        let div = divergence(&flow, &mid, tm)?;
        let v2 = flow.eval_batch(&mid, tm)?;
        for k in 0..x.len() {
            if !v2[k].is_finite() || !div[k].is_finite() {
                return Err(Error::NonFiniteField {
                    t: tm.to_f64_lossy(),
                });
            }
            acc[k] += h * div[k];
            x[k] = side.apply(&x[k], &v2[k].scale(h));
        }
    }
    Ok(acc)
}

#[cfg(feature = "likelihood")]
pub fn log_likelihood<T, S>(
    score: &S,
    schedule: &VeSchedule,
    x: &Rotation<T>,
    context: &[T],
    n_steps: usize,
) -> Result<T>
where
    T: Real,
    S: ScoreFn<T> + ?Sized,
{
    Ok(log_likelihood_batch(score, schedule, std::slice::from_ref(x), context, n_steps)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::geodesic_angle;
    use crate::train::{run_training, TrainConfig, TrainEvent};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn schedule_validation() {
        assert!(VeSchedule::default().validate().is_ok());
        let bad = VeSchedule {
            eps_min: 5.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let s = VeSchedule::default();
        let mut r = rng(0);
        for _ in 0..1000 {
            let e: f64 = s.draw_eps(&mut r);
            assert!(e >= s.eps_min * 0.999 && e <= s.t_max * 1.001);
        }
    }

    #[test]
    fn oracle_loss_is_zero_for_point_mass() {
        // data = delta at I, so the marginal score equals the conditional one
        let xs = vec![Rotation::<f64>::identity(); 512];
        let draw = draw_dsm(&VeSchedule::default(), &xs, &mut rng(1)).unwrap();
        let oracle = IgMixtureScore::single(Rotation::identity(), 0.0);
        let loss = dsm_loss_of(&oracle, &draw, &[]).unwrap();
        assert!(loss < 1e-12, "{loss}");
    }

    #[test]
    fn dsm_loss_is_deterministic() {
        let model =
            ScoreModel::<f64>::new(&[16, 16], VeSchedule::default(), 0, &mut rng(2)).unwrap();
        let xs = vec![sample_uniform(&mut rng(3))];
        let (a, ga) = dsm_loss(&model, &xs, &[], &mut rng(4)).unwrap();
        let (b, gb) = dsm_loss(&model, &xs, &[], &mut rng(4)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(ga, gb);
    }

    #[test]
    fn dsm_gradient_matches_finite_differences() {
        let model = ScoreModel::<f64>::new(&[6], VeSchedule::default(), 1, &mut rng(5)).unwrap();
        let xs: Vec<Rotation> = (0..4).map(|i| sample_uniform(&mut rng(10 + i))).collect();
        let ctx: Vec<&[f64]> = vec![&[1.0], &[0.0], &[1.0], &[0.0]];
        let (_, g) = dsm_loss(&model, &xs, &ctx, &mut rng(6)).unwrap();
        let flat = model.net.to_flat();
        let gflat = g.to_flat();
        let h = 1e-6;
        for k in (0..flat.len()).step_by(3) {
            let mut m = model.clone();
            let mut f = flat.clone();
            f[k] += h;
            m.net.set_flat(&f).unwrap();
            let up = dsm_loss(&m, &xs, &ctx, &mut rng(6)).unwrap().0;
            f[k] -= 2.0 * h;
            m.net.set_flat(&f).unwrap();
            let dn = dsm_loss(&m, &xs, &ctx, &mut rng(6)).unwrap().0;
            let fd = (up - dn) / (2.0 * h);
            assert!(
                (fd - gflat[k]).abs() <= 1e-5 * fd.abs().max(1e-2),
                "{k}: {fd} {}",
                gflat[k]
            );
        }
    }

    #[test]
    fn zero_score_keeps_haar_states() {
        let s = sample(
            &ZeroScore,
            &VeSchedule::default(),
            10,
            &[] as &[f64],
            20,
            &mut rng(7),
        )
        .unwrap();
        let mut r = rng(7);
        for x in &s.rotations {
            let x0: Rotation = sample_uniform(&mut r);
            assert!(geodesic_angle(x, &x0) < 1e-12);
        }
    }

    #[test]
    fn exact_score_flow_recovers_single_blob() {
        // under the exact noised score the flow maps p_T to p_eps_min
        let schedule = VeSchedule {
            t_max: 6.0,
            ..Default::default()
        };
        let eps0 = 0.1;
        let oracle = IgMixtureScore::single(Rotation::identity(), eps0);
        let n = 400;
        let s = sample(&oracle, &schedule, n, &[], 200, &mut rng(8)).unwrap();
        let mut got: Vec<f64> = s.rotations.iter().map(|x| x.angle()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let table = igso3::build_cdf(eps0 + schedule.eps_min, 1024).unwrap();
        let ks = got
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let c = table.cdf(*w);
                (c - i as f64 / n as f64)
                    .abs()
                    .max((c - (i + 1) as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value at n = 400 is about 0.081
        assert!(ks < 0.081, "KS distance {ks}");
    }

    #[test]
    fn training_reduces_loss_and_zero_iterations_is_identity() {
        let data = SampleSet::new(vec![Rotation::<f64>::identity(); 64], "delta");
        let model = ScoreModel::new(&[32, 32], VeSchedule::default(), 0, &mut rng(9)).unwrap();
        let mut tr = SgmTrainer::new(
            model.clone(),
            AdamConfig {
                lr: 1e-3,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg0 = TrainConfig {
            iterations: 0,
            ..Default::default()
        };
        run_training(&mut tr, &data, &cfg0, &mut rng(10), |_| Ok(())).unwrap();
        assert_eq!(tr.model, model);

        let cfg = TrainConfig {
            iterations: 600,
            batch_size: 64,
            log_every: 100,
            ckpt_every: 0,
        };
        let mut curve = Vec::new();
        run_training(&mut tr, &data, &cfg, &mut rng(11), |ev| {
            if let TrainEvent::Log { loss, .. } = ev {
                curve.push(loss);
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(curve.len(), 6);
        assert!(curve[5] < 0.5 * curve[0], "{curve:?}");
        assert_eq!(tr.steps_done(), 600);
    }

    #[cfg(feature = "likelihood")]
    #[test]
    fn zero_score_likelihood_is_uniform() {
        let x: Rotation = sample_uniform(&mut rng(12));
        let ll = log_likelihood(&ZeroScore, &VeSchedule::default(), &x, &[], 10).unwrap();
        assert_eq!(ll, 0.0);
    }

    #[cfg(feature = "likelihood")]
    #[test]
    fn exact_score_likelihood_matches_density() {
        let schedule = VeSchedule {
            t_max: 6.0,
            ..Default::default()
        };
        let eps0 = 0.2;
        let oracle = IgMixtureScore::single(Rotation::identity(), eps0);
        let p = IgParams::centered(eps0 + schedule.eps_min).unwrap();
        let mut r = rng(13);
        for _ in 0..5 {
            let x: Rotation = igso3::sample(&IgParams::centered(0.3).unwrap(), &mut r).unwrap();
            let ll = log_likelihood(&oracle, &schedule, &x, &[], 200).unwrap();
            let exact = igso3::log_density(&x, &p).unwrap();
            assert!((ll - exact).abs() < 0.05, "{ll} vs {exact}");
        }
    }
}
