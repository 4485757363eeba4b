//! Denoising diffusion on SO(3): a variance-preserving Markov chain with
//! isotropic Gaussian transitions and a learned isotropic Gaussian reverse
//! kernel.
//!
//! Forward step: `x_{i+1} ~ IG(c_i(x_i), beta_i)` where `c_i` contracts
//! toward the identity. The default contraction keeps the rotation axis and
//! maps the angle through `F_{1-beta}^{-1}(F_1(w))`, with `F_e` the angle CDF
//! of `IG(I, e)`. It shrinks small angles by `sqrt(1 - beta)` like the
//! Euclidean VP update, and it carries `IG(I, 1)` onto `IG(I, 1 - beta)`, so
//! adding the step noise gives back `IG(I, 1)`. The prior of the reverse
//! chain is therefore stationary under the forward chain.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::igso3::{self, build_cdf, AngleCdfTable, IgParams, CDF_GRID};
use crate::nn::{featurize_batch, AdamConfig, AdamState, Mlp, BASE_FEATURES};
use crate::real::Real;
use crate::so3::{
    expm, from_quaternion, from_sixd, from_sixd_backward, logm, quat_power, sample_unit_vector,
    to_quaternion, vec3, Mat3, Rotation, SixD, TangentVector,
};
use crate::train::Trainer;

/// Lower bound on the predicted reverse-kernel scale.
pub const EPS_FLOOR: f64 = 1e-5;
/// Scale of the prior `IG(I, 1)` the reverse chain starts from.
pub const PRIOR_EPS: f64 = 1.0;
/// Extra network inputs beyond the base features: the chain position `i/N`.
pub const TIME_FEATURES: usize = 1;

/// How the forward chain pulls a state toward the identity before adding noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Contraction {
    /// Angle quantile map from `IG(I, 1)` to `IG(I, 1 - beta)`; axis kept.
    #[default]
    QuantileMatched,
    /// Quaternion power `q^sqrt(1 - beta)`.
    QuatPower,
}

impl Contraction {
    pub fn tag(self) -> u8 {
        match self {
            Contraction::QuantileMatched => 0,
            Contraction::QuatPower => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Contraction::QuantileMatched),
            1 => Some(Contraction::QuatPower),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Contraction::QuantileMatched => "quantile",
            Contraction::QuatPower => "quat-power",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "quantile" => Some(Contraction::QuantileMatched),
            "quat-power" => Some(Contraction::QuatPower),
            _ => None,
        }
    }
}

/// Per-step noise levels `beta_1..beta_N` and the contraction rule.
#[derive(Clone, Debug, PartialEq)]
pub struct VpSchedule {
    pub betas: Vec<f64>,
    pub contraction: Contraction,
}

impl Default for VpSchedule {
    fn default() -> Self {
        Self::linear(100, 1e-4, 0.3).expect("valid default")
    }
}

impl VpSchedule {
    pub fn new(betas: Vec<f64>, contraction: Contraction) -> Result<Self> {
        let s = VpSchedule { betas, contraction };
        s.validate()?;
        Ok(s)
    }

    /// `n` values linearly spaced from `beta_min` to `beta_max`.
    pub fn linear(n: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        let betas = match n {
            0 => Vec::new(),
            1 => vec![beta_min],
            _ => (0..n)
                .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (n - 1) as f64)
                .collect(),
        };
        Self::new(betas, Contraction::default())
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::InvalidArgument(
                "VP schedule needs at least one step".into(),
            ));
        }
        if let Some((i, b)) = self
            .betas
            .iter()
            .enumerate()
            .find(|(_, b)| !(**b > 0.0 && **b < 1.0))
        {
            return Err(Error::InvalidArgument(format!(
                "beta_{} = {b} is outside (0, 1)",
                i + 1
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        self.betas.len()
    }
}

/// Precomputed angle tables for simulating the forward chain.
#[derive(Clone, Debug)]
pub struct VpChain<T: Real = f64> {
    schedule: VpSchedule,
    noise: Vec<Arc<AngleCdfTable<T>>>,
    shrunk: Vec<Arc<AngleCdfTable<T>>>,
    prior: Arc<AngleCdfTable<T>>,
}

impl<T: Real> VpChain<T> {
    pub fn new(schedule: &VpSchedule) -> Result<Self> {
        schedule.validate()?;
        let prior = Arc::new(build_cdf(T::of(PRIOR_EPS), CDF_GRID)?);
        let mut noise = Vec::with_capacity(schedule.n_steps());
        let mut shrunk = Vec::new();
        for &b in &schedule.betas {
            noise.push(Arc::new(build_cdf(T::of(b), CDF_GRID)?));
            if schedule.contraction == Contraction::QuantileMatched {
                shrunk.push(Arc::new(build_cdf(T::of(PRIOR_EPS - b), CDF_GRID)?));
            }
        }
        Ok(VpChain {
            schedule: schedule.clone(),
            noise,
            shrunk,
            prior,
        })
    }

    pub fn schedule(&self) -> &VpSchedule {
        &self.schedule
    }

    pub fn n_steps(&self) -> usize {
        self.schedule.n_steps()
    }

    /// `c_i(x)` for the 0-based step index `i`.
    pub fn contract(&self, x: &Rotation<T>, i: usize) -> Rotation<T> {
        let beta = self.schedule.betas[i];
        match self.schedule.contraction {
            Contraction::QuatPower => {
                let q = quat_power(&to_quaternion(x), T::of((1.0 - beta).sqrt()));
                from_quaternion(&q).unwrap_or(*x)
            }
            Contraction::QuantileMatched => {
                let v = logm(x);
                let w = v.norm();
                let factor = if w > T::of(1e-12) {
                    self.shrunk[i].quantile(self.prior.cdf(w)) / w
                } else {
                    T::of((1.0 - beta).sqrt())
                };
                expm(&v.scale(factor))
            }
        }
    }

    /// One forward transition `x_{i+1} ~ IG(c_i(x_i), beta_i)`.
    pub fn step<R: Rng + ?Sized>(&self, x: &Rotation<T>, i: usize, rng: &mut R) -> Rotation<T> {
        let mean = self.contract(x, i);
        let w = self.noise[i].quantile(T::unit_uniform(rng));
        let axis = sample_unit_vector::<T, _>(rng);
        mean.compose(&expm(&TangentVector(vec3::scale(&axis, w))))
    }

    /// Runs the first `k` transitions from `x0`.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        x0: &Rotation<T>,
        k: usize,
        rng: &mut R,
    ) -> Rotation<T> {
        (0..k).fold(*x0, |x, i| self.step(&x, i, rng))
    }

    /// A draw from the prior `IG(I, 1)`.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Rotation<T> {
        let w = self.prior.quantile(T::unit_uniform(rng));
        let axis = sample_unit_vector::<T, _>(rng);
        expm(&TangentVector(vec3::scale(&axis, w)))
    }
}

/// Single forward transition with a freshly built table; prefer [`VpChain`]
/// when stepping repeatedly.
pub fn forward_step<T: Real, R: Rng + ?Sized>(
    x: &Rotation<T>,
    beta: f64,
    contraction: Contraction,
    rng: &mut R,
) -> Result<Rotation<T>> {
    let chain = VpChain::new(&VpSchedule::new(vec![beta], contraction)?)?;
    Ok(chain.step(x, 0, rng))
}

/// Prediction of a reverse kernel: residual rotation and scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelPrediction<T: Real> {
    pub delta: Rotation<T>,
    pub eps: T,
}

/// Reverse transition `p(x_{i-1} | x_i) = IG(x_i delta(x_i, i), eps(x_i, i))`.
pub trait ReverseKernel<T: Real> {
    fn context_dim(&self) -> usize {
        0
    }

    /// `step` is the 1-based index `i` of the states `xs = x_i`.
    fn predict(
        &self,
        xs: &[Rotation<T>],
        step: usize,
        schedule: &VpSchedule,
        contexts: &[&[T]],
    ) -> Result<Vec<KernelPrediction<T>>>;
}

/// Identity residual and a fixed scale.
#[derive(Clone, Copy, Debug)]
pub struct FixedKernel<T: Real> {
    pub eps: T,
}

impl<T: Real> ReverseKernel<T> for FixedKernel<T> {
    fn predict(
        &self,
        xs: &[Rotation<T>],
        _: usize,
        _: &VpSchedule,
        _: &[&[T]],
    ) -> Result<Vec<KernelPrediction<T>>> {
        Ok(vec![
            KernelPrediction {
                delta: Rotation::identity(),
                eps: self.eps
            };
            xs.len()
        ])
    }
}

/// The two networks of a learned reverse kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct ReverseKernelModel<T: Real = f64> {
    /// Outputs an offset from the identity's 6D frame, decoded by Gram-Schmidt.
    pub delta_net: Mlp<T>,
    /// Outputs `o`, mapped to `beta_i softplus(o) / ln 2 + EPS_FLOOR`.
    pub eps_net: Mlp<T>,
    pub schedule: VpSchedule,
    pub context_dim: usize,
}

fn softplus<T: Real>(x: T) -> T {
    if x > T::of(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Both heads start near the obvious answer: `delta = I` and `eps = beta_i`.
/// The frame offset is scaled by `sqrt(beta_i)`, the per-step noise level,
/// so the network regresses an order-one quantity at every step.
fn delta_frame<T: Real>(out: &[T], scale: T) -> SixD<T> {
    let mut v = [T::zero(); 6];
    for (v, o) in v.iter_mut().zip(out) {
        *v = *o * scale;
    }
    v[0] += T::one();
    v[4] += T::one();
    SixD::from_slice(&v)
}

/// Kernel scale and its derivative in the raw output `o`.
fn kernel_eps<T: Real>(o: T, beta: f64) -> (T, T) {
    let k = T::of(beta / std::f64::consts::LN_2);
    (k * softplus(o) + T::of(EPS_FLOOR), k * sigmoid(o))
}

impl<T: Real> ReverseKernelModel<T> {
    pub fn input_dim(context_dim: usize) -> usize {
        BASE_FEATURES + TIME_FEATURES + context_dim
    }

    pub fn new<R: Rng + ?Sized>(
        hidden: &[usize],
        schedule: VpSchedule,
        context_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        schedule.validate()?;
        let widths = |out: usize| {
            let mut w = vec![Self::input_dim(context_dim)];
            w.extend_from_slice(hidden);
            w.push(out);
            w
        };
        let delta_net = Mlp::init(&widths(6), rng)?;
        let eps_net = Mlp::init(&widths(1), rng)?;
        Ok(ReverseKernelModel {
            delta_net,
            eps_net,
            schedule,
            context_dim,
        })
    }

    pub fn from_parts(
        delta_net: Mlp<T>,
        eps_net: Mlp<T>,
        schedule: VpSchedule,
        context_dim: usize,
    ) -> Result<Self> {
        schedule.validate()?;
        let input = Self::input_dim(context_dim);
        for (net, out) in [(&delta_net, 6), (&eps_net, 1)] {
            if net.input_dim() != input {
                return Err(Error::ShapeMismatch {
                    expected: input,
                    got: net.input_dim(),
                });
            }
            if net.output_dim() != out {
                return Err(Error::ShapeMismatch {
                    expected: out,
                    got: net.output_dim(),
                });
            }
        }
        Ok(ReverseKernelModel {
            delta_net,
            eps_net,
            schedule,
            context_dim,
        })
    }

    /// Inputs at 1-based chain positions `steps`.
    fn features(
        &self,
        xs: &[Rotation<T>],
        steps: &[usize],
        schedule: &VpSchedule,
        contexts: &[&[T]],
    ) -> Result<Array2<T>> {
        let n = schedule.n_steps();
        let betas: Vec<T> = steps
            .iter()
            .map(|&s| T::of(schedule.betas[s - 1]))
            .collect();
        let extra: Vec<Vec<T>> = steps
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let mut v = vec![T::of(s as f64 / n as f64)];
                if self.context_dim > 0 {
                    v.extend_from_slice(contexts[k]);
                }
                v
            })
            .collect();
        let refs: Vec<&[T]> = extra.iter().map(|v| v.as_slice()).collect();
        featurize_batch(xs, &betas, &refs, TIME_FEATURES + self.context_dim)
    }
}

impl<T: Real> ReverseKernel<T> for ReverseKernelModel<T> {
    fn context_dim(&self) -> usize {
        self.context_dim
    }

    fn predict(
        &self,
        xs: &[Rotation<T>],
        step: usize,
        schedule: &VpSchedule,
        contexts: &[&[T]],
    ) -> Result<Vec<KernelPrediction<T>>> {
        let steps = vec![step; xs.len()];
        let feats = self.features(xs, &steps, schedule, contexts)?;
        let d = self.delta_net.predict(feats.view())?;
        let e = self.eps_net.predict(feats.view())?;
        let beta = schedule.betas[step - 1];
        let scale = T::of(beta.sqrt());
        d.rows()
            .into_iter()
            .zip(e.rows())
            .map(|(dr, er)| {
                let s = delta_frame(dr.as_slice().expect("standard layout"), scale);
                Ok(KernelPrediction {
                    delta: from_sixd(&s)?,
                    eps: kernel_eps(er[0], beta).0,
                })
            })
            .collect()
    }
}

/// Consecutive chain states `(x_i, x_{i+1})` with the 1-based index `i + 1`.
#[derive(Clone, Debug)]
pub struct ChainPairs<T: Real> {
    pub earlier: Vec<Rotation<T>>,
    pub later: Vec<Rotation<T>>,
    pub steps: Vec<usize>,
}

/// Number of nested ranges in [`draw_step`].
pub const STEP_TIERS: u32 = 3;

/// Zero-based transition index in `0..n`: uniform over the first
/// `ceil(n / 4^k)` transitions with `k` uniform in `0..STEP_TIERS`.
///
/// Every transition has its own kernel, so the weighting leaves each
/// optimum unchanged; it spends more of the batch on the low-noise steps,
/// whose small mean shifts are the hardest to learn, and they are also the
/// cheapest to simulate.
pub fn draw_step<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    let tier = rng.random_range(0..STEP_TIERS);
    rng.random_range(0..n.div_ceil(4usize.pow(tier)))
}

/// For each `x0`, picks `i` with [`draw_step`] and simulates the chain up
/// to `x_{i+1}`.
pub fn draw_pairs<T: Real, R: Rng + ?Sized>(
    chain: &VpChain<T>,
    xs: &[Rotation<T>],
    rng: &mut R,
) -> ChainPairs<T> {
    let n = chain.n_steps();
    let mut p = ChainPairs {
        earlier: Vec::with_capacity(xs.len()),
        later: Vec::with_capacity(xs.len()),
        steps: Vec::with_capacity(xs.len()),
    };
    for x0 in xs {
        let i = draw_step(n, rng);
        let xi = chain.simulate(x0, i, rng);
        let next = chain.step(&xi, i, rng);
        p.earlier.push(xi);
        p.later.push(next);
        p.steps.push(i + 1);
    }
    p
}

/// `-log IG(x_i; x_{i+1} delta, eps)` with its gradients in `delta` and `eps`.
fn kernel_nll<T: Real>(
    earlier: &Rotation<T>,
    later: &Rotation<T>,
    delta: &Rotation<T>,
    eps: T,
) -> Result<(T, Mat3<T>, T)> {
    let mean = later.compose(delta);
    let m = mean.between(earlier);
    let (_, k) = igso3::eval_relative(m.matrix(), eps)?;
    // cos w = (tr(delta^T P) - 1) / 2 with P = later^T earlier
    let p = later.between(earlier);
    let half_r = T::of(0.5) * k.d_omega_over_sin;
    let pm = p.matrix();
    let mut g = [[T::zero(); 3]; 3];
    for j in 0..3 {
        for l in 0..3 {
            g[j][l] = half_r * pm[j][l];
        }
    }
    Ok((-k.log_f, g, -k.d_eps))
}

/// Mean reverse-kernel negative log-likelihood for any kernel.
pub fn ddpm_loss_of<T: Real, K: ReverseKernel<T> + ?Sized>(
    kernel: &K,
    pairs: &ChainPairs<T>,
    schedule: &VpSchedule,
    contexts: &[&[T]],
) -> Result<T> {
    let mut total = T::zero();
    for k in 0..pairs.steps.len() {
        let ctx: Vec<&[T]> = if contexts.is_empty() {
            Vec::new()
        } else {
            vec![contexts[k]]
        };
        let pred = kernel.predict(
            std::slice::from_ref(&pairs.later[k]),
            pairs.steps[k],
            schedule,
            &ctx,
        )?[0];
        total += kernel_nll(&pairs.earlier[k], &pairs.later[k], &pred.delta, pred.eps)?.0;
    }
    Ok(total / T::of(pairs.steps.len() as f64))
}

/// Loss and gradients for both networks on pre-drawn chain pairs.
pub fn ddpm_loss_pairs<T: Real>(
    model: &ReverseKernelModel<T>,
    pairs: &ChainPairs<T>,
    contexts: &[&[T]],
) -> Result<(T, Mlp<T>, Mlp<T>)> {
    let n = pairs.steps.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let feats = model.features(&pairs.later, &pairs.steps, &model.schedule, contexts)?;
    let (d_out, d_cache) = model.delta_net.forward_batch(feats.view())?;
    let (e_out, e_cache) = model.eps_net.forward_batch(feats.view())?;
    let inv_n = T::one() / T::of(n as f64);
    let mut d_up = Array2::zeros((n, 6));
    let mut e_up = Array2::zeros((n, 1));
    let mut loss = T::zero();
    for k in 0..n {
        let row = d_out.row(k);
        let beta = model.schedule.betas[pairs.steps[k] - 1];
        let scale = T::of(beta.sqrt());
        let s = delta_frame(row.as_slice().expect("standard layout"), scale);
        let delta = from_sixd(&s)?;
        let (eps, d_eps) = kernel_eps(e_out[[k, 0]], beta);
        let (nll, g_delta, g_eps) = kernel_nll(&pairs.earlier[k], &pairs.later[k], &delta, eps)?;
        loss += nll;
        let g6 = from_sixd_backward(&s, &g_delta);
        for j in 0..6 {
            d_up[[k, j]] = g6[j] * scale * inv_n;
        }
        e_up[[k, 0]] = g_eps * d_eps * inv_n;
    }
    let (gd, _) = model.delta_net.backward(&d_cache, d_up.view())?;
    let (ge, _) = model.eps_net.backward(&e_cache, e_up.view())?;
    Ok((loss * inv_n, gd, ge))
}

/// Draws chain pairs for `xs` and evaluates [`ddpm_loss_pairs`].
pub fn ddpm_loss<T: Real, R: Rng + ?Sized>(
    model: &ReverseKernelModel<T>,
    chain: &VpChain<T>,
    xs: &[Rotation<T>],
    contexts: &[&[T]],
    rng: &mut R,
) -> Result<(T, Mlp<T>, Mlp<T>)> {
    let pairs = draw_pairs(chain, xs, rng);
    ddpm_loss_pairs(model, &pairs, contexts)
}

/// Reverse-kernel model plus one optimizer per network.
#[derive(Clone, Debug)]
pub struct DdpmTrainer<T: Real = f64> {
    pub model: ReverseKernelModel<T>,
    pub adam_delta: AdamState<T>,
    pub adam_eps: AdamState<T>,
    chain: VpChain<T>,
}

impl<T: Real> DdpmTrainer<T> {
    pub fn new(model: ReverseKernelModel<T>, adam: AdamConfig) -> Result<Self> {
        adam.validate()?;
        let chain = VpChain::new(&model.schedule)?;
        Ok(DdpmTrainer {
            adam_delta: AdamState::new(&model.delta_net, adam),
            adam_eps: AdamState::new(&model.eps_net, adam),
            model,
            chain,
        })
    }

    /// Restores optimizer state, e.g. from a checkpoint.
    pub fn with_state(
        model: ReverseKernelModel<T>,
        adam_delta: AdamState<T>,
        adam_eps: AdamState<T>,
    ) -> Result<Self> {
        let chain = VpChain::new(&model.schedule)?;
        Ok(DdpmTrainer {
            model,
            adam_delta,
            adam_eps,
            chain,
        })
    }

    pub fn chain(&self) -> &VpChain<T> {
        &self.chain
    }
}

impl<T: Real> Trainer for DdpmTrainer<T> {
    type Scalar = T;

    fn steps_done(&self) -> u64 {
        self.adam_delta.step
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
        let (xs, ctx) = crate::sgm::gather(data, batch);
        let (loss, gd, ge) = ddpm_loss(&self.model, &self.chain, &xs, &ctx, rng)?;
        if !loss.is_finite() || !gd.is_finite() || !ge.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.adam_delta.step + 1,
            });
        }
        self.adam_delta.step(&mut self.model.delta_net, &gd)?;
        self.adam_eps.step(&mut self.model.eps_net, &ge)?;
        Ok(loss.to_f64_lossy())
    }
}

/// Ancestral sampling: `x_N ~ IG(I, 1)`, then `x_{i-1} ~ IG(x_i delta, eps)`.
pub fn sample<T, K, R>(
    kernel: &K,
    schedule: &VpSchedule,
    n: usize,
    context: &[T],
    rng: &mut R,
) -> Result<SampleSet<T>>
where
    T: Real,
    K: ReverseKernel<T> + ?Sized,
    R: Rng + ?Sized,
{
    schedule.validate()?;
    if context.len() != kernel.context_dim() {
        return Err(Error::ShapeMismatch {
            expected: kernel.context_dim(),
            got: context.len(),
        });
    }
    let prior = IgParams::centered(T::of(PRIOR_EPS))?;
    let mut xs: Vec<Rotation<T>> = (0..n)
        .map(|_| igso3::sample(&prior, rng))
        .collect::<Result<_>>()?;
    let ctx: Vec<&[T]> = if context.is_empty() {
        Vec::new()
    } else {
        vec![context; n]
    };
    for i in (1..=schedule.n_steps()).rev() {
        let preds = kernel.predict(&xs, i, schedule, &ctx)?;
        for (x, p) in xs.iter_mut().zip(preds) {
            let mean = x.compose(&p.delta);
            *x = igso3::sample(&IgParams::new(mean, p.eps)?, rng)?;
        }
    }
    let set = if context.is_empty() {
        SampleSet::new(xs, "ddpm")
    } else {
        SampleSet::with_contexts(xs, context.repeat(n), context.len(), "ddpm")?
    };
    Ok(set.with_provenance(0, schedule.n_steps() as u32))
}
