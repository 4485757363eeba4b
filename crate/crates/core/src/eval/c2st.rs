//! Classifier two-sample test.
//!
//! A small network learns to tell the two sets apart from the nine matrix
//! entries of each rotation. The score is its accuracy on held-out folds:
//! 0.5 when the sets are indistinguishable, 1.0 when perfectly separable.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Mlp};
use crate::real::Real;

pub const MIN_C2ST_SAMPLES: usize = 500;

/// Classifier capacity and training budget; fixed so scores compare across runs.
#[derive(Clone, Debug, PartialEq)]
pub struct C2stConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for C2stConfig {
    fn default() -> Self {
        C2stConfig {
            hidden: vec![64, 64],
            epochs: 60,
            batch_size: 128,
            lr: 1e-3,
        }
    }
}

/// Mean held-out accuracy over the folds and its standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct C2stReport {
    pub score: f64,
    pub std: f64,
    pub fold_scores: Vec<f64>,
    /// Samples used per side after balancing.
    pub n_per_side: usize,
}

pub fn c2st<T: Real, R: Rng + ?Sized>(
    a: &SampleSet<T>,
    b: &SampleSet<T>,
    k_folds: usize,
    rng: &mut R,
) -> Result<C2stReport> {
    c2st_with(a, b, k_folds, &C2stConfig::default(), rng)
}

/// The larger set is truncated to the size of the smaller one so that
/// chance level is exactly one half.
pub fn c2st_with<T: Real, R: Rng + ?Sized>(
    a: &SampleSet<T>,
    b: &SampleSet<T>,
    k_folds: usize,
    cfg: &C2stConfig,
    rng: &mut R,
) -> Result<C2stReport> {
    let m = a.len().min(b.len());
    if m < MIN_C2ST_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_C2ST_SAMPLES,
            got: m,
        });
    }
    if k_folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "k_folds must be at least 2, got {k_folds}"
        )));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidArgument(
            "C2ST batch size and epochs must be positive".into(),
        ));
    }

    let mut x = Array2::<T>::zeros((2 * m, 9));
    let mut y = vec![T::zero(); 2 * m];
    for i in 0..m {
        x.row_mut(i)
            .assign(&ndarray::arr1(&a.rotations[i].to_array()));
        x.row_mut(m + i)
            .assign(&ndarray::arr1(&b.rotations[i].to_array()));
        y[m + i] = T::one();
    }
    let mut order: Vec<usize> = (0..2 * m).collect();
    order.shuffle(rng);

    let mut widths = vec![9];
    widths.extend_from_slice(&cfg.hidden);
    widths.push(1);

    let mut fold_scores = Vec::with_capacity(k_folds);
    for k in 0..k_folds {
        let lo = k * order.len() / k_folds;
        let hi = (k + 1) * order.len() / k_folds;
        let test: Vec<usize> = order[lo..hi].to_vec();
        let mut train: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();

        let mut net = Mlp::<T>::init(&widths, rng)?;
        let mut adam = AdamState::new(
            &net,
            AdamConfig {
                lr: cfg.lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
        );
        for _ in 0..cfg.epochs {
            train.shuffle(rng);
            for chunk in train.chunks(cfg.batch_size) {
                let xb = x.select(Axis(0), chunk);
                let (z, cache) = net.forward_batch(xb.view())?;
                let inv = T::one() / T::of(chunk.len() as f64);
                let mut up = Array2::zeros((chunk.len(), 1));
                for (r, &i) in chunk.iter().enumerate() {
                    let p = T::one() / (T::one() + (-z[[r, 0]]).exp());
                    up[[r, 0]] = (p - y[i]) * inv;
                }
                let (g, _) = net.backward(&cache, up.view())?;
                if !g.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        step: adam.step + 1,
                    });
                }
                adam.step(&mut net, &g)?;
            }
        }
        let z = net.predict(x.select(Axis(0), &test).view())?;
        let correct = test
            .iter()
            .enumerate()
            .filter(|(r, &i)| (z[[*r, 0]] > T::zero()) == (y[i] > T::zero()))
            .count();
        fold_scores.push(correct as f64 / test.len() as f64);
    }
    let score = fold_scores.iter().sum::<f64>() / k_folds as f64;
    let var = fold_scores.iter().map(|s| (s - score).powi(2)).sum::<f64>() / (k_folds - 1) as f64;
    Ok(C2stReport {
        score,
        std: var.sqrt(),
        fold_scores,
        n_per_side: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::igso3::{sample_n, IgParams};
    use crate::so3::{expm, sample_uniform, TangentVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quick() -> C2stConfig {
        C2stConfig {
            epochs: 10,
            ..C2stConfig::default()
        }
    }

    #[test]
    fn rejects_small_sets_and_bad_folds() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let small = SampleSet::new(vec![Rotation::<f64>::identity(); 499], "a");
        let big = SampleSet::new(vec![Rotation::<f64>::identity(); 600], "b");
        assert!(matches!(
            c2st(&small, &big, 5, &mut r),
            Err(Error::InsufficientSamples { got: 499, .. })
        ));
        assert!(c2st(&big, &big, 1, &mut r).is_err());
    }

    use crate::so3::Rotation;

    #[test]
    fn separated_blobs_are_detected() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let a = SampleSet::new(
            sample_n(&IgParams::centered(0.01).unwrap(), 600, &mut r).unwrap(),
            "a",
        );
        let mu = expm(&TangentVector::new(0.0, 0.0, 3.0));
        let b = SampleSet::new(
            sample_n(&IgParams::new(mu, 0.01).unwrap(), 600, &mut r).unwrap(),
            "b",
        );
        let rep = c2st_with(&a, &b, 3, &quick(), &mut r).unwrap();
        assert!(rep.score > 0.95, "{rep:?}");
    }

    #[test]
    fn same_distribution_is_near_chance() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let a = SampleSet::new(
            (0..1000)
                .map(|_| sample_uniform::<f64, _>(&mut r))
                .collect(),
            "a",
        );
        let b = SampleSet::new(
            (0..1000)
                .map(|_| sample_uniform::<f64, _>(&mut r))
                .collect(),
            "b",
        );
        let rep = c2st_with(&a, &b, 4, &quick(), &mut r).unwrap();
        assert!((rep.score - 0.5).abs() < 0.05, "{rep:?}");
        assert_eq!(rep.fold_scores.len(), 4);
    }
}
