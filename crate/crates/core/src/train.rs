//! Generic optimization loop shared by the score and DDPM models.

use rand::Rng;

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::real::Real;

/// Loop settings independent of the model kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    /// Report the mean loss over this many steps; 0 disables logging.
    pub log_every: u64,
    /// Emit a checkpoint event every this many steps; 0 disables.
    pub ckpt_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 10_000,
            batch_size: 256,
            log_every: 100,
            ckpt_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// A model that can take one optimizer step on a minibatch.
pub trait Trainer {
    type Scalar: Real;

    /// Number of optimizer steps applied so far.
    fn steps_done(&self) -> u64;

    /// Computes the loss on `batch` (indices into `data`) and applies the update.
    ///
    /// A non-finite loss or gradient leaves the parameters untouched and
    /// returns [`Error::NonFiniteLoss`].
    fn train_step<R: Rng + ?Sized>(
        &mut self,
        data: &SampleSet<Self::Scalar>,
        batch: &[usize],
        rng: &mut R,
    ) -> Result<f64>;
}

/// Progress notifications from [`run_training`].
pub enum TrainEvent<'a, Tr> {
    Log { step: u64, loss: f64 },
    Checkpoint { step: u64, trainer: &'a Tr },
}

/// Runs `cfg.iterations` further steps, drawing minibatch indices uniformly
/// with replacement.
pub fn run_training<Tr, R, F>(
    trainer: &mut Tr,
    data: &SampleSet<Tr::Scalar>,
    cfg: &TrainConfig,
    rng: &mut R,
    mut on_event: F,
) -> Result<()>
where
    Tr: Trainer,
    R: Rng + ?Sized,
    F: FnMut(TrainEvent<'_, Tr>) -> Result<()>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut acc = 0.0;
    let mut count = 0u64;
    let mut batch = vec![0usize; cfg.batch_size];
    for _ in 0..cfg.iterations {
        for b in batch.iter_mut() {
            *b = rng.random_range(0..data.len());
        }
        let loss = trainer.train_step(data, &batch, rng)?;
        acc += loss;
        count += 1;
        let step = trainer.steps_done();
        if cfg.log_every > 0 && step % cfg.log_every == 0 {
            on_event(TrainEvent::Log {
                step,
                loss: acc / count as f64,
            })?;
            acc = 0.0;
            count = 0;
        }
        if cfg.ckpt_every > 0 && step % cfg.ckpt_every == 0 {
            on_event(TrainEvent::Checkpoint { step, trainer })?;
        }
    }
    Ok(())
}
