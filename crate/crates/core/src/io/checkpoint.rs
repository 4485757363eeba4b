//! Training checkpoints.
//!
//! ```text
//! magic      4 bytes  "SO3C"
//! version    u32      1
//! kind       u8       0 = score model, 1 = DDPM
//! precision  u8       bytes per scalar used in training (4 or 8)
//! ctx_dim    u32
//! schedule   score: t_max, eps_min, sigma_eps as f64
//!            DDPM:  contraction u8, n u64, n x f64 betas
//! networks   score: 1, DDPM: 2 (delta then eps), each followed by its Adam state
//! crc32      u32 over every preceding byte
//! ```
//!
//! A network is `activation u8, n_layers u64, widths (n_layers + 1) x u64`,
//! then the flat parameters as f64. Adam state is `lr, beta1, beta2, eps` as
//! f64, `step u64`, then the first and second moments in network layout.

use std::path::Path;

use super::{write_atomic, Dec, Enc};
use crate::ddpm::{Contraction, DdpmTrainer, ReverseKernelModel, VpSchedule};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, AdamState, Mlp};
use crate::real::Real;
use crate::sgm::{ScoreModel, SgmTrainer, VeSchedule};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SO3C";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Sgm,
    Ddpm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Sgm => "sgm",
            ModelKind::Ddpm => "ddpm",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "sgm" => Some(ModelKind::Sgm),
            "ddpm" => Some(ModelKind::Ddpm),
            _ => None,
        }
    }
}

/// A trained model together with the optimizer state needed to resume.
#[derive(Clone, Debug)]
pub enum Checkpoint<T: Real = f64> {
    Sgm(SgmTrainer<T>),
    Ddpm(DdpmTrainer<T>),
}

impl<T: Real> Checkpoint<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            Checkpoint::Sgm(_) => ModelKind::Sgm,
            Checkpoint::Ddpm(_) => ModelKind::Ddpm,
        }
    }

    pub fn steps_done(&self) -> u64 {
        match self {
            Checkpoint::Sgm(t) => t.adam.step,
            Checkpoint::Ddpm(t) => t.adam_delta.step,
        }
    }

    pub fn context_dim(&self) -> usize {
        match self {
            Checkpoint::Sgm(t) => t.model.context_dim,
            Checkpoint::Ddpm(t) => t.model.context_dim,
        }
    }
}

fn put_net<T: Real>(e: &mut Enc, net: &Mlp<T>) {
    e.u8(net.activation.tag());
    e.u64(net.layers.len() as u64);
    for w in net.widths() {
        e.u64(w as u64);
    }
    put_flat(e, net);
}

fn put_flat<T: Real>(e: &mut Enc, net: &Mlp<T>) {
    for v in net.to_flat() {
        e.f64(v.to_f64_lossy());
    }
}

fn put_adam<T: Real>(e: &mut Enc, a: &AdamState<T>) {
    let c = a.config;
    for v in [c.lr, c.beta1, c.beta2, c.eps] {
        e.f64(v);
    }
    e.u64(a.step);
    put_flat(e, &a.m);
    put_flat(e, &a.v);
}

fn get_flat<T: Real>(d: &mut Dec, like: &Mlp<T>) -> Result<Mlp<T>> {
    let n = like.n_params();
    let vals = (0..n)
        .map(|_| d.f64().map(T::of))
        .collect::<Result<Vec<_>>>()?;
    let mut out = like.zeros_like();
    out.set_flat(&vals)?;
    Ok(out)
}

fn get_net<T: Real>(d: &mut Dec) -> Result<Mlp<T>> {
    let at = d.offset();
    let activation =
        Activation::from_tag(d.u8()?).ok_or_else(|| d.err("unknown activation tag"))?;
    let n_layers = d.len(8)?;
    let widths = (0..=n_layers)
        .map(|_| d.u64().map(|w| w as usize))
        .collect::<Result<Vec<_>>>()?;
    let n_params = widths.windows(2).fold(0u64, |acc, p| {
        acc.saturating_add((p[0] as u64 + 1).saturating_mul(p[1] as u64))
    });
    if n_params.saturating_mul(8) > d.remaining() as u64 {
        return Err(Error::Format {
            offset: at,
            msg: format!("network with {n_params} parameters does not fit in the file"),
        });
    }
    let net = Mlp::<T>::zeros(&widths, activation).map_err(|e| Error::Format {
        offset: at,
        msg: format!("bad network shape: {e}"),
    })?;
    get_flat(d, &net)
}

fn get_adam<T: Real>(d: &mut Dec, like: &Mlp<T>) -> Result<AdamState<T>> {
    let at = d.offset();
    let config = AdamConfig {
        lr: d.f64()?,
        beta1: d.f64()?,
        beta2: d.f64()?,
        eps: d.f64()?,
    };
    config.validate().map_err(|e| Error::Format {
        offset: at,
        msg: e.to_string(),
    })?;
    let step = d.u64()?;
    let m = get_flat(d, like)?;
    let v = get_flat(d, like)?;
    Ok(AdamState { config, m, v, step })
}

pub fn write_checkpoint<T: Real>(ckpt: &Checkpoint<T>) -> Vec<u8> {
    let mut e = Enc::default();
    e.bytes(&CHECKPOINT_MAGIC);
    e.u32(CHECKPOINT_VERSION);
    match ckpt {
        Checkpoint::Sgm(t) => {
            e.u8(0);
            e.u8(std::mem::size_of::<T>() as u8);
            e.u32(t.model.context_dim as u32);
            let s = t.model.schedule;
            for v in [s.t_max, s.eps_min, s.sigma_eps] {
                e.f64(v);
            }
            put_net(&mut e, &t.model.net);
            put_adam(&mut e, &t.adam);
        }
        Checkpoint::Ddpm(t) => {
            e.u8(1);
            e.u8(std::mem::size_of::<T>() as u8);
            e.u32(t.model.context_dim as u32);
            let s = &t.model.schedule;
            e.u8(s.contraction.tag());
            e.u64(s.betas.len() as u64);
            for b in &s.betas {
                e.f64(*b);
            }
            put_net(&mut e, &t.model.delta_net);
            put_adam(&mut e, &t.adam_delta);
            put_net(&mut e, &t.model.eps_net);
            put_adam(&mut e, &t.adam_eps);
        }
    }
    let crc = crc32fast::hash(&e.buf);
    e.u32(crc);
    e.buf
}

/// Verifies the checksum before decoding anything else.
pub fn read_checkpoint<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    if bytes.len() < 4 + 4 + 4 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "not a checkpoint file (bad magic)".into(),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    let mut d = Dec::new(body);
    d.take(4)?;
    let version = d.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let kind_at = d.offset();
    let kind = d.u8()?;
    let precision = d.u8()?;
    if precision != 4 && precision != 8 {
        return Err(d.err(format!("unsupported precision {precision}")));
    }
    let ctx_dim = d.u32()? as usize;
    let bad = |at: u64| {
        move |e: Error| Error::Format {
            offset: at,
            msg: e.to_string(),
        }
    };
    let ckpt = match kind {
        0 => {
            let at = d.offset();
            let schedule = VeSchedule {
                t_max: d.f64()?,
                eps_min: d.f64()?,
                sigma_eps: d.f64()?,
            };
            let net_at = d.offset();
            let net = get_net::<T>(&mut d)?;
            let adam = get_adam(&mut d, &net)?;
            schedule.validate().map_err(bad(at))?;
            let model = ScoreModel::from_parts(net, schedule, ctx_dim).map_err(bad(net_at))?;
            Checkpoint::Sgm(SgmTrainer { model, adam })
        }
        1 => {
            let at = d.offset();
            let contraction =
                Contraction::from_tag(d.u8()?).ok_or_else(|| d.err("unknown contraction tag"))?;
            let n = d.len(8)?;
            let betas = (0..n).map(|_| d.f64()).collect::<Result<Vec<_>>>()?;
            let schedule = VpSchedule::new(betas, contraction).map_err(bad(at))?;
            let net_at = d.offset();
            let delta_net = get_net::<T>(&mut d)?;
            let adam_delta = get_adam(&mut d, &delta_net)?;
            let eps_net = get_net::<T>(&mut d)?;
            let adam_eps = get_adam(&mut d, &eps_net)?;
            let model = ReverseKernelModel::from_parts(delta_net, eps_net, schedule, ctx_dim)
                .map_err(bad(net_at))?;
            Checkpoint::Ddpm(DdpmTrainer::with_state(model, adam_delta, adam_eps)?)
        }
        k => {
            return Err(Error::Format {
                offset: kind_at,
                msg: format!("unknown model kind {k}"),
            })
        }
    };
    d.finish()?;
    Ok(ckpt)
}

pub fn save_checkpoint<T: Real>(path: &Path, ckpt: &Checkpoint<T>) -> Result<()> {
    write_atomic(path, &write_checkpoint(ckpt))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    read_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sgm() -> Checkpoint<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let model = ScoreModel::new(&[8, 8], VeSchedule::default(), 1, &mut r).unwrap();
        let mut t = SgmTrainer::new(model, AdamConfig::default()).unwrap();
        t.adam.step = 17;
        t.adam.m.layers[0].b[0] = 0.25;
        Checkpoint::Sgm(t)
    }

    fn ddpm() -> Checkpoint<f32> {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let s = VpSchedule::linear(7, 1e-3, 0.3).unwrap();
        let model = ReverseKernelModel::new(&[6], s, 0, &mut r).unwrap();
        Checkpoint::Ddpm(DdpmTrainer::new(model, AdamConfig::default()).unwrap())
    }

    #[test]
    fn round_trips_are_byte_identical() {
        let a = write_checkpoint(&sgm());
        let back = read_checkpoint::<f64>(&a).unwrap();
        assert_eq!(back.steps_done(), 17);
        assert_eq!(back.kind(), ModelKind::Sgm);
        assert_eq!(write_checkpoint(&back), a);

        let b = write_checkpoint(&ddpm());
        let back = read_checkpoint::<f32>(&b).unwrap();
        assert_eq!(back.kind(), ModelKind::Ddpm);
        assert_eq!(write_checkpoint(&back), b);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = write_checkpoint(&sgm());
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(
            read_checkpoint::<f64>(&flipped),
            Err(Error::ChecksumMismatch { .. })
        ));
        let mut v = bytes.clone();
        v[4] = 2;
        assert!(matches!(
            read_checkpoint::<f64>(&v),
            Err(Error::VersionMismatch { found: 2, .. })
        ));
        assert!(read_checkpoint::<f64>(&bytes[..bytes.len() - 10]).is_err());
        assert!(matches!(
            read_checkpoint::<f64>(b"nope"),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn save_and_load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.ckpt");
        save_checkpoint(&p, &sgm()).unwrap();
        let back = load_checkpoint::<f64>(&p).unwrap();
        assert_eq!(back.context_dim(), 1);
        assert!(!dir.path().join("model.ckpt.tmp").exists());
    }
}
