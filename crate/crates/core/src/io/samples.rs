//! Sample set files.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! magic      4 bytes  "SO3S"
//! version    u32      1
//! count      u64
//! ctx_dim    u32
//! seed       u64
//! n_steps    u32
//! label_len  u32, then label_len bytes of UTF-8
//! rows       count x (9 + ctx_dim) f64: row-major matrix entries, then context
//! ```
//!
//! Rotations are stored as full matrices so that reading and re-writing a
//! file reproduces it byte for byte.

use std::path::Path;

use super::{write_atomic, Dec, Enc};
use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::so3::Rotation;

pub const SAMPLES_MAGIC: [u8; 4] = *b"SO3S";
pub const SAMPLES_VERSION: u32 = 1;
/// Orthogonality tolerance applied to stored matrices on load.
const LOAD_TOL: f64 = 1e-5;

pub fn write_samples<T: Real>(set: &SampleSet<T>) -> Vec<u8> {
    let mut e = Enc::default();
    e.bytes(&SAMPLES_MAGIC);
    e.u32(SAMPLES_VERSION);
    e.u64(set.len() as u64);
    e.u32(set.context_dim() as u32);
    e.u64(set.seed);
    e.u32(set.n_steps);
    e.u32(set.label.len() as u32);
    e.bytes(set.label.as_bytes());
    for (i, r) in set.rotations.iter().enumerate() {
        for v in r.to_array() {
            e.f64(v.to_f64_lossy());
        }
        for c in set.context(i) {
            e.f64(c.to_f64_lossy());
        }
    }
    e.buf
}

pub fn read_samples<T: Real>(bytes: &[u8]) -> Result<SampleSet<T>> {
    let mut d = Dec::new(bytes);
    if d.take(4)? != SAMPLES_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "not a sample set file (bad magic)".into(),
        });
    }
    let version = d.u32()?;
    if version != SAMPLES_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: SAMPLES_VERSION,
        });
    }
    let at = d.offset();
    let count = d.u64()?;
    let ctx_dim = d.u32()? as usize;
    let seed = d.u64()?;
    let n_steps = d.u32()?;
    let label_len = d.u32()? as usize;
    let label_at = d.offset();
    let label = std::str::from_utf8(d.take(label_len)?)
        .map_err(|_| Error::Format {
            offset: label_at,
            msg: "label is not UTF-8".into(),
        })?
        .to_string();
    let row = 8 * (9 + ctx_dim) as u64;
    let left = bytes.len() as u64 - d.offset();
    if count.saturating_mul(row) != left {
        return Err(Error::Format {
            offset: at,
            msg: format!(
                "count {count} needs {} bytes of rows, file has {left}",
                count.saturating_mul(row)
            ),
        });
    }
    let mut rots = Vec::with_capacity(count as usize);
    let mut ctx = Vec::with_capacity(count as usize * ctx_dim);
    for _ in 0..count {
        let at = d.offset();
        let mut m = [[T::zero(); 3]; 3];
        for r in m.iter_mut() {
            for v in r.iter_mut() {
                *v = T::of(d.f64()?);
            }
        }
        let rot = Rotation::from_matrix_tol(m, LOAD_TOL).map_err(|e| Error::Format {
            offset: at,
            msg: format!("invalid rotation: {e}"),
        })?;
        rots.push(rot);
        for _ in 0..ctx_dim {
            ctx.push(T::of(d.f64()?));
        }
    }
    d.finish()?;
    Ok(SampleSet::with_contexts(rots, ctx, ctx_dim, label)?.with_provenance(seed, n_steps))
}

pub fn save_samples<T: Real>(path: &Path, set: &SampleSet<T>) -> Result<()> {
    write_atomic(path, &write_samples(set))
}

pub fn load_samples<T: Real>(path: &Path) -> Result<SampleSet<T>> {
    read_samples(&std::fs::read(path)?)
}

/// Comma-separated export: `#` header lines, a column header, one row per sample.
pub fn write_samples_text<T: Real>(set: &SampleSet<T>) -> String {
    let mut s = format!(
        "# label={}\n# seed={}\n# n_steps={}\n# context_dim={}\n",
        set.label.replace('\n', " "),
        set.seed,
        set.n_steps,
        set.context_dim()
    );
    let mut cols: Vec<String> = (1..=3)
        .flat_map(|i| (1..=3).map(move |j| format!("r{i}{j}")))
        .collect();
    cols.extend((0..set.context_dim()).map(|k| format!("c{k}")));
    s.push_str(&cols.join(","));
    s.push('\n');
    for (i, r) in set.rotations.iter().enumerate() {
        let vals: Vec<String> = r
            .to_array()
            .iter()
            .chain(set.context(i))
            .map(|v| format!("{}", v.to_f64_lossy()))
            .collect();
        s.push_str(&vals.join(","));
        s.push('\n');
    }
    s
}

pub fn read_samples_text<T: Real>(text: &str) -> Result<SampleSet<T>> {
    let mut label = String::new();
    let (mut seed, mut n_steps, mut ctx_dim) = (0u64, 0u32, 0usize);
    let mut rots = Vec::new();
    let mut ctx = Vec::new();
    let mut header_seen = false;
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len() as u64;
        let line = line.trim_end_matches(['\n', '\r']);
        let bad = |msg: String| Error::Format { offset: at, msg };
        if let Some(meta) = line.strip_prefix("# ") {
            let (k, v) = meta
                .split_once('=')
                .ok_or_else(|| bad("malformed header".into()))?;
            let num = |v: &str| v.parse::<u64>().map_err(|e| bad(format!("{k}: {e}")));
            match k {
                "label" => label = v.to_string(),
                "seed" => seed = num(v)?,
                "n_steps" => n_steps = num(v)? as u32,
                "context_dim" => ctx_dim = num(v)? as usize,
                _ => return Err(bad(format!("unknown header key `{k}`"))),
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        let vals = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("bad number: {e}")))?;
        if vals.len() != 9 + ctx_dim {
            return Err(bad(format!(
                "expected {} columns, got {}",
                9 + ctx_dim,
                vals.len()
            )));
        }
        let mut m = [[T::zero(); 3]; 3];
        for (k, v) in vals[..9].iter().enumerate() {
            m[k / 3][k % 3] = T::of(*v);
        }
        rots.push(
            Rotation::from_matrix_tol(m, LOAD_TOL)
                .map_err(|e| bad(format!("invalid rotation: {e}")))?,
        );
        ctx.extend(vals[9..].iter().map(|v| T::of(*v)));
    }
    Ok(SampleSet::with_contexts(rots, ctx, ctx_dim, label)?.with_provenance(seed, n_steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::sample_uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(n: usize, ctx: bool) -> SampleSet<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let rots: Vec<Rotation> = (0..n).map(|_| sample_uniform(&mut r)).collect();
        if ctx {
            let c = (0..n).map(|i| (i % 2) as f64).collect();
            SampleSet::with_contexts(rots, c, 1, "two-blob").unwrap()
        } else {
            SampleSet::new(rots, "uniform")
        }
        .with_provenance(42, 100)
    }

    #[test]
    fn binary_round_trip_is_byte_identical() {
        for ctx in [false, true] {
            let s = set(17, ctx);
            let bytes = write_samples(&s);
            let back: SampleSet<f64> = read_samples(&bytes).unwrap();
            assert_eq!(back, s);
            assert_eq!(write_samples(&back), bytes);
        }
    }

    #[test]
    fn f32_sets_widen_and_narrow_exactly() {
        let s = set(5, true).cast::<f32>();
        let back: SampleSet<f32> = read_samples(&write_samples(&s)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn text_round_trip() {
        let s = set(9, true);
        let text = write_samples_text(&s);
        let back: SampleSet<f64> = read_samples_text(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(write_samples_text(&back), text);
    }

    #[test]
    fn corruption_is_reported_with_offsets() {
        let bytes = write_samples(&set(3, false));
        assert!(matches!(
            read_samples::<f64>(&bytes[..bytes.len() - 1]),
            Err(Error::Format { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_samples::<f64>(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            read_samples::<f64>(&bad),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
        // scale the first matrix entry so it is no longer a rotation
        let header = 4 + 4 + 8 + 4 + 8 + 4 + 4 + "uniform".len();
        let mut bad = bytes.clone();
        bad[header..header + 8].copy_from_slice(&3.0f64.to_le_bytes());
        match read_samples::<f64>(&bad) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, header as u64),
            other => panic!("{other:?}"),
        }
    }
}
