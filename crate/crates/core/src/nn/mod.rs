//! Minimal dense networks with exact gradients and Adam.

mod adam;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{Activation, Dense, ForwardCache, Mlp, LEAKY_SLOPE};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::so3::Rotation;

/// Number of features before the context: 9 matrix entries and `ln(noise)`.
pub const BASE_FEATURES: usize = 10;

/// `[r11, r12, ..., r33, ln(noise_level), context...]`.
pub fn featurize<T: Real>(x: &Rotation<T>, noise_level: T, context: &[T]) -> Vec<T> {
    let mut f = Vec::with_capacity(BASE_FEATURES + context.len());
    f.extend_from_slice(&x.to_array());
    f.push(noise_level.ln());
    f.extend_from_slice(context);
    f
}

/// Writes the features of `x` into one row of a batch matrix.
pub fn featurize_into<T: Real>(row: &mut [T], x: &Rotation<T>, noise_level: T, context: &[T]) {
    row[..9].copy_from_slice(&x.to_array());
    row[9] = noise_level.ln();
    row[BASE_FEATURES..BASE_FEATURES + context.len()].copy_from_slice(context);
}

/// Batch version of [`featurize`]; `contexts` is empty or has one entry per rotation.
pub fn featurize_batch<T: Real>(
    xs: &[Rotation<T>],
    noise_levels: &[T],
    contexts: &[&[T]],
    context_dim: usize,
) -> Result<Array2<T>> {
    if noise_levels.len() != xs.len() {
        return Err(Error::ShapeMismatch {
            expected: xs.len(),
            got: noise_levels.len(),
        });
    }
    if !(contexts.is_empty() && context_dim == 0) && contexts.len() != xs.len() {
        return Err(Error::ShapeMismatch {
            expected: xs.len(),
            got: contexts.len(),
        });
    }
    let mut out = Array2::zeros((xs.len(), BASE_FEATURES + context_dim));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let ctx: &[T] = if context_dim == 0 { &[] } else { contexts[i] };
        if ctx.len() != context_dim {
            return Err(Error::ShapeMismatch {
                expected: context_dim,
                got: ctx.len(),
            });
        }
        let row = row.as_slice_mut().expect("standard layout");
        featurize_into(row, &xs[i], noise_levels[i], ctx);
    }
    Ok(out)
}
