//! Containers for sample sets and oriented point clouds.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::so3::{Rotation, Vec3};

/// Rotations with optional per-sample context vectors of a shared dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet<T: Real = f64> {
    pub rotations: Vec<Rotation<T>>,
    contexts: Vec<T>,
    context_dim: usize,
    pub label: String,
    /// Seed of the run that produced the set.
    pub seed: u64,
    /// Integration or chain steps used to produce the set; 0 if not applicable.
    pub n_steps: u32,
}

impl<T: Real> SampleSet<T> {
    pub fn new(rotations: Vec<Rotation<T>>, label: impl Into<String>) -> Self {
        SampleSet {
            rotations,
            contexts: Vec::new(),
            context_dim: 0,
            label: label.into(),
            seed: 0,
            n_steps: 0,
        }
    }

    /// `contexts` is row-major with `context_dim` values per rotation.
    pub fn with_contexts(
        rotations: Vec<Rotation<T>>,
        contexts: Vec<T>,
        context_dim: usize,
        label: impl Into<String>,
    ) -> Result<Self> {
        if contexts.len() != rotations.len() * context_dim {
            return Err(Error::ShapeMismatch {
                expected: rotations.len() * context_dim,
                got: contexts.len(),
            });
        }
        Ok(SampleSet {
            rotations,
            contexts,
            context_dim,
            label: label.into(),
            seed: 0,
            n_steps: 0,
        })
    }

    pub fn with_provenance(mut self, seed: u64, n_steps: u32) -> Self {
        self.seed = seed;
        self.n_steps = n_steps;
        self
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn context(&self, i: usize) -> &[T] {
        &self.contexts[i * self.context_dim..(i + 1) * self.context_dim]
    }

    pub fn contexts_flat(&self) -> &[T] {
        &self.contexts
    }

    /// Subset whose context equals `ctx` exactly.
    pub fn filter_context(&self, ctx: &[T]) -> SampleSet<T> {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.context(i) == ctx)
            .collect();
        SampleSet {
            rotations: keep.iter().map(|&i| self.rotations[i]).collect(),
            contexts: keep
                .iter()
                .flat_map(|&i| self.context(i).to_vec())
                .collect(),
            context_dim: self.context_dim,
            label: self.label.clone(),
            seed: self.seed,
            n_steps: self.n_steps,
        }
    }

    pub fn cast<U: Real>(&self) -> SampleSet<U> {
        SampleSet {
            rotations: self.rotations.iter().map(|r| r.cast()).collect(),
            contexts: self
                .contexts
                .iter()
                .map(|c| U::of(c.to_f64_lossy()))
                .collect(),
            context_dim: self.context_dim,
            label: self.label.clone(),
            seed: self.seed,
            n_steps: self.n_steps,
        }
    }
}

/// Positions with one unit orientation axis per point.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientedPointCloud {
    pub positions: Vec<Vec3<f64>>,
    pub axes: Vec<Vec3<f64>>,
}

impl OrientedPointCloud {
    pub fn new(positions: Vec<Vec3<f64>>, axes: Vec<Vec3<f64>>) -> Result<Self> {
        if positions.len() != axes.len() {
            return Err(Error::ShapeMismatch {
                expected: positions.len(),
                got: axes.len(),
            });
        }
        for a in &axes {
            let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "orientation axes must be unit vectors (norm {n})"
                )));
            }
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite position".into()));
        }
        Ok(OrientedPointCloud { positions, axes })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contexts_are_checked_and_sliced() {
        let r = vec![Rotation::<f64>::identity(); 3];
        assert!(SampleSet::with_contexts(r.clone(), vec![0.0; 5], 2, "x").is_err());
        let s = SampleSet::with_contexts(r, vec![0.0, 1.0, 2.0, 3.0, 0.0, 1.0], 2, "x").unwrap();
        assert_eq!(s.context(1), &[2.0, 3.0]);
        assert_eq!(s.filter_context(&[0.0, 1.0]).len(), 2);
    }

    #[test]
    fn cloud_rejects_non_unit_axes() {
        assert!(OrientedPointCloud::new(vec![[0.0; 3]], vec![[1.0, 1.0, 0.0]]).is_err());
        assert!(OrientedPointCloud::new(vec![[0.0; 3]], vec![[0.0, 1.0, 0.0]]).is_ok());
        assert!(OrientedPointCloud::new(vec![], vec![[0.0, 1.0, 0.0]]).is_err());
    }
}
