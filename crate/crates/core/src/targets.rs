//! Synthetic target distributions on SO(3).
//!
//! All targets are described through the canonical-axis decomposition
//! `R = Rz(azimuth) Ry(polar) Rz(tilt)`. Under the Haar measure
//! `(azimuth, cos polar, tilt)` is uniform on `[-pi, pi) x [-1, 1] x [-pi, pi)`,
//! which makes the cell and band constructions below easy to reason about.

use std::f64::consts::PI;

use rand::Rng;

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::igso3::{self, IgParams};
use crate::real::Real;
use crate::so3::{
    canonical_axis, from_canonical_axis, rot_x, rot_y, sample_uniform, CanonicalAxis, Rotation,
};

/// Checkerboard cells along azimuth, cos(polar) and tilt.
pub const CHECKER_CELLS: [usize; 3] = [8, 4, 4];
/// Scale of each component of the four-Gaussians mixture.
pub const FOUR_GAUSSIANS_EPS: f64 = 0.05;
/// Centres of the stripes in cos(polar).
pub const STRIPE_CENTERS: [f64; 3] = [-0.6, 0.0, 0.6];
pub const STRIPE_HALF_WIDTH: f64 = 0.1;
/// Scale of each blob of the conditional two-blob target.
pub const TWO_BLOB_EPS: f64 = 0.05;

/// Named targets known to the tooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Checkerboard,
    FourGaussians,
    ThreeStripes,
    /// Context-conditioned: a one-bit context picks one of two blobs.
    TwoBlob,
}

impl Target {
    pub const ALL: [Target; 4] = [
        Target::Checkerboard,
        Target::FourGaussians,
        Target::ThreeStripes,
        Target::TwoBlob,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::Checkerboard => "checkerboard",
            Target::FourGaussians => "four-gaussians",
            Target::ThreeStripes => "three-stripes",
            Target::TwoBlob => "two-blob",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::UnknownTarget {
                name: name.to_string(),
                valid: Self::ALL.map(Target::name).join(", "),
            })
    }

    pub fn context_dim(self) -> usize {
        match self {
            Target::TwoBlob => 1,
            _ => 0,
        }
    }

    pub fn sample<T: Real, R: Rng + ?Sized>(self, n: usize, rng: &mut R) -> Result<SampleSet<T>> {
        match self {
            Target::Checkerboard => sample_checkerboard(n, rng),
            Target::FourGaussians => sample_four_gaussians(n, rng),
            Target::ThreeStripes => sample_three_stripes(n, rng),
            Target::TwoBlob => sample_two_blob(n, rng),
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidArgument(
            "sample count must be at least 1".into(),
        ))
    } else {
        Ok(())
    }
}

/// Cell indices of a rotation on the checkerboard grid.
pub fn checker_cell<T: Real>(r: &Rotation<T>) -> [usize; 3] {
    let c = canonical_axis(r);
    let unit = |v: f64, lo: f64, hi: f64, n: usize| {
        let k = ((v - lo) / (hi - lo) * n as f64).floor();
        (k.max(0.0) as usize).min(n - 1)
    };
    [
        unit(c.azimuth.to_f64_lossy(), -PI, PI, CHECKER_CELLS[0]),
        unit(c.polar.to_f64_lossy().cos(), -1.0, 1.0, CHECKER_CELLS[1]),
        unit(c.tilt.to_f64_lossy(), -PI, PI, CHECKER_CELLS[2]),
    ]
}

/// True on the "black" cells of the checkerboard.
pub fn in_checkerboard<T: Real>(r: &Rotation<T>) -> bool {
    checker_cell(r).iter().sum::<usize>() % 2 == 0
}

/// Haar draws accepted on even-parity cells; half of all proposals survive.
pub fn sample_checkerboard<T: Real, R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
) -> Result<SampleSet<T>> {
    check_n(n)?;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let r = sample_uniform(rng);
        if in_checkerboard(&r) {
            out.push(r);
        }
    }
    Ok(SampleSet::new(out, Target::Checkerboard.name()))
}

/// Means of the four-Gaussians mixture: canonical axis at +z, -z, +x, -x.
pub fn four_gaussian_means<T: Real>() -> [Rotation<T>; 4] {
    let half = T::of(PI / 2.0);
    [
        Rotation::identity(),
        rot_y(T::of(PI)),
        rot_y(half),
        rot_y(-half),
    ]
}

pub fn sample_four_gaussians<T: Real, R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
) -> Result<SampleSet<T>> {
    sample_four_gaussians_with(n, T::of(FOUR_GAUSSIANS_EPS), rng)
}

/// Equal-weight mixture of `IG(mu_k, eps0)` over [`four_gaussian_means`].
pub fn sample_four_gaussians_with<T: Real, R: Rng + ?Sized>(
    n: usize,
    eps0: T,
    rng: &mut R,
) -> Result<SampleSet<T>> {
    check_n(n)?;
    let means = four_gaussian_means::<T>();
    let out = (0..n)
        .map(|_| {
            let k = rng.random_range(0..means.len());
            igso3::sample(&IgParams::new(means[k], eps0)?, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet::new(out, Target::FourGaussians.name()))
}

/// Canonical axis uniform within three bands of cos(polar); azimuth and tilt uniform.
pub fn sample_three_stripes<T: Real, R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
) -> Result<SampleSet<T>> {
    check_n(n)?;
    let out = (0..n)
        .map(|_| {
            let c = STRIPE_CENTERS[rng.random_range(0..STRIPE_CENTERS.len())];
            let z = c + STRIPE_HALF_WIDTH * (2.0 * rng.random::<f64>() - 1.0);
            let azimuth = PI * (2.0 * rng.random::<f64>() - 1.0);
            let tilt = PI * (2.0 * rng.random::<f64>() - 1.0);
            from_canonical_axis(&CanonicalAxis {
                azimuth: T::of(azimuth),
                polar: T::of(z.acos()),
                tilt: T::of(tilt),
            })
        })
        .collect();
    Ok(SampleSet::new(out, Target::ThreeStripes.name()))
}

/// The blob selected by context bit `bit`.
pub fn two_blob_params<T: Real>(bit: bool) -> IgParams<T> {
    let mu = if bit {
        rot_x(T::of(0.75 * PI))
    } else {
        Rotation::identity()
    };
    IgParams {
        mu,
        eps: T::of(TWO_BLOB_EPS),
    }
}

/// Fair coin per sample for the context bit, then a draw from its blob.
pub fn sample_two_blob<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SampleSet<T>> {
    check_n(n)?;
    let mut rots = Vec::with_capacity(n);
    let mut ctx = Vec::with_capacity(n);
    for _ in 0..n {
        let bit = rng.random::<bool>();
        rots.push(igso3::sample(&two_blob_params(bit), rng)?);
        ctx.push(if bit { T::one() } else { T::zero() });
    }
    SampleSet::with_contexts(rots, ctx, 1, Target::TwoBlob.name())
}

/// Unconditional draws from a single blob of the two-blob target.
pub fn sample_blob<T: Real, R: Rng + ?Sized>(
    bit: bool,
    n: usize,
    rng: &mut R,
) -> Result<SampleSet<T>> {
    check_n(n)?;
    let rots = igso3::sample_n(&two_blob_params(bit), n, rng)?;
    Ok(SampleSet::new(rots, if bit { "blob-1" } else { "blob-0" }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::geodesic_angle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn names_round_trip() {
        for t in Target::ALL {
            assert_eq!(Target::from_name(t.name()).unwrap(), t);
        }
        match Target::from_name("moons") {
            Err(Error::UnknownTarget { valid, .. }) => assert!(valid.contains("checkerboard")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn checkerboard_accepts_half_of_haar() {
        let mut r = rng(1);
        let n = 40_000;
        let hits = (0..n)
            .filter(|_| in_checkerboard(&sample_uniform::<f64, _>(&mut r)))
            .count();
        let p = hits as f64 / n as f64;
        assert!((p - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(), "{p}");
    }

    #[test]
    fn checkerboard_cells_are_equally_filled() {
        let s = sample_checkerboard::<f64, _>(64_000, &mut rng(2)).unwrap();
        let mut counts = std::collections::HashMap::new();
        for r in &s.rotations {
            assert!(in_checkerboard(r));
            *counts.entry(checker_cell(r)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 64);
        for c in counts.values() {
            assert!((*c as f64 - 1000.0).abs() < 150.0, "{c}");
        }
    }

    #[test]
    fn four_gaussians_collapse_onto_means() {
        let s = sample_four_gaussians_with::<f64, _>(400, 1e-6, &mut rng(3)).unwrap();
        let means = four_gaussian_means::<f64>();
        let mut seen = [0usize; 4];
        for r in &s.rotations {
            let (k, d) = means
                .iter()
                .enumerate()
                .map(|(k, m)| (k, geodesic_angle(m, r)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            assert!(d < 1e-2);
            seen[k] += 1;
        }
        assert!(seen.iter().all(|&c| c > 60));
    }

    #[test]
    fn stripes_stay_in_bands() {
        let s = sample_three_stripes::<f64, _>(5000, &mut rng(4)).unwrap();
        for r in &s.rotations {
            let z = canonical_axis(r).polar.cos();
            assert!(STRIPE_CENTERS
                .iter()
                .any(|c| (z - c).abs() <= STRIPE_HALF_WIDTH + 1e-9));
        }
    }

    #[test]
    fn two_blob_context_matches_blob() {
        let s = sample_two_blob::<f64, _>(2000, &mut rng(5)).unwrap();
        assert_eq!(s.context_dim(), 1);
        let closer = (0..s.len())
            .filter(|&i| {
                let bit = s.context(i)[0] == 1.0;
                let r = &s.rotations[i];
                geodesic_angle(r, &two_blob_params::<f64>(bit).mu)
                    < geodesic_angle(r, &two_blob_params::<f64>(!bit).mu)
            })
            .count();
        assert!(closer as f64 > 0.995 * s.len() as f64, "{closer}");
        let ones = s.contexts_flat().iter().filter(|c| **c == 1.0).count();
        assert!((ones as f64 - 1000.0).abs() < 150.0);
    }

    #[test]
    fn zero_count_is_rejected() {
        for t in Target::ALL {
            assert!(t.sample::<f64, _>(0, &mut rng(6)).is_err());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        for t in Target::ALL {
            let a = t.sample::<f64, _>(50, &mut rng(7)).unwrap();
            let b = t.sample::<f64, _>(50, &mut rng(7)).unwrap();
            assert_eq!(a, b);
        }
    }
}
