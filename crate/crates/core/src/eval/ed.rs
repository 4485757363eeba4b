//! Ellipticity-direction correlation of an oriented point cloud.
//!
//! For each ordered pair `(i, j)` whose separation falls in a radial bin,
//! the statistic accumulates `|e_i . r_ij|^2` with `r_ij` the unit vector
//! from `i` to `j`. The bin value is the mean over contributing pairs minus
//! 1/3, which vanishes for isotropic axes.

use crate::data::OrientedPointCloud;
use crate::error::{Error, Result};
use crate::so3::vec3;

/// Separation interval `(lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialBin {
    pub lo: f64,
    pub hi: f64,
}

/// Estimate for one bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdBin {
    pub omega: f64,
    /// Delete-one-block jackknife standard error; NaN with fewer than two usable replicates.
    pub err: f64,
    /// Ordered pairs that contributed.
    pub pairs: u64,
}

fn validate_bins(bins: &[RadialBin]) -> Result<()> {
    if bins.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one radial bin is required".into(),
        ));
    }
    for b in bins {
        if !(b.lo >= 0.0 && b.hi > b.lo && b.hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bin ({}, {}] must satisfy 0 <= lo < hi",
                b.lo, b.hi
            )));
        }
    }
    let mut sorted = bins.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    if sorted.windows(2).any(|w| w[1].lo < w[0].hi) {
        return Err(Error::InvalidArgument("radial bins overlap".into()));
    }
    Ok(())
}

/// Block label of each point.
///
/// Eight blocks are the octants about the bounding-box centre. Any other count
/// gives slabs of (nearly) equal population along the first coordinate.
pub fn jackknife_blocks(cloud: &OrientedPointCloud, n_blocks: usize) -> Vec<usize> {
    let n = cloud.len();
    if n_blocks == 8 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &cloud.positions {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let mid: Vec<f64> = (0..3).map(|d| 0.5 * (lo[d] + hi[d])).collect();
        cloud
            .positions
            .iter()
            .map(|p| (0..3).map(|d| usize::from(p[d] >= mid[d]) << d).sum())
            .collect()
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| cloud.positions[a][0].total_cmp(&cloud.positions[b][0]));
        let mut out = vec![0; n];
        for (rank, &i) in idx.iter().enumerate() {
            out[i] = rank * n_blocks / n;
        }
        out
    }
}

/// `None` marks a bin without any contributing pair.
pub fn ed_correlation(
    cloud: &OrientedPointCloud,
    bins: &[RadialBin],
    n_jackknife: usize,
) -> Result<Vec<Option<EdBin>>> {
    if cloud.len() < 2 {
        return Err(Error::InvalidArgument("need at least two points".into()));
    }
    if n_jackknife < 2 {
        return Err(Error::InvalidArgument(
            "need at least two jackknife blocks".into(),
        ));
    }
    validate_bins(bins)?;
    let blocks = jackknife_blocks(cloud, n_jackknife);
    let nb = bins.len();
    let mut sum = vec![0.0; nb];
    let mut count = vec![0u64; nb];
    // per block: pairs touching that block
    let mut bsum = vec![vec![0.0; nb]; n_jackknife];
    let mut bcount = vec![vec![0u64; nb]; n_jackknife];

    let pos = &cloud.positions;
    for i in 0..pos.len() {
        for j in (i + 1)..pos.len() {
            let d = vec3::sub(&pos[j], &pos[i]);
            let r = vec3::norm(&d);
            let Some(b) = bins.iter().position(|b| r > b.lo && r <= b.hi) else {
                continue;
            };
            let u = vec3::scale(&d, 1.0 / r);
            // both orientations of the pair: |e_i . r_ij|^2 and |e_j . r_ji|^2
            let s = vec3::dot(&cloud.axes[i], &u).powi(2) + vec3::dot(&cloud.axes[j], &u).powi(2);
            sum[b] += s;
            count[b] += 2;
            let (bi, bj) = (blocks[i], blocks[j]);
            bsum[bi][b] += s;
            bcount[bi][b] += 2;
            if bj != bi {
                bsum[bj][b] += s;
                bcount[bj][b] += 2;
            }
        }
    }

    Ok((0..nb)
        .map(|b| {
            if count[b] == 0 {
                return None;
            }
            let omega = sum[b] / count[b] as f64 - 1.0 / 3.0;
            let reps: Vec<f64> = (0..n_jackknife)
                .filter(|&k| count[b] > bcount[k][b])
                .map(|k| (sum[b] - bsum[k][b]) / (count[b] - bcount[k][b]) as f64 - 1.0 / 3.0)
                .collect();
            let err = if reps.len() < 2 {
                f64::NAN
            } else {
                let k = reps.len() as f64;
                let mean = reps.iter().sum::<f64>() / k;
                ((k - 1.0) / k * reps.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
            };
            Some(EdBin {
                omega,
                err,
                pairs: count[b],
            })
        })
        .collect())
}
