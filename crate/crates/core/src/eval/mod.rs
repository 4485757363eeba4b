//! Sample-quality metrics and summary statistics.

mod c2st;
mod ed;
mod ks;

pub use c2st::{c2st, c2st_with, C2stConfig, C2stReport, MIN_C2ST_SAMPLES};
pub use ed::{ed_correlation, jackknife_blocks, EdBin, RadialBin};
pub use ks::{kolmogorov_q, ks_one_sample, ks_two_sample, KsResult};
