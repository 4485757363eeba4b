//! Score-based and denoising diffusion models on the rotation group SO(3).

pub mod data;
pub mod ddpm;
pub mod error;
pub mod eval;
pub mod igso3;
pub mod io;
pub mod nn;
pub mod ode;
pub mod real;
pub mod sgm;
pub mod so3;
pub mod targets;
pub mod train;

pub use error::{Error, Result};
pub use igso3::IgParams;
pub use real::Real;
pub use so3::{Quaternion, Rotation, SixD, TangentVector};

pub type Rotation64 = Rotation<f64>;
pub type Rotation32 = Rotation<f32>;
pub type Tangent64 = TangentVector<f64>;
pub type Tangent32 = TangentVector<f32>;
