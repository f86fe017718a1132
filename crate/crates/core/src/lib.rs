pub mod align;
pub mod condition;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod f2g;
pub mod f2t;
pub mod io;
pub mod linalg;
pub mod render;
pub mod metrics;
pub mod rng;
pub mod skeleton;
pub mod synthdata;
pub mod t2g;
pub mod vocab;

pub use error::{Error, Result};
