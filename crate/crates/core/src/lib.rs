//! Dual-branch texture/depth expression classifier with mask attention and
//! importance-weighted feature fusion, built on a small reverse-mode tensor
//! engine.

pub mod autodiff;
pub mod error;
pub mod harness;
pub mod init;
pub mod model;
pub mod optim;
pub mod params;
pub mod preprocess;
pub mod rng;
pub mod tensor;

pub use autodiff::{Tape, Var};
pub use error::{Error, Result};
pub use params::ParamStore;
pub use tensor::Tensor;
