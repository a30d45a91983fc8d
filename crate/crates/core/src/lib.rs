//! Action-state consistency laboratory for world action models.
//!
//! Numeric building blocks (latents, actions, consistency scoring, selection weights and the
//! statistics battery) are generic over [`Scalar`]; the environments, synthetic models and the
//! experiment harness work in `f64`.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod consistency;
pub mod envs;
pub mod error;
pub mod harness;
pub mod primitives;
pub mod scalar;
pub mod selection;
pub mod stats;
pub mod wam;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type LatentVec = primitives::Latent<f64>;
pub type ActionVec = primitives::Action<f64>;
