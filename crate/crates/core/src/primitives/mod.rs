//! Deterministic numerical primitives: latents, actions, distances and seeded streams.

pub mod action;
pub mod latent;
pub mod rng;

pub use action::{wrap_angle, Action};
pub use latent::{mean_latent, mse_distance, Latent};
pub use rng::{derive_stream, hash_label, RngStream, StreamLabel};
