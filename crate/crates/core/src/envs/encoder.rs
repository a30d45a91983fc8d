use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::TaskSpec;
use crate::primitives::{hash_label, Latent};
use crate::LatentVec;

/// Pre-activation scale applied after normalizing the state by the arena half-width.
const GAIN: f64 = 0.5;
/// Latents are clipped to this magnitude before `atanh` when decoding.
const DECODE_CLIP: f64 = 1.0 - 1e-12;

/// Fixed per-task map `z = tanh(GAIN · W · x / arena)`.
///
/// `W` is a `D × S` Gaussian matrix seeded from the task id, so it has full column rank with
/// probability one and the encoder is injective on the arena.
#[derive(Clone, Debug)]
pub struct LatentEncoder {
    map: DMatrix<f64>,
    pinv: DMatrix<f64>,
    scale: f64,
}

impl LatentEncoder {
    pub fn for_task(spec: &TaskSpec) -> Self {
        Self::seeded(hash_label(&spec.task_id), spec.latent_dim, spec.state_dim(), spec.arena)
    }

    pub fn seeded(seed: u64, latent_dim: usize, state_dim: usize, arena: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = (state_dim as f64).sqrt();
        let map = DMatrix::from_fn(latent_dim, state_dim, |_, _| {
            let x: f64 = StandardNormal.sample(&mut rng);
            x / norm
        });
        let pinv = map
            .clone()
            .pseudo_inverse(1e-12)
            .expect("pseudo-inverse of a finite matrix");
        LatentEncoder {
            map,
            pinv,
            scale: GAIN / arena,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.map.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.map.ncols()
    }

    pub fn encode(&self, physical: &[f64]) -> LatentVec {
        assert_eq!(physical.len(), self.state_dim(), "state dimension");
        let x = DVector::from_iterator(physical.len(), physical.iter().map(|v| v * self.scale));
        let pre = &self.map * x;
        Latent::new(pre.iter().map(|v| v.tanh()).collect()).expect("tanh of finite input is finite")
    }

    /// Least-squares preimage: the physical state whose encoding is closest (in pre-activation
    /// space) to `latent`.
    pub fn decode(&self, latent: &LatentVec) -> Vec<f64> {
        let pre = DVector::from_iterator(
            latent.dim(),
            latent.iter().map(|z| z.clamp(-DECODE_CLIP, DECODE_CLIP).atanh()),
        );
        (&self.pinv * pre).iter().map(|v| v / self.scale).collect()
    }
}
