//! Portable, counter-addressed random streams.
//!
//! Every stream is ChaCha8 keyed by a 256-bit key built from
//! `seed.to_le_bytes() ++ domain.to_le_bytes() ++ [0; 16]`, with the ChaCha
//! stream id set to the row index. A row's draws therefore depend only on
//! `(seed, domain, row)`, never on generation order or thread schedule.
//!
//! Uniforms take the top 53 bits of each `u64` output; normals use the
//! Box-Muller transform (cosine branch only, one normal per two uniforms).

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Domain tags separating independent uses of one seed.
pub mod domain {
    pub const BASE_NOISE: u64 = 1;
    pub const INTERFERENCE_NOISE: u64 = 2;
    pub const RANDOM_PERTURBATION: u64 = 3;
    pub const NORM_WEIGHTS: u64 = 4;
    /// Layered trajectories add `LAYER_STRIDE * (layer + 1)` to a base tag.
    pub const LAYER_STRIDE: u64 = 1 << 16;
}

pub struct RowStream {
    rng: ChaCha8Rng,
}

impl RowStream {
    pub fn new(seed: u64, domain: u64, row: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&domain.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(row);
        RowStream { rng }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64], scale: f64) {
        for v in out {
            *v = scale * self.normal();
        }
    }
}
