//! Reproducible random streams.
//!
//! A stream is addressed by `(seed, stream index, role)`. The seed and role
//! select a ChaCha8 key, and the stream index selects ChaCha's 64-bit stream
//! counter, so every triple yields its own non-overlapping keystream. Nothing
//! depends on thread scheduling: a worker opens the streams of the realization
//! it owns and consumes them sequentially.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// What a stream is used for. Brownian increments and Metropolis coins never
/// share a keystream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamRole {
    Brownian,
    /// Acceptance uniforms; `lane` separates independent chains that share a
    /// Brownian path (one lane per step size in a convergence study).
    MetropolisUniform { lane: u32 },
    /// Initial-condition draws.
    InitialCondition,
}

impl StreamRole {
    fn code(self) -> u64 {
        match self {
            StreamRole::Brownian => 1,
            StreamRole::MetropolisUniform { lane } => 2 | ((lane as u64) << 8),
            StreamRole::InitialCondition => 3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            StreamRole::Brownian => "brownian",
            StreamRole::MetropolisUniform { .. } => "metropolis-uniform",
            StreamRole::InitialCondition => "initial-condition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStreamSpec {
    pub seed: u64,
    pub stream: u64,
    pub role: StreamRole,
}

impl RngStreamSpec {
    pub fn new(seed: u64, stream: u64, role: StreamRole) -> Self {
        Self { seed, stream, role }
    }

    /// Same seed and stream index, different role.
    pub fn with_role(self, role: StreamRole) -> Self {
        Self { role, ..self }
    }

    pub fn open(&self) -> RandomStream {
        let mut state = self.seed ^ self.role.code().wrapping_mul(0xD6E8_FEB8_6659_FD93);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        RandomStream { rng }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A single sequential random stream. Not shared between threads.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    /// Standard normal deviate.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform deviate on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// `n` independent standard normals.
pub fn draw_gaussian_vector(stream: &mut RandomStream, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    stream.fill_normal(&mut v);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_triple_same_output() {
        let spec = RngStreamSpec::new(42, 7, StreamRole::Brownian);
        let a = draw_gaussian_vector(&mut spec.open(), 16);
        let b = draw_gaussian_vector(&mut spec.open(), 16);
        assert_eq!(a, b);
    }

    #[test]
    fn triples_are_distinct() {
        let base = RngStreamSpec::new(42, 7, StreamRole::Brownian);
        let variants = [
            base,
            RngStreamSpec { seed: 43, ..base },
            RngStreamSpec { stream: 8, ..base },
            base.with_role(StreamRole::MetropolisUniform { lane: 0 }),
            base.with_role(StreamRole::MetropolisUniform { lane: 1 }),
            base.with_role(StreamRole::InitialCondition),
        ];
        let firsts: Vec<u64> = variants.iter().map(|s| s.open().next_u64()).collect();
        for i in 0..firsts.len() {
            for j in i + 1..firsts.len() {
                assert_ne!(firsts[i], firsts[j], "{:?} vs {:?}", variants[i], variants[j]);
            }
        }
    }

    #[test]
    fn gaussian_moments() {
        let n = 100_000;
        let v = draw_gaussian_vector(&mut RngStreamSpec::new(1, 0, StreamRole::Brownian).open(), n);
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn uniforms_in_unit_interval() {
        let mut s = RngStreamSpec::new(3, 1, StreamRole::MetropolisUniform { lane: 0 }).open();
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
