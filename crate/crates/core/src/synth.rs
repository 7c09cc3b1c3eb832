//! Seeded random numbers and synthetic frame sequences.
//!
//! All randomness flows through [`SeededRng`], a SplitMix64 generator. Uniform
//! reals use the top 53 bits of each output, so a given seed produces the same
//! values on every platform.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::SplitMix64;

use crate::error::Result;
use crate::tensor::{FrameSequence, Modality, Tensor};

#[derive(Debug, Clone)]
pub struct SeededRng(SplitMix64);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(SplitMix64::seed_from_u64(seed))
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn fill_uniform(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform(lo, hi)).collect()
    }
}

pub fn random_tensor(rng: &mut SeededRng, dims: &[usize], lo: f64, hi: f64) -> Result<Tensor> {
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), rng.fill_uniform(n, lo, hi))
}

/// Independent uniform `[0, 1)` frames.
pub fn random_sequence(rng: &mut SeededRng, len: usize, dims: &[usize]) -> Result<FrameSequence> {
    let frames = (0..len)
        .map(|_| random_tensor(rng, dims, 0.0, 1.0))
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, Modality::Feature)
}

/// Frames `ψ_t = t·v + ε_t` with a random direction `v` and Gaussian noise.
///
/// The noise deviation is chosen so that the RMS temporal deviation of the
/// trend over all elements is `snr` times the noise deviation.
pub fn trend_sequence(
    rng: &mut SeededRng,
    len: usize,
    dims: &[usize],
    snr: f64,
) -> Result<FrameSequence> {
    let n: usize = dims.iter().product();
    let direction = rng.fill_uniform(n, -1.0, 1.0);
    let rms_dir = (direction.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let lenf = len as f64;
    let time_std = ((lenf * lenf - 1.0) / 12.0).sqrt();
    let sigma = if time_std > 0.0 {
        rms_dir * time_std / snr
    } else {
        0.0
    };
    let frames = (1..=len)
        .map(|t| {
            let data = direction
                .iter()
                .map(|v| t as f64 * v + sigma * rng.normal())
                .collect();
            Tensor::new(dims.to_vec(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, Modality::Feature)
}

/// A bright `side`×`side` square sliding diagonally across a dark gray frame.
pub fn moving_square(len: usize, height: usize, width: usize, side: usize) -> Result<FrameSequence> {
    let frames = (0..len)
        .map(|t| {
            let top = t % (height.saturating_sub(side) + 1);
            let left = t % (width.saturating_sub(side) + 1);
            let mut data = vec![0.1; height * width];
            for y in top..(top + side).min(height) {
                for x in left..(left + side).min(width) {
                    data[y * width + x] = 0.9;
                }
            }
            Tensor::new(vec![1, height, width], data)
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, Modality::Gray)
}
