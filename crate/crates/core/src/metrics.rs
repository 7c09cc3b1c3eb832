//! Pairwise ranking accuracy, pooling throughput, and late score fusion.

use std::hint::black_box;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::pooling::{pool, MethodKind, PoolingMethod};
use crate::solver::score;
use crate::synth::{random_sequence, SeededRng};
use crate::tensor::{running_means, FrameSequence, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingReport {
    pub accuracy: f64,
    pub pairs_total: usize,
    pub pairs_correct: usize,
}

/// Fraction of frame pairs `q > t` whose running-mean scores satisfy
/// `S(q|d) > S(t|d)`. Ties count as wrong.
pub fn ranking_accuracy(d: &Tensor, seq: &FrameSequence) -> Result<RankingReport> {
    if seq.len() < 2 {
        return Err(Error::precondition(format!(
            "ranking accuracy needs at least 2 frames, got {}",
            seq.len()
        )));
    }
    let s = score(d, &running_means(seq))?;
    let mut correct = 0;
    for t in 0..s.len() {
        correct += s[t + 1..].iter().filter(|&&later| later > s[t]).count();
    }
    let total = s.len() * (s.len() - 1) / 2;
    Ok(RankingReport {
        accuracy: correct as f64 / total as f64,
        pairs_total: total,
        pairs_correct: correct,
    })
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub frames: usize,
    pub frame_dims: Vec<usize>,
    pub sequences: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            frames: 150,
            frame_dims: vec![3, 32, 32],
            sequences: 4,
            trials: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub method: MethodKind,
    pub frames_per_second: f64,
    /// Median wall time of one trial (all sequences).
    pub wall_seconds: f64,
    pub sequences: usize,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Times each method on the same seeded synthetic sequences, one method at a
/// time, and reports the median over trials.
pub fn bench(methods: &[PoolingMethod], cfg: &BenchConfig) -> Result<Vec<BenchReport>> {
    if cfg.frames < 2 {
        return Err(Error::precondition("bench needs sequences of at least 2 frames"));
    }
    if cfg.trials < 3 {
        return Err(Error::precondition(format!(
            "bench needs at least 3 trials, got {}",
            cfg.trials
        )));
    }
    if cfg.sequences == 0 {
        return Err(Error::precondition("bench needs at least one sequence"));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let data = (0..cfg.sequences)
        .map(|_| random_sequence(&mut rng, cfg.frames, &cfg.frame_dims))
        .collect::<Result<Vec<_>>>()?;

    methods
        .iter()
        .map(|method| {
            let mut times = Vec::with_capacity(cfg.trials);
            for _ in 0..cfg.trials {
                let start = Instant::now();
                for seq in &data {
                    black_box(pool(black_box(seq), method)?);
                }
                times.push(start.elapsed().as_secs_f64().max(1e-9));
            }
            let wall = median(times);
            Ok(BenchReport {
                method: method.kind(),
                frames_per_second: (cfg.sequences * cfg.frames) as f64 / wall,
                wall_seconds: wall,
                sequences: cfg.sequences,
            })
        })
        .collect()
}

/// Class scores of several streams for one sample; one row per stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows
            .first()
            .ok_or_else(|| Error::EmptyInput("score matrix has no streams".into()))?
            .len();
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::dims(&[cols], &[bad.len()]));
        }
        Ok(Self { rows })
    }

    pub fn streams(&self) -> usize {
        self.rows.len()
    }

    pub fn classes(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Averages stream scores, optionally weighted (normalized by the weight sum).
pub fn fuse_scores(m: &ScoreMatrix, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let uniform;
    let weights = match weights {
        Some(w) => {
            if w.len() != m.streams() {
                return Err(Error::dims(&[m.streams()], &[w.len()]));
            }
            if w.iter().any(|&x| x.is_nan() || x < 0.0 || x.is_infinite()) {
                return Err(Error::precondition("fusion weights must be finite and nonnegative"));
            }
            w
        }
        None => {
            uniform = vec![1.0; m.streams()];
            &uniform
        }
    };
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::precondition("fusion weights must not all be zero"));
    }
    let mut out = vec![0.0; m.classes()];
    for (row, &w) in m.rows().iter().zip(weights) {
        for (o, &x) in out.iter_mut().zip(row) {
            *o += w * x;
        }
    }
    Ok(out.into_iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::ArpVariant;

    fn ramp(len: usize) -> FrameSequence {
        let rows: Vec<Vec<f64>> = (1..=len).map(|t| vec![t as f64, 0.5]).collect();
        FrameSequence::from_rows(&rows).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let seq = ramp(6);
        let d = Tensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let r = ranking_accuracy(&d, &seq).unwrap();
        assert_eq!((r.accuracy, r.pairs_correct, r.pairs_total), (1.0, 15, 15));

        let zero = Tensor::zeros(&[2]).unwrap();
        assert_eq!(ranking_accuracy(&zero, &seq).unwrap().accuracy, 0.0);

        let neg = d.scale(-1.0).unwrap();
        assert_eq!(ranking_accuracy(&neg, &seq).unwrap().accuracy, 0.0);
        assert_eq!(ranking_accuracy(&d, &seq.reversed()).unwrap().accuracy, 0.0);
    }

    #[test]
    fn accuracy_needs_pairs() {
        let one = ramp(1);
        let d = Tensor::zeros(&[2]).unwrap();
        assert!(matches!(
            ranking_accuracy(&d, &one),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn fuse_examples() {
        let one = ScoreMatrix::new(vec![vec![0.2, 0.7, 0.1]]).unwrap();
        assert_eq!(fuse_scores(&one, None).unwrap(), vec![0.2, 0.7, 0.1]);

        let two = ScoreMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(fuse_scores(&two, None).unwrap(), vec![0.5, 0.5]);

        let m = ScoreMatrix::new(vec![vec![0.3, 0.1], vec![9.0, 4.0]]).unwrap();
        assert_eq!(fuse_scores(&m, Some(&[2.0, 0.0])).unwrap(), vec![0.3, 0.1]);
    }

    #[test]
    fn fuse_errors() {
        assert!(ScoreMatrix::new(vec![]).is_err());
        assert!(matches!(
            ScoreMatrix::new(vec![vec![1.0], vec![1.0, 2.0]]),
            Err(Error::Dimension { .. })
        ));
        let m = ScoreMatrix::new(vec![vec![1.0], vec![2.0]]).unwrap();
        assert!(fuse_scores(&m, Some(&[1.0])).is_err());
        assert!(fuse_scores(&m, Some(&[0.0, 0.0])).is_err());
        assert!(fuse_scores(&m, Some(&[-1.0, 2.0])).is_err());
    }

    #[test]
    fn bench_rejects_too_few_trials() {
        let cfg = BenchConfig {
            trials: 1,
            ..BenchConfig::default()
        };
        assert!(bench(&[PoolingMethod::Mean], &cfg).is_err());
    }

    #[test]
    fn bench_reports_consistent_throughput() {
        let cfg = BenchConfig {
            frames: 20,
            frame_dims: vec![1, 8, 8],
            sequences: 2,
            trials: 3,
            seed: 1,
        };
        let reports = bench(&[PoolingMethod::Arp(ArpVariant::Avg), PoolingMethod::Max], &cfg)
            .unwrap();
        assert_eq!(reports.len(), 2);
        for r in &reports {
            assert!(r.frames_per_second > 0.0);
            let implied = 40.0 / r.wall_seconds;
            assert!((implied - r.frames_per_second).abs() <= 1e-9 * implied);
        }
        assert_eq!(reports[0].method, MethodKind::ArpAvg);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
