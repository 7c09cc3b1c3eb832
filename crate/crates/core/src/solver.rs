//! Exact rank pooling by subgradient descent on the pairwise ranking objective
//!
//! ```text
//! E(d) = λ/2 ‖d‖² + 2/(T(T-1)) Σ_{q>t} max(0, 1 - S(q|d) + S(t|d)),   S(t|d) = ⟨d, V_t⟩
//! ```
//!
//! where `V_t` are the running means of the frames. Descent starts at `d = 0`,
//! so the first iterate is a positive multiple of the approximate rank pooling
//! output with the `avg` weights.

use crate::error::{Error, Result};
use crate::pooling::{DynamicImage, MethodKind};
use crate::tensor::{dot, running_means, FrameSequence, RunningMeanSequence, Tensor};

/// Step retries allowed when a step would increase the objective.
pub const MAX_HALVINGS: usize = 20;
/// Slack on the non-increase test for accepted steps.
pub const INCREASE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub step_size: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            step_size: 1e-3,
            max_iters: 300,
            rel_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::precondition(format!("{name} must be positive, got {v}")))
            }
        };
        positive("lambda", self.lambda)?;
        positive("step size", self.step_size)?;
        positive("relative tolerance", self.rel_tol)?;
        if self.max_iters == 0 {
            return Err(Error::precondition("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankModel {
    pub d: Tensor,
    pub lambda: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_pairs(len: usize) -> Result<()> {
    if len < 2 {
        return Err(Error::precondition(format!(
            "ranking needs at least 2 frames, got {len}"
        )));
    }
    Ok(())
}

/// `S[t] = ⟨d, V_t⟩` for every running mean.
pub fn score(d: &Tensor, means: &RunningMeanSequence) -> Result<Vec<f64>> {
    means.means().iter().map(|m| d.dot(m)).collect()
}

fn scores_unchecked(d: &[f64], means: &RunningMeanSequence) -> Vec<f64> {
    means.means().iter().map(|m| dot(d, m.data())).collect()
}

fn pair_scale(len: usize) -> f64 {
    (len * (len - 1)) as f64
}

fn objective_unchecked(d: &[f64], means: &RunningMeanSequence, lambda: f64) -> f64 {
    let s = scores_unchecked(d, means);
    let mut hinge = 0.0;
    for t in 0..s.len() {
        for q in t + 1..s.len() {
            hinge += (1.0 - s[q] + s[t]).max(0.0);
        }
    }
    0.5 * lambda * dot(d, d) + 2.0 * hinge / pair_scale(s.len())
}

/// The ranking objective `E(d)` over the sequence's running means.
pub fn rank_objective(d: &Tensor, seq: &FrameSequence, lambda: f64) -> Result<f64> {
    check_pairs(seq.len())?;
    if d.dims() != seq.frame_dims() {
        return Err(Error::dims(seq.frame_dims(), d.dims()));
    }
    Ok(objective_unchecked(d.data(), &running_means(seq), lambda))
}

/// Per-mean weights `w` with `Σ_{violated q>t} (V_t - V_q) = Σ_t w[t] V_t`.
fn violation_weights(scores: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; scores.len()];
    for t in 0..scores.len() {
        for q in t + 1..scores.len() {
            if 1.0 - scores[q] + scores[t] > 0.0 {
                w[t] += 1.0;
                w[q] -= 1.0;
            }
        }
    }
    w
}

fn subgradient_unchecked(d: &[f64], means: &RunningMeanSequence, lambda: f64) -> Vec<f64> {
    let len = means.len();
    let w = violation_weights(&scores_unchecked(d, means));
    let scale = pair_scale(len);
    let mut g: Vec<f64> = d.iter().map(|x| lambda * x).collect();
    for (m, wt) in means.means().iter().zip(w) {
        if wt == 0.0 {
            continue;
        }
        let c = 2.0 * wt / scale;
        for (gi, &vi) in g.iter_mut().zip(m.data()) {
            *gi += c * vi;
        }
    }
    g
}

/// Subgradient of `E` at `d`; a pair counts as violated when its hinge
/// argument is strictly positive.
pub fn subgradient(d: &Tensor, means: &RunningMeanSequence, lambda: f64) -> Result<Tensor> {
    check_pairs(means.len())?;
    if d.dims() != means.means()[0].dims() {
        return Err(Error::dims(means.means()[0].dims(), d.dims()));
    }
    Tensor::from_kernel(d.dims().to_vec(), subgradient_unchecked(d.data(), means, lambda))
}

/// Solves for the ranking hyperplane `d*` with fixed-step subgradient descent
/// from zero, halving the step whenever it would raise the objective.
pub fn rank_pool_exact(
    seq: &FrameSequence,
    cfg: &SolverConfig,
) -> Result<(DynamicImage, RankModel)> {
    cfg.validate()?;
    check_pairs(seq.len())?;
    let means = running_means(seq);

    let mut d = vec![0.0; seq.frame_len()];
    let mut objective = objective_unchecked(&d, &means, cfg.lambda);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        let g = subgradient_unchecked(&d, &means, cfg.lambda);
        if g.iter().all(|&x| x == 0.0) {
            converged = true;
            break;
        }

        let mut step = cfg.step_size;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = d.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
            let value = objective_unchecked(&trial, &means, cfg.lambda);
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "objective became {value} at iteration {}",
                    iterations + 1
                )));
            }
            if value <= objective + INCREASE_TOLERANCE {
                accepted = Some((trial, value));
                break;
            }
            step *= 0.5;
        }
        let Some((next, value)) = accepted else {
            break;
        };

        let decrease = (objective - value) / objective.max(f64::MIN_POSITIVE);
        d = next;
        objective = value;
        iterations += 1;
        if decrease < cfg.rel_tol {
            converged = true;
            break;
        }
    }

    let d = Tensor::from_kernel(seq.frame_dims().to_vec(), d)?;
    let image = DynamicImage {
        tensor: d.clone(),
        method: MethodKind::RankExact,
        source_range: (1, seq.len()),
    };
    Ok((
        image,
        RankModel {
            d,
            lambda: cfg.lambda,
            objective,
            iterations,
            converged,
        },
    ))
}
