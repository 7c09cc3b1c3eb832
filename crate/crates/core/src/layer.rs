//! Rank pooling as a network layer.
//!
//! The forward pass is approximate rank pooling over the temporal axis of a
//! stack of feature tensors. Its coefficients depend only on the stack length,
//! so the Jacobian with respect to frame `t` is `α_t · I` and backward is a
//! per-frame scaling of the upstream gradient.

use std::collections::HashMap;

use crate::coeffs::{alpha_coeffs, ArpVariant, CoefficientVector};
use crate::error::{Error, Result};
use crate::synth::{random_tensor, SeededRng};
use crate::tensor::{weighted_sum, FrameSequence, Modality, Tensor};

/// Maximum relative error accepted by [`gradcheck`].
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

/// A temporal pooling layer with an explicit backward pass.
pub trait TemporalLayer {
    fn forward(&mut self, inputs: &FrameSequence) -> Result<Tensor>;

    /// Gradients with respect to each input frame, given the gradient of the
    /// loss with respect to the forward output. `len` must match the length
    /// of the last forward call.
    fn backward(&self, upstream: &Tensor, len: usize) -> Result<FrameSequence>;
}

#[derive(Debug, Clone, PartialEq)]
struct ForwardShape {
    len: usize,
    dims: Vec<usize>,
}

fn check_backward(saved: Option<&ForwardShape>, upstream: &Tensor, len: usize) -> Result<()> {
    let saved = saved.ok_or_else(|| Error::Contract("backward called before forward".into()))?;
    if saved.len != len {
        return Err(Error::Contract(format!(
            "backward for T={len} but forward saw T={}",
            saved.len
        )));
    }
    if upstream.dims() != saved.dims.as_slice() {
        return Err(Error::dims(&saved.dims, upstream.dims()));
    }
    Ok(())
}

fn scaled_copies(upstream: &Tensor, weights: &[f64]) -> Result<FrameSequence> {
    let grads = weights
        .iter()
        .map(|&w| upstream.scale(w))
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(grads, Modality::Feature)
}

#[derive(Debug, Clone, Default)]
pub struct RankPoolLayer {
    variant: ArpVariant,
    cache: HashMap<usize, CoefficientVector>,
    saved: Option<ForwardShape>,
}

impl RankPoolLayer {
    pub fn new(variant: ArpVariant) -> Self {
        Self {
            variant,
            cache: HashMap::new(),
            saved: None,
        }
    }

    pub fn variant(&self) -> ArpVariant {
        self.variant
    }

    fn coefficients(&mut self, len: usize) -> Result<&CoefficientVector> {
        if !self.cache.contains_key(&len) {
            let c = alpha_coeffs(len, self.variant)?;
            self.cache.insert(len, c);
        }
        Ok(&self.cache[&len])
    }
}

impl TemporalLayer for RankPoolLayer {
    fn forward(&mut self, inputs: &FrameSequence) -> Result<Tensor> {
        let alpha = self.coefficients(inputs.len())?.values().to_vec();
        let out = weighted_sum(inputs, &alpha)?;
        self.saved = Some(ForwardShape {
            len: inputs.len(),
            dims: out.dims().to_vec(),
        });
        Ok(out)
    }

    fn backward(&self, upstream: &Tensor, len: usize) -> Result<FrameSequence> {
        check_backward(self.saved.as_ref(), upstream, len)?;
        scaled_copies(upstream, self.cache[&len].values())
    }
}

/// Temporal mean, used as a control for the gradient check.
#[derive(Debug, Clone, Default)]
pub struct MeanPoolLayer {
    saved: Option<ForwardShape>,
}

impl TemporalLayer for MeanPoolLayer {
    fn forward(&mut self, inputs: &FrameSequence) -> Result<Tensor> {
        let w = vec![1.0 / inputs.len() as f64; inputs.len()];
        let out = weighted_sum(inputs, &w)?;
        self.saved = Some(ForwardShape {
            len: inputs.len(),
            dims: out.dims().to_vec(),
        });
        Ok(out)
    }

    fn backward(&self, upstream: &Tensor, len: usize) -> Result<FrameSequence> {
        check_backward(self.saved.as_ref(), upstream, len)?;
        scaled_copies(upstream, &vec![1.0 / len as f64; len])
    }
}

/// Central-difference gradient of a scalar function of a frame stack.
pub fn numerical_gradient(
    mut loss: impl FnMut(&FrameSequence) -> Result<f64>,
    inputs: &FrameSequence,
    epsilon: f64,
) -> Result<Vec<Tensor>> {
    let mut frames = inputs.frames().to_vec();
    let mut grads = Vec::with_capacity(frames.len());
    for t in 0..frames.len() {
        let original = frames[t].clone();
        let mut grad = Vec::with_capacity(original.len());
        for i in 0..original.len() {
            let mut eval = |delta: f64| -> Result<f64> {
                let mut data = original.data().to_vec();
                data[i] += delta;
                frames[t] = Tensor::new(original.dims().to_vec(), data)?;
                loss(&FrameSequence::new(frames.clone(), inputs.modality())?)
            };
            let plus = eval(epsilon)?;
            let minus = eval(-epsilon)?;
            grad.push((plus - minus) / (2.0 * epsilon));
        }
        frames[t] = original;
        grads.push(Tensor::new(frames[t].dims().to_vec(), grad)?);
    }
    Ok(grads)
}

/// `|a - b| / max(|a|, |b|)`, or the absolute difference when both are ~0.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-12 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub pass: bool,
    pub entries: usize,
}

/// Compares `layer.backward` with central differences of `L = Σ forward(x)`
/// on seeded random inputs of the given frame shape and length.
pub fn gradcheck<L: TemporalLayer>(
    layer: &mut L,
    dims: &[usize],
    len: usize,
    epsilon: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::precondition(format!(
            "gradcheck epsilon must lie in (0, 1e-2], got {epsilon}"
        )));
    }
    if len == 0 {
        return Err(Error::precondition("gradcheck needs at least one frame"));
    }
    let mut rng = SeededRng::new(seed);
    let frames = (0..len)
        .map(|_| random_tensor(&mut rng, dims, -1.0, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let inputs = FrameSequence::new(frames, Modality::Feature)?;

    let out = layer.forward(&inputs)?;
    let upstream = Tensor::filled(out.dims(), 1.0)?;
    let analytic = layer.backward(&upstream, len)?;

    let numeric = numerical_gradient(
        |x| Ok(layer.forward(x)?.data().iter().sum()),
        &inputs,
        epsilon,
    )?;
    // restore the saved shape for any caller that continues with backward
    layer.forward(&inputs)?;

    let mut max_rel_error: f64 = 0.0;
    let mut entries = 0;
    for (a, n) in analytic.frames().iter().zip(&numeric) {
        for (&x, &y) in a.data().iter().zip(n.data()) {
            max_rel_error = max_rel_error.max(relative_error(x, y));
            entries += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        pass: max_rel_error < GRADCHECK_TOLERANCE,
        entries,
    })
}
