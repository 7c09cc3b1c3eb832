//! Dense real tensors and ordered frame sequences.
//!
//! Image-like tensors use a row-major `(channels, height, width)` layout. All
//! values are `f64`; 8-bit data is promoted when it is loaded. Every public
//! constructor rejects non-finite values so downstream pooling never has to
//! re-check.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        let head = &self.data[..self.data.len().min(SHOWN)];
        f.debug_struct("Tensor")
            .field("dims", &self.dims)
            .field("data", &head)
            .field("len", &self.data.len())
            .finish()
    }
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::precondition(format!(
                "tensor dims must be a non-empty list of positive sizes, got {dims:?}"
            )));
        }
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(Error::Format(format!(
                "dims {dims:?} need {numel} elements, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: &[usize], value: f64) -> Result<Self> {
        let numel = dims.iter().product();
        Self::new(dims.to_vec(), vec![value; numel])
    }

    /// Wraps values produced from finite inputs by a finite-preserving kernel,
    /// checking only the result.
    pub(crate) fn from_kernel(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("pooling produced a non-finite value".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn scale(&self, factor: f64) -> Result<Tensor> {
        Tensor::from_kernel(
            self.dims.clone(),
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    /// `a * self + b * other`, elementwise.
    pub fn lin_comb(&self, a: f64, other: &Tensor, b: f64) -> Result<Tensor> {
        self.check_same_dims(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Tensor::from_kernel(self.dims.clone(), data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        Tensor::from_kernel(self.dims.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Channel count of a `(C, H, W)` tensor, `None` for other ranks.
    pub fn channels(&self) -> Option<usize> {
        (self.dims.len() == 3).then(|| self.dims[0])
    }

    pub(crate) fn check_same_dims(&self, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::dims(&self.dims, &other.dims));
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// 8-bit tensor, the export form of pooled images and encoded flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteImage {
    dims: Vec<usize>,
    data: Vec<u8>,
}

impl ByteImage {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let numel: usize = dims.iter().product();
        if dims.is_empty() || numel == 0 {
            return Err(Error::EmptyInput(format!("byte image with dims {dims:?}")));
        }
        if numel != data.len() {
            return Err(Error::Format(format!(
                "dims {dims:?} need {numel} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn channels(&self) -> Option<usize> {
        (self.dims.len() == 3).then(|| self.dims[0])
    }

    /// Promotes bytes to `[0, 1]` reals.
    pub fn to_unit_tensor(&self) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&b| f64::from(b) / 255.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Modality {
    #[default]
    Rgb,
    Gray,
    Flow,
    Feature,
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(Modality::Rgb),
            "gray" => Ok(Modality::Gray),
            "flow" => Ok(Modality::Flow),
            "feature" => Ok(Modality::Feature),
            other => Err(Error::precondition(format!("unknown modality '{other}'"))),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Rgb => "rgb",
            Modality::Gray => "gray",
            Modality::Flow => "flow",
            Modality::Feature => "feature",
        })
    }
}

/// Ordered, non-empty stack of equally shaped frames. Index order is temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Tensor>,
    modality: Modality,
}

impl FrameSequence {
    pub fn new(frames: Vec<Tensor>, modality: Modality) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::EmptyInput("frame sequence has no frames".into()))?;
        if let Some(bad) = frames.iter().find(|f| f.dims() != first.dims()) {
            return Err(Error::dims(first.dims(), bad.dims()));
        }
        Ok(Self { frames, modality })
    }

    /// Convenience for tests and synthetic data: one flat frame per row.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let frames = rows
            .iter()
            .map(|r| Tensor::new(vec![r.len()], r.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(frames, Modality::Feature)
    }

    pub fn frames(&self) -> &[Tensor] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &Tensor {
        &self.frames[t]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn frame_dims(&self) -> &[usize] {
        self.frames[0].dims()
    }

    pub fn frame_len(&self) -> usize {
        self.frames[0].len()
    }

    pub fn reversed(&self) -> FrameSequence {
        let mut frames = self.frames.clone();
        frames.reverse();
        FrameSequence {
            frames,
            modality: self.modality,
        }
    }

    /// Frames in the zero-based half-open `range`.
    pub fn slice(&self, range: Range<usize>) -> Result<FrameSequence> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::precondition(format!(
                "frame range {range:?} outside 0..{}",
                self.len()
            )));
        }
        Ok(FrameSequence {
            frames: self.frames[range].to_vec(),
            modality: self.modality,
        })
    }

    pub fn map_frames(&self, f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<FrameSequence> {
        let frames = self.frames.iter().map(f).collect::<Result<Vec<_>>>()?;
        FrameSequence::new(frames, self.modality)
    }

    pub fn into_frames(self) -> Vec<Tensor> {
        self.frames
    }
}

/// `means[t]` is the average of frames `0..=t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMeanSequence {
    means: Vec<Tensor>,
}

impl RunningMeanSequence {
    pub fn means(&self) -> &[Tensor] {
        &self.means
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn as_sequence(&self, modality: Modality) -> FrameSequence {
        FrameSequence {
            frames: self.means.clone(),
            modality,
        }
    }
}

/// Time averages of the sequence up to each frame.
///
/// Uses the update `m_t = m_{t-1} + (x_t - m_{t-1}) / t`, which keeps the first
/// mean equal to the first frame and constant inputs exactly constant.
pub fn running_means(seq: &FrameSequence) -> RunningMeanSequence {
    let n = seq.frame_len();
    let mut current = vec![0.0; n];
    let mut means = Vec::with_capacity(seq.len());
    for (t, frame) in seq.frames().iter().enumerate() {
        let count = (t + 1) as f64;
        for (m, &x) in current.iter_mut().zip(frame.data()) {
            *m += (x - *m) / count;
        }
        means.push(Tensor {
            dims: frame.dims.clone(),
            data: current.clone(),
        });
    }
    RunningMeanSequence { means }
}

/// Mean of `values` that does not depend on their order. Sorts in place, then
/// uses the incremental update, so equal values give that value exactly.
pub(crate) fn order_free_mean(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let mut m = 0.0;
    for (k, &v) in values.iter().enumerate() {
        m += (v - m) / (k + 1) as f64;
    }
    m
}

/// `Σ_t weights[t] · (frames[t] - m)` with `m` the elementwise [`order_free_mean`].
///
/// Equals [`weighted_sum`] up to rounding when the weights sum to zero, but a
/// constant sequence gives exactly zero. Terms are paired the same way, so
/// the reversal property holds too.
pub fn centered_weighted_sum(seq: &FrameSequence, weights: &[f64]) -> Result<Tensor> {
    if weights.len() != seq.len() {
        return Err(Error::dims(&[seq.len()], &[weights.len()]));
    }
    let frames = seq.frames();
    let len = frames.len();
    let mut column = vec![0.0; len];
    let mut sorted = vec![0.0; len];
    let data = (0..seq.frame_len())
        .map(|i| {
            for (c, f) in column.iter_mut().zip(frames) {
                *c = f.data()[i];
            }
            sorted.copy_from_slice(&column);
            let m = order_free_mean(&mut sorted);
            let mut acc = 0.0;
            for lo in 0..len / 2 {
                let hi = len - 1 - lo;
                acc += weights[lo] * (column[lo] - m) + weights[hi] * (column[hi] - m);
            }
            if len % 2 == 1 {
                acc += weights[len / 2] * (column[len / 2] - m);
            }
            acc
        })
        .collect();
    Tensor::from_kernel(seq.frame_dims().to_vec(), data)
}

/// `Σ_t weights[t] · frames[t]`.
///
/// Terms are added as mirrored pairs `(t, T-1-t)`, and the pair sums are
/// accumulated for `t = 0, 1, ...`, with the middle frame last when T is odd.
/// The order is fixed, so results are reproducible. Reversing the frames while
/// negating mirrored weights negates the result exactly.
pub fn weighted_sum(seq: &FrameSequence, weights: &[f64]) -> Result<Tensor> {
    if weights.len() != seq.len() {
        return Err(Error::dims(&[seq.len()], &[weights.len()]));
    }
    let frames = seq.frames();
    let len = frames.len();
    let mut out = vec![0.0; seq.frame_len()];
    for lo in 0..len / 2 {
        let hi = len - 1 - lo;
        let (wl, wh) = (weights[lo], weights[hi]);
        for ((o, &xl), &xh) in out.iter_mut().zip(frames[lo].data()).zip(frames[hi].data()) {
            *o += wl * xl + wh * xh;
        }
    }
    if len % 2 == 1 {
        let mid = len / 2;
        let w = weights[mid];
        for (o, &x) in out.iter_mut().zip(frames[mid].data()) {
            *o += w * x;
        }
    }
    Tensor::from_kernel(seq.frame_dims().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(seq: &RunningMeanSequence) -> Vec<Vec<f64>> {
        seq.means().iter().map(|m| m.data().to_vec()).collect()
    }

    #[test]
    fn tensor_rejects_bad_construction() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
        assert!(matches!(
            Tensor::new(vec![2], vec![1.0, f64::NAN]),
            Err(Error::Numerical(_))
        ));
        assert!(Tensor::new(vec![1], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn sequence_requires_uniform_nonempty_frames() {
        assert!(matches!(
            FrameSequence::new(vec![], Modality::Rgb),
            Err(Error::EmptyInput(_))
        ));
        let a = Tensor::zeros(&[1, 2, 2]).unwrap();
        let b = Tensor::zeros(&[1, 2, 3]).unwrap();
        assert!(matches!(
            FrameSequence::new(vec![a, b], Modality::Rgb),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn running_means_examples() {
        let seq = FrameSequence::from_rows(&[vec![2.0], vec![4.0]]).unwrap();
        assert_eq!(rows(&running_means(&seq)), vec![vec![2.0], vec![3.0]]);

        let seq = FrameSequence::from_rows(&[vec![1.0], vec![2.0], vec![6.0]]).unwrap();
        assert_eq!(
            rows(&running_means(&seq)),
            vec![vec![1.0], vec![1.5], vec![3.0]]
        );
    }

    #[test]
    fn running_means_of_constant_sequence_is_exact() {
        for &c in &[0.1, 1.0 / 3.0, -7.25, 1e-300] {
            let seq = FrameSequence::from_rows(&vec![vec![c, 2.0 * c]; 37]).unwrap();
            let means = running_means(&seq);
            for m in means.means() {
                assert_eq!(m.data(), &[c, 2.0 * c]);
            }
            let twice = running_means(&means.as_sequence(Modality::Feature));
            assert_eq!(twice, means);
        }
    }

    #[test]
    fn running_means_first_entry_is_first_frame() {
        let seq = FrameSequence::from_rows(&[vec![0.3, -1.7, 9.1], vec![1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(running_means(&seq).means()[0], seq.frames()[0]);
    }

    #[test]
    fn weighted_sum_examples() {
        let seq = FrameSequence::from_rows(&[vec![5.0, 1.0], vec![2.0, 3.0], vec![7.0, 4.0]])
            .unwrap();
        let sel = weighted_sum(&seq, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(sel, seq.frames()[0]);
        let zero = weighted_sum(&seq, &[0.0; 3]).unwrap();
        assert_eq!(zero.data(), &[0.0, 0.0]);

        let pair = FrameSequence::from_rows(&[vec![2.0], vec![6.0]]).unwrap();
        assert_eq!(weighted_sum(&pair, &[-0.5, 0.5]).unwrap().data(), &[2.0]);
    }

    #[test]
    fn weighted_sum_rejects_length_mismatch() {
        let seq = FrameSequence::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            weighted_sum(&seq, &[1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn mirrored_weights_negate_under_reversal() {
        let seq = FrameSequence::from_rows(&[
            vec![0.1, 1e10],
            vec![0.7, -3.3],
            vec![0.3, 2.2e-7],
            vec![1.9, 5.5],
            vec![-0.4, 0.01],
        ])
        .unwrap();
        let w = [-4.0, -2.0, 0.0, 2.0, 4.0];
        let fwd = weighted_sum(&seq, &w).unwrap();
        let rev = weighted_sum(&seq.reversed(), &w).unwrap();
        for (a, b) in fwd.data().iter().zip(rev.data()) {
            assert_eq!(a.to_bits(), (-b).to_bits());
        }
    }

    #[test]
    fn centered_sum_is_exact_on_constants() {
        let rows = vec![vec![0.1, 0.7, 1e5]; 7];
        let seq = FrameSequence::from_rows(&rows).unwrap();
        let w = [-3.0, -2.5, 1.0, 0.5, 1.0, 2.0, 1.0];
        assert!(centered_weighted_sum(&seq, &w).unwrap().data().iter().all(|&v| v == 0.0));

        let mut vals = [0.3, 0.1, 0.2];
        let m = order_free_mean(&mut vals);
        let mut rev = [0.2, 0.1, 0.3];
        assert_eq!(m.to_bits(), order_free_mean(&mut rev).to_bits());
    }

    #[test]
    fn slice_and_reverse() {
        let seq = FrameSequence::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let rev = seq.reversed();
        assert_eq!(rev.frame(0).data(), &[3.0]);
        let mid = seq.slice(1..3).unwrap();
        assert_eq!(mid.len(), 2);
        assert_eq!(mid.frame(0).data(), &[2.0]);
        assert!(seq.slice(2..2).is_err());
        assert!(seq.slice(1..4).is_err());
    }
}
