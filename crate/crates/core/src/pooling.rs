//! Single-output temporal poolers and the dynamic-image export pipeline.

use std::fmt;

use crate::coeffs::{alpha_coeffs, ArpVariant};
use crate::error::{Error, Result};
use crate::solver::{rank_pool_exact, SolverConfig};
use crate::tensor::{centered_weighted_sum, order_free_mean, ByteImage, FrameSequence, Tensor};

pub const DEFAULT_MHI_THRESHOLD: f64 = 0.05;
pub const DEFAULT_MHI_DURATION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    ArpAvg,
    ArpDirect,
    RankExact,
    Mean,
    Max,
    Mhi,
    Mei,
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodKind::ArpAvg => "arp_avg",
            MethodKind::ArpDirect => "arp_direct",
            MethodKind::RankExact => "rank_exact",
            MethodKind::Mean => "mean",
            MethodKind::Max => "max",
            MethodKind::Mhi => "mhi",
            MethodKind::Mei => "mei",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PoolingMethod {
    Arp(ArpVariant),
    RankExact(SolverConfig),
    Mean,
    Max,
    Mhi { threshold: f64, duration: f64 },
    Mei { threshold: f64 },
}

impl PoolingMethod {
    pub fn kind(&self) -> MethodKind {
        match self {
            PoolingMethod::Arp(ArpVariant::Avg) => MethodKind::ArpAvg,
            PoolingMethod::Arp(ArpVariant::Direct) => MethodKind::ArpDirect,
            PoolingMethod::RankExact(_) => MethodKind::RankExact,
            PoolingMethod::Mean => MethodKind::Mean,
            PoolingMethod::Max => MethodKind::Max,
            PoolingMethod::Mhi { .. } => MethodKind::Mhi,
            PoolingMethod::Mei { .. } => MethodKind::Mei,
        }
    }

    pub fn mhi_default() -> Self {
        PoolingMethod::Mhi {
            threshold: DEFAULT_MHI_THRESHOLD,
            duration: DEFAULT_MHI_DURATION,
        }
    }

    pub fn mei_default() -> Self {
        PoolingMethod::Mei {
            threshold: DEFAULT_MHI_THRESHOLD,
        }
    }
}

impl Default for PoolingMethod {
    fn default() -> Self {
        PoolingMethod::Arp(ArpVariant::Avg)
    }
}

/// A pooled summary of a frame range.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicImage {
    pub tensor: Tensor,
    pub method: MethodKind,
    /// One-based inclusive `(first, last)` frame indices of the pooled range.
    pub source_range: (usize, usize),
}

impl DynamicImage {
    fn whole(tensor: Tensor, method: MethodKind, seq: &FrameSequence) -> Self {
        DynamicImage {
            tensor,
            method,
            source_range: (1, seq.len()),
        }
    }
}

pub fn pool(seq: &FrameSequence, method: &PoolingMethod) -> Result<DynamicImage> {
    match method {
        PoolingMethod::Arp(v) => arp(seq, *v),
        PoolingMethod::RankExact(cfg) => rank_pool_exact(seq, cfg).map(|(di, _)| di),
        PoolingMethod::Mean => mean_pool(seq),
        PoolingMethod::Max => max_pool(seq),
        PoolingMethod::Mhi {
            threshold,
            duration,
        } => mhi(seq, *threshold, *duration),
        PoolingMethod::Mei { threshold } => mei(seq, *threshold),
    }
}

/// Approximate rank pooling: a fixed weighted sum of the frames.
pub fn arp(seq: &FrameSequence, variant: ArpVariant) -> Result<DynamicImage> {
    let alpha = alpha_coeffs(seq.len(), variant)?;
    let tensor = centered_weighted_sum(seq, alpha.values())?;
    let kind = match variant {
        ArpVariant::Avg => MethodKind::ArpAvg,
        ArpVariant::Direct => MethodKind::ArpDirect,
    };
    Ok(DynamicImage::whole(tensor, kind, seq))
}

/// Elementwise temporal mean.
///
/// Each pixel's values are averaged in ascending value order, so the result
/// is bitwise independent of frame order and exact for constant pixels.
pub fn mean_pool(seq: &FrameSequence) -> Result<DynamicImage> {
    let mut column = Vec::with_capacity(seq.len());
    let data = (0..seq.frame_len())
        .map(|i| {
            column.clear();
            column.extend(seq.frames().iter().map(|f| f.data()[i]));
            order_free_mean(&mut column)
        })
        .collect();
    let tensor = Tensor::from_kernel(seq.frame_dims().to_vec(), data)?;
    Ok(DynamicImage::whole(tensor, MethodKind::Mean, seq))
}

pub fn max_pool(seq: &FrameSequence) -> Result<DynamicImage> {
    let mut data = seq.frame(0).data().to_vec();
    for frame in &seq.frames()[1..] {
        for (m, &x) in data.iter_mut().zip(frame.data()) {
            *m = m.max(x);
        }
    }
    let tensor = Tensor::from_kernel(seq.frame_dims().to_vec(), data)?;
    Ok(DynamicImage::whole(tensor, MethodKind::Max, seq))
}

/// Reduces `(3, H, W)` frames to `(1, H, W)` luminance; other shapes pass through.
pub fn to_luminance(frame: &Tensor) -> Result<Tensor> {
    match frame.dims() {
        [3, h, w] => {
            let plane = h * w;
            let d = frame.data();
            let data = (0..plane)
                .map(|i| 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i])
                .collect();
            Tensor::from_kernel(vec![1, *h, *w], data)
        }
        [c, _, _] if *c != 1 => Err(Error::precondition(format!(
            "motion history needs 1- or 3-channel frames, got {c} channels"
        ))),
        _ => Ok(frame.clone()),
    }
}

/// Per-step motion masks `D_t` for `t = 2..T` on luminance frames.
fn motion_masks(seq: &FrameSequence, threshold: f64) -> Result<(Vec<usize>, Vec<Vec<bool>>)> {
    if seq.len() < 2 {
        return Err(Error::precondition(format!(
            "motion history needs at least 2 frames, got {}",
            seq.len()
        )));
    }
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::precondition(format!(
            "motion threshold must be positive, got {threshold}"
        )));
    }
    let luma = seq
        .frames()
        .iter()
        .map(to_luminance)
        .collect::<Result<Vec<_>>>()?;
    let masks = luma
        .windows(2)
        .map(|pair| {
            pair[1]
                .data()
                .iter()
                .zip(pair[0].data())
                .map(|(b, a)| (b - a).abs() > threshold)
                .collect()
        })
        .collect();
    Ok((luma[0].dims().to_vec(), masks))
}

/// Motion History Image: moving pixels are set to `duration`, others decay
/// linearly by `duration / (T - 1)` per step, floored at zero.
pub fn mhi(seq: &FrameSequence, threshold: f64, duration: f64) -> Result<DynamicImage> {
    if duration.is_nan() || duration <= 0.0 || duration.is_infinite() {
        return Err(Error::precondition(format!(
            "motion history duration must be positive, got {duration}"
        )));
    }
    let (dims, masks) = motion_masks(seq, threshold)?;
    let decay = duration / (seq.len() - 1) as f64;
    let mut history = vec![0.0; dims.iter().product()];
    for mask in &masks {
        for (h, &moved) in history.iter_mut().zip(mask) {
            *h = if moved { duration } else { (*h - decay).max(0.0) };
        }
    }
    let tensor = Tensor::from_kernel(dims, history)?;
    Ok(DynamicImage::whole(tensor, MethodKind::Mhi, seq))
}

/// Motion Energy Image: 1 wherever any step moved, else 0.
pub fn mei(seq: &FrameSequence, threshold: f64) -> Result<DynamicImage> {
    let (dims, masks) = motion_masks(seq, threshold)?;
    let mut energy = vec![0.0; dims.iter().product()];
    for mask in &masks {
        for (e, &moved) in energy.iter_mut().zip(mask) {
            if moved {
                *e = 1.0;
            }
        }
    }
    let tensor = Tensor::from_kernel(dims, energy)?;
    Ok(DynamicImage::whole(tensor, MethodKind::Mei, seq))
}

/// Elementwise square root of `[0, 1]` pixel data.
pub fn di_preprocess(seq: &FrameSequence) -> Result<FrameSequence> {
    seq.map_frames(|frame| {
        if let Some(v) = frame.data().iter().find(|&&v| v < 0.0) {
            return Err(Error::Domain(format!(
                "square root of negative pixel value {v}"
            )));
        }
        frame.map(f64::sqrt)
    })
}

/// Rescales a pooled image to bytes with one min-max range over all channels.
/// A flat image maps to 128 everywhere.
pub fn di_export(di: &DynamicImage) -> Result<ByteImage> {
    to_bytes(&di.tensor)
}

pub fn to_bytes(tensor: &Tensor) -> Result<ByteImage> {
    let data = tensor.data();
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let bytes = if hi == lo {
        vec![128; data.len()]
    } else {
        let range = hi - lo;
        data.iter()
            .map(|&v| (255.0 * (v - lo) / range).round().clamp(0.0, 255.0) as u8)
            .collect()
    };
    ByteImage::new(tensor.dims().to_vec(), bytes)
}
