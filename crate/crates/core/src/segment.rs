//! Windowed pooling: split a sequence into overlapping windows of `τ` frames
//! taken every `s` frames, pool each window, and optionally merge the
//! per-window images with a second temporal pooling.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::coeffs::ArpVariant;
use crate::error::{Error, Result};
use crate::pooling::{arp, max_pool, mean_pool, pool, DynamicImage, PoolingMethod};
use crate::tensor::FrameSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowLength {
    Full,
    Frames(usize),
}

impl FromStr for WindowLength {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            return Ok(WindowLength::Full);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(WindowLength::Frames(n)),
            _ => Err(Error::precondition(format!(
                "window must be 'full' or a positive integer, got '{s}'"
            ))),
        }
    }
}

impl fmt::Display for WindowLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowLength::Full => f.write_str("full"),
            WindowLength::Frames(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Merge {
    None,
    #[default]
    Max,
    Mean,
    ArpAvg,
    ArpDirect,
}

impl FromStr for Merge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Merge::None),
            "max" => Ok(Merge::Max),
            "mean" => Ok(Merge::Mean),
            "arp-avg" | "arp_avg" => Ok(Merge::ArpAvg),
            "arp-direct" | "arp_direct" => Ok(Merge::ArpDirect),
            other => Err(Error::precondition(format!("unknown temporal merge '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub window: WindowLength,
    pub stride: usize,
    pub merge: Merge,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window: WindowLength::Frames(10),
            stride: 6,
            merge: Merge::Max,
        }
    }
}

impl WindowSpec {
    /// One window covering the whole sequence, no merge.
    pub fn single() -> Self {
        Self {
            window: WindowLength::Full,
            stride: 1,
            merge: Merge::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::precondition("stride must be at least 1"));
        }
        if self.window == WindowLength::Frames(0) {
            return Err(Error::precondition("window must be at least 1 frame"));
        }
        Ok(())
    }
}

/// One-based inclusive `(first, last)` frame ranges of each window.
///
/// Windows start at `1, 1 + s, 1 + 2s, ...` while the start is within the
/// sequence. A trailing window cut short by the end of the sequence is kept
/// only if it still has at least 2 frames.
pub fn window_ranges(len: usize, spec: &WindowSpec) -> Result<Vec<(usize, usize)>> {
    spec.validate()?;
    let width = match spec.window {
        WindowLength::Full => return Ok(if len == 0 { vec![] } else { vec![(1, len)] }),
        WindowLength::Frames(w) => w,
    };
    let mut out = Vec::new();
    let mut first = 1;
    while first <= len {
        let last = (first + width - 1).min(len);
        let size = last - first + 1;
        if size == width || size >= 2 {
            out.push((first, last));
        }
        first += spec.stride;
    }
    Ok(out)
}

pub fn windows(seq: &FrameSequence, spec: &WindowSpec) -> Result<Vec<FrameSequence>> {
    window_ranges(seq.len(), spec)?
        .into_iter()
        .map(|(a, b)| seq.slice(a - 1..b))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum MdiOutput {
    Windows(Vec<DynamicImage>),
    Merged(DynamicImage),
}

impl MdiOutput {
    pub fn images(&self) -> Vec<&DynamicImage> {
        match self {
            MdiOutput::Windows(v) => v.iter().collect(),
            MdiOutput::Merged(d) => vec![d],
        }
    }
}

/// Pools every window with `method`; merges the results in window order
/// unless the spec's merge is `None`.
pub fn mdi(seq: &FrameSequence, spec: &WindowSpec, method: &PoolingMethod) -> Result<MdiOutput> {
    let ranges = window_ranges(seq.len(), spec)?;
    if ranges.is_empty() {
        return Err(Error::EmptyInput(format!(
            "window {} stride {} yields no windows for {} frames",
            spec.window,
            spec.stride,
            seq.len()
        )));
    }
    let images = ranges
        .par_iter()
        .map(|&(a, b)| {
            let mut di = pool(&seq.slice(a - 1..b)?, method)?;
            di.source_range = (a, b);
            Ok(di)
        })
        .collect::<Result<Vec<_>>>()?;

    if spec.merge == Merge::None {
        return Ok(MdiOutput::Windows(images));
    }
    let kind = images[0].method;
    let span = (images[0].source_range.0, images[images.len() - 1].source_range.1);
    let stacked = FrameSequence::new(
        images.into_iter().map(|d| d.tensor).collect(),
        seq.modality(),
    )?;
    let mut merged = merge(&stacked, spec.merge)?;
    merged.method = kind;
    merged.source_range = span;
    Ok(MdiOutput::Merged(merged))
}

/// Merges per-window images stacked in window order.
pub fn merge(stacked: &FrameSequence, how: Merge) -> Result<DynamicImage> {
    match how {
        Merge::None => Err(Error::precondition("merge method 'none' cannot merge")),
        Merge::Max => max_pool(stacked),
        Merge::Mean => mean_pool(stacked),
        Merge::ArpAvg => arp(stacked, ArpVariant::Avg),
        Merge::ArpDirect => arp(stacked, ArpVariant::Direct),
    }
}
