//! Dynamic images: summarizing an ordered frame sequence in a single tensor.
//!
//! The central operation is rank pooling. A linear ranking function is fit to
//! the frames' running means so that later frames score higher, and its
//! parameter vector is kept as the summary. [`solver`] solves that problem
//! exactly. [`pooling::arp`] computes its closed-form first gradient step,
//! which is a fixed weighted sum of the frames (weights from [`coeffs`]).
//!
//! Around these sit baseline poolers (mean, max, motion history/energy),
//! a differentiable layer ([`layer`]), windowed multi-image pooling
//! ([`segment`]), file I/O ([`io`]) and evaluation helpers ([`metrics`]).

pub mod coeffs;
pub mod error;
pub mod io;
pub mod layer;
pub mod metrics;
pub mod pooling;
pub mod segment;
pub mod solver;
pub mod synth;
pub mod tensor;

pub use coeffs::{alpha_coeffs, beta_coeffs, harmonic, ArpVariant, CoeffKind, CoefficientVector};
pub use error::{Error, Result};
pub use pooling::{DynamicImage, MethodKind, PoolingMethod};
pub use segment::{Merge, WindowLength, WindowSpec};
pub use solver::{RankModel, SolverConfig};
pub use tensor::{ByteImage, FrameSequence, Modality, RunningMeanSequence, Tensor};
