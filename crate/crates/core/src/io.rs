//! Frame loading, output writing, and the 8-bit flow convention.
//!
//! Raw tensors use a small little-endian container:
//!
//! ```text
//! magic   b"DYNT"
//! version u32 = 1
//! ndim    u32
//! dims    ndim × u64
//! dtype   u32   (1 = f32, 2 = f64, 3 = u8)
//! payload row-major, product(dims) × dtype size
//! ```

use std::fs;
use std::io::{BufWriter, Cursor, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage as Decoded, ImageEncoder, ImageReader};

use crate::error::{Error, Result};
use crate::tensor::{ByteImage, FrameSequence, Modality, Tensor};

pub const MAGIC: &[u8; 4] = b"DYNT";
pub const VERSION: u32 = 1;
pub const DEFAULT_FLOW_CLIP: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum DType {
    F32 = 1,
    F64 = 2,
    U8 = 3,
}

impl DType {
    fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::U8 => 1,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::F64),
            3 => Ok(DType::U8),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Contents of a tensor container file.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let numel: usize = dims.iter().product();
        if dims.is_empty() || numel == 0 {
            return Err(Error::EmptyInput(format!("tensor file with dims {dims:?}")));
        }
        if numel != data.len() {
            return Err(Error::Format(format!(
                "dims {dims:?} need {numel} elements, payload has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dtype = self.data.dtype();
        let mut out =
            Vec::with_capacity(16 + 8 * self.dims.len() + self.data.len() * dtype.size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&(dtype as u32).to_le_bytes());
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a DYNT tensor file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported DYNT version {version}")));
        }
        let ndim = read_u32(&mut r)? as usize;
        let mut dims = Vec::with_capacity(ndim.min(16));
        for _ in 0..ndim {
            let d = read_u64(&mut r)?;
            dims.push(usize::try_from(d).map_err(|_| Error::Format(format!("dim {d} too large")))?);
        }
        let dtype = DType::from_code(read_u32(&mut r)?)?;
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        let payload = &bytes[r.position() as usize..];
        let expected = numel
            .checked_mul(dtype.size())
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "payload has {} bytes, dims {dims:?} need {expected}",
                payload.len()
            )));
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::U8 => TensorData::U8(payload.to_vec()),
        };
        TensorFile::new(dims, data)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }
}

fn read_exact(r: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("truncated DYNT header".into()))
}

fn read_u32(r: &mut Cursor<&[u8]>) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut Cursor<&[u8]>) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Quantization of flow displacements to bytes: clip to `±clip` pixels, then
/// map `[-clip, clip]` linearly onto `[0, 255]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEncoding {
    clip: f64,
}

impl Default for FlowEncoding {
    fn default() -> Self {
        Self {
            clip: DEFAULT_FLOW_CLIP,
        }
    }
}

impl FlowEncoding {
    pub fn new(clip: f64) -> Result<Self> {
        if !(clip > 0.0 && clip.is_finite()) {
            return Err(Error::precondition(format!(
                "flow clip must be positive, got {clip}"
            )));
        }
        Ok(Self { clip })
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn encode_value(&self, v: f64) -> u8 {
        let c = self.clip;
        let clamped = v.clamp(-c, c);
        (255.0 * (clamped + c) / (2.0 * c)).round() as u8
    }

    pub fn decode_value(&self, b: u8) -> f64 {
        (f64::from(b) / 255.0) * 2.0 * self.clip - self.clip
    }
}

pub fn flow_encode(flow: &Tensor, enc: &FlowEncoding) -> Result<ByteImage> {
    let bytes = flow.data().iter().map(|&v| enc.encode_value(v)).collect();
    ByteImage::new(flow.dims().to_vec(), bytes)
}

pub fn flow_decode(bytes: &ByteImage, enc: &FlowEncoding) -> Result<Tensor> {
    if bytes.channels() != Some(2) {
        return Err(Error::Format(format!(
            "flow images need shape (2, H, W), got {:?}",
            bytes.dims()
        )));
    }
    Tensor::new(
        bytes.dims().to_vec(),
        bytes.data().iter().map(|&b| enc.decode_value(b)).collect(),
    )
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "ppm", "pgm", "pnm", "jpg", "jpeg"];
const TENSOR_EXTENSIONS: &[&str] = &["dynt"];

fn has_extension(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
        .unwrap_or(false)
}

/// Image files in `dir`, sorted by the raw bytes of their file names.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if entry.file_type()?.is_file() && has_extension(&path, IMAGE_EXTENSIONS) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| {
        let key = |p: &PathBuf| p.file_name().map(|n| n.as_encoded_bytes().to_vec());
        key(a).cmp(&key(b))
    });
    Ok(files)
}

/// Decodes one image into a `(C, H, W)` byte tensor laid out for `modality`.
pub fn read_image(path: &Path, modality: Modality) -> Result<ByteImage> {
    let decoded = ImageReader::open(path)?.with_guessed_format()?.decode()?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, interleaved): (usize, Vec<u8>) = match modality {
        Modality::Rgb => (3, decoded.to_rgb8().into_raw()),
        Modality::Gray => (1, decoded.to_luma8().into_raw()),
        Modality::Flow => match decoded {
            Decoded::ImageLumaA8(img) => (2, img.into_raw()),
            other => {
                let rgb = other.to_rgb8().into_raw();
                let xy = rgb.chunks_exact(3).flat_map(|p| [p[0], p[1]]).collect();
                (2, xy)
            }
        },
        Modality::Feature => match decoded.color().channel_count() {
            1 => (1, decoded.to_luma8().into_raw()),
            2 => (2, decoded.to_luma_alpha8().into_raw()),
            3 => (3, decoded.to_rgb8().into_raw()),
            _ => (4, decoded.to_rgba8().into_raw()),
        },
    };
    ByteImage::new(vec![channels, h, w], planar(&interleaved, channels, h * w))
}

fn planar(interleaved: &[u8], channels: usize, plane: usize) -> Vec<u8> {
    let mut out = vec![0u8; channels * plane];
    for (i, px) in interleaved.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            out[c * plane + i] = v;
        }
    }
    out
}

fn interleaved(planar: &[u8], channels: usize, plane: usize) -> Vec<u8> {
    let mut out = vec![0u8; channels * plane];
    for c in 0..channels {
        for i in 0..plane {
            out[i * channels + c] = planar[c * plane + i];
        }
    }
    out
}

fn promote_bytes(bytes: &ByteImage, modality: Modality, flow: &FlowEncoding) -> Result<Tensor> {
    match modality {
        Modality::Flow => flow_decode(bytes, flow),
        _ => Ok(bytes.to_unit_tensor()),
    }
}

/// Loads a frame sequence from a directory of images or a `(T, C, H, W)` tensor file.
///
/// 8-bit data is scaled to `[0, 1]`, except for the flow modality where bytes
/// are decoded back to pixel displacements.
pub fn load_sequence(path: &Path, modality: Modality, flow: &FlowEncoding) -> Result<FrameSequence> {
    if path.is_dir() {
        let files = list_frames(path)?;
        if files.is_empty() {
            return Err(Error::EmptyInput(format!(
                "no image frames in {}",
                path.display()
            )));
        }
        let frames = files
            .iter()
            .map(|f| promote_bytes(&read_image(f, modality)?, modality, flow))
            .collect::<Result<Vec<_>>>()?;
        return FrameSequence::new(frames, modality).map_err(|e| match e {
            Error::Dimension { expected, actual } => Error::Format(format!(
                "frames in {} differ in shape: {expected:?} vs {actual:?}",
                path.display()
            )),
            other => other,
        });
    }
    if has_extension(path, TENSOR_EXTENSIONS) || !has_extension(path, IMAGE_EXTENSIONS) {
        return sequence_from_file(&TensorFile::read(path)?, modality, flow);
    }
    let frame = promote_bytes(&read_image(path, modality)?, modality, flow)?;
    FrameSequence::new(vec![frame], modality)
}

pub fn sequence_from_file(
    file: &TensorFile,
    modality: Modality,
    flow: &FlowEncoding,
) -> Result<FrameSequence> {
    let [len, c, h, w] = file.dims[..] else {
        return Err(Error::Format(format!(
            "sequence files need dims (T, C, H, W), got {:?}",
            file.dims
        )));
    };
    let frame_len = c * h * w;
    let dims = vec![c, h, w];
    let frames = (0..len)
        .map(|t| {
            let range = t * frame_len..(t + 1) * frame_len;
            match &file.data {
                TensorData::F64(v) => Tensor::new(dims.clone(), v[range].to_vec()),
                TensorData::F32(v) => {
                    Tensor::new(dims.clone(), v[range].iter().map(|&x| f64::from(x)).collect())
                }
                TensorData::U8(v) => {
                    let bytes = ByteImage::new(dims.clone(), v[range].to_vec())?;
                    promote_bytes(&bytes, modality, flow)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, modality)
}

/// Writes a sequence as an f64 `(T, C, H, W)` tensor file.
pub fn write_sequence(seq: &FrameSequence, path: &Path) -> Result<()> {
    if seq.frame_dims().len() != 3 {
        return Err(Error::Format(format!(
            "sequence files hold (C, H, W) frames, got {:?}",
            seq.frame_dims()
        )));
    }
    let mut dims = vec![seq.len()];
    dims.extend_from_slice(seq.frame_dims());
    let data = seq
        .frames()
        .iter()
        .flat_map(|f| f.data().iter().copied())
        .collect();
    TensorFile::new(dims, TensorData::F64(data))?.write(path)
}

/// Writes a real tensor as an f64 tensor file.
pub fn write_tensor(t: &Tensor, path: &Path) -> Result<()> {
    TensorFile::new(t.dims().to_vec(), TensorData::F64(t.data().to_vec()))?.write(path)
}

/// Whether [`write_image`] produces a PNG for this image (1 or 3 channels).
pub fn is_png_compatible(img: &ByteImage) -> bool {
    matches!(img.channels(), Some(1) | Some(3))
}

/// PNG for 1- and 3-channel images, a u8 tensor file for anything else.
pub fn write_image(img: &ByteImage, path: &Path) -> Result<()> {
    if !is_png_compatible(img) {
        return TensorFile::new(img.dims().to_vec(), TensorData::U8(img.data().to_vec()))?
            .write(path);
    }
    let [c, h, w] = img.dims()[..] else {
        unreachable!("png-compatible images are rank 3")
    };
    let color = if c == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    let pixels = interleaved(img.data(), c, h * w);
    let file = BufWriter::new(fs::File::create(path)?);
    image::codecs::png::PngEncoder::new(file).write_image(&pixels, w as u32, h as u32, color)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_file_layout() {
        let f = TensorFile::new(vec![2], TensorData::U8(vec![7, 9])).unwrap();
        let bytes = f.to_bytes();
        let mut want = b"DYNT".to_vec();
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u64.to_le_bytes());
        want.extend_from_slice(&3u32.to_le_bytes());
        want.extend_from_slice(&[7, 9]);
        assert_eq!(bytes, want);
        assert_eq!(TensorFile::from_bytes(&bytes).unwrap(), f);
    }

    #[test]
    fn tensor_file_rejects_corruption() {
        let f = TensorFile::new(vec![1, 2], TensorData::F32(vec![1.5, -2.0])).unwrap();
        let bytes = f.to_bytes();
        assert_eq!(TensorFile::from_bytes(&bytes).unwrap(), f);
        assert!(TensorFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(TensorFile::from_bytes(&bytes[..6]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(TensorFile::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(TensorFile::from_bytes(&bad).is_err());
        let mut bad = bytes;
        let dtype_at = 12 + 16;
        bad[dtype_at] = 9;
        assert!(TensorFile::from_bytes(&bad).is_err());
    }

    #[test]
    fn flow_encode_examples() {
        let enc = FlowEncoding::default();
        assert_eq!(enc.encode_value(20.0), 255);
        assert_eq!(enc.encode_value(-20.0), 0);
        assert_eq!(enc.encode_value(0.0), 128);
        assert_eq!(enc.encode_value(50.0), 255);
        assert_eq!(enc.encode_value(-1e9), 0);
    }

    #[test]
    fn flow_decode_examples() {
        let enc = FlowEncoding::default();
        assert_eq!(enc.decode_value(255), 20.0);
        assert_eq!(enc.decode_value(0), -20.0);
        assert!((enc.decode_value(128) - 0.0784313725490196).abs() < 1e-12);

        let img = ByteImage::new(vec![2, 1, 2], vec![0, 128, 255, 1]).unwrap();
        let t = flow_decode(&img, &enc).unwrap();
        assert_eq!(t.data()[2], 20.0);
        let three = ByteImage::new(vec![3, 1, 1], vec![0, 0, 0]).unwrap();
        assert!(matches!(flow_decode(&three, &enc), Err(Error::Format(_))));
    }

    #[test]
    fn flow_bytes_survive_decode_encode() {
        for clip in [20.0, 1.0, 7.3, 1000.0] {
            let enc = FlowEncoding::new(clip).unwrap();
            for b in 0..=255u8 {
                assert_eq!(enc.encode_value(enc.decode_value(b)), b, "clip {clip} byte {b}");
            }
        }
        assert!(FlowEncoding::new(0.0).is_err());
    }

    #[test]
    fn planar_interleaved_inverse() {
        let inter: Vec<u8> = (0..12).collect();
        let p = planar(&inter, 3, 4);
        assert_eq!(p, vec![0, 3, 6, 9, 1, 4, 7, 10, 2, 5, 8, 11]);
        assert_eq!(interleaved(&p, 3, 4), inter);
    }
}
