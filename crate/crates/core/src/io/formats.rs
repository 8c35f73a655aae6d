//! Raster file formats.
//!
//! `GLR1` is a lossless little-endian float format: the magic `GLR1`, then
//! width, height and channel count as `u32`, then `f64` samples row-major
//! with channels interleaved. Invalid pixels are stored as NaN in every
//! channel. Depth also has a 16-bit PNG variant in millimeters (0 =
//! invalid) and segmentations are 8-bit PNGs with 255 as the sentinel.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{DepthMap, ParamMap, SegmentationMap};

use super::read_bytes;

const MAGIC: &[u8; 4] = b"GLR1";
const HEADER: usize = 16;

/// Largest label an 8-bit segmentation PNG can hold.
pub const MAX_PNG_LABEL: u32 = 254;
const PNG_SENTINEL: u8 = 255;

/// Multi-channel float raster with NaN marking invalid pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatRaster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FloatRaster {
    pub fn from_depth(depth: &DepthMap) -> Self {
        let (width, height) = depth.dims();
        let data = (0..width * height).map(|i| depth.get_index(i).unwrap_or(f64::NAN)).collect();
        Self { width, height, channels: 1, data }
    }

    pub fn from_params(pm: &ParamMap) -> Self {
        let (width, height) = pm.dims();
        let data = (0..width * height).flat_map(|i| pm.get_index(i).unwrap_or([f64::NAN; 4])).collect();
        Self { width, height, channels: 4, data }
    }

    pub fn from_vectors(width: usize, height: usize, data: &[[f64; 3]]) -> Self {
        Self { width, height, channels: 3, data: data.iter().flatten().copied().collect() }
    }

    fn pixel(&self, i: usize) -> Option<&[f64]> {
        let px = &self.data[i * self.channels..(i + 1) * self.channels];
        (!px.iter().any(|x| x.is_nan())).then_some(px)
    }

    fn expect_channels(&self, channels: usize, path: &Path) -> Result<()> {
        if self.channels != channels {
            return Err(corrupt(path, format!("expected {channels} channels, found {}", self.channels)));
        }
        Ok(())
    }

    pub fn to_depth(&self, path: &Path) -> Result<DepthMap> {
        self.expect_channels(1, path)?;
        let mut depth = DepthMap::invalid(self.width, self.height);
        for i in 0..self.width * self.height {
            if let Some(px) = self.pixel(i) {
                if !(px[0] > 0.0 && px[0].is_finite()) {
                    return Err(corrupt(path, format!("depth sample {} at index {i} is not positive", px[0])));
                }
                depth.set(i % self.width, i / self.width, Some(px[0]));
            }
        }
        Ok(depth)
    }

    pub fn to_params(&self, path: &Path) -> Result<ParamMap> {
        self.expect_channels(4, path)?;
        let mut pm = ParamMap::invalid(self.width, self.height);
        for i in 0..self.width * self.height {
            if let Some(px) = self.pixel(i) {
                pm.set(i % self.width, i / self.width, Some([px[0], px[1], px[2], px[3]]));
            }
        }
        Ok(pm)
    }

    pub fn to_vectors(&self, path: &Path) -> Result<Vec<[f64; 3]>> {
        self.expect_channels(3, path)?;
        Ok(self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        for d in [self.width, self.height, self.channels] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < HEADER || &bytes[..4] != MAGIC {
            return Err(corrupt(path, "missing GLR1 header"));
        }
        let dim = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
        let (width, height, channels) = (dim(0), dim(1), dim(2));
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(HEADER));
        if channels == 0 || expected != Some(bytes.len()) {
            return Err(corrupt(
                path,
                format!("{width}x{height}x{channels} header does not match {} bytes", bytes.len()),
            ));
        }
        let data = bytes[HEADER..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { width, height, channels, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_bytes(path)?, path)
    }
}

pub(crate) fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptRaster { path: path.to_path_buf(), reason: reason.into() }
}

fn encode_png(
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let fail = |e: png::EncodingError| Error::InvalidArgument(format!("png encoding failed: {e}"));
    let mut writer = encoder.write_header().map_err(fail)?;
    writer.write_image_data(data).map_err(fail)?;
    writer.finish().map_err(fail)?;
    Ok(out)
}

struct DecodedPng {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: Vec<u8>,
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<DecodedPng> {
    let fail = |e: png::DecodingError| corrupt(path, e.to_string());
    let mut reader = png::Decoder::new(Cursor::new(bytes)).read_info().map_err(fail)?;
    let size = reader.output_buffer_size().ok_or_else(|| corrupt(path, "image too large"))?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(fail)?;
    data.truncate(info.buffer_size());
    Ok(DecodedPng {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data,
    })
}

/// Millimeter value of a depth sample, or an error when it does not fit 16
/// bits.
fn depth_mm(z: f64) -> Result<u16> {
    let mm = (z * 1000.0).round();
    if !(1.0..=65535.0).contains(&mm) {
        return Err(Error::InvalidArgument(format!("depth {z} m is outside the 16-bit millimeter range")));
    }
    Ok(mm as u16)
}

pub fn encode_depth_png(depth: &DepthMap) -> Result<Vec<u8>> {
    let (width, height) = depth.dims();
    let mut data = Vec::with_capacity(2 * width * height);
    for i in 0..width * height {
        let mm = depth.get_index(i).map(depth_mm).transpose()?.unwrap_or(0);
        data.extend_from_slice(&mm.to_be_bytes());
    }
    encode_png(width, height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &data)
}

pub fn decode_depth_png(bytes: &[u8], path: &Path) -> Result<DepthMap> {
    let img = decode_png(bytes, path)?;
    if img.color != png::ColorType::Grayscale || img.depth != png::BitDepth::Sixteen {
        return Err(corrupt(path, format!("expected 16-bit grayscale, found {:?} {:?}", img.color, img.depth)));
    }
    let mm: Vec<u16> = img.data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok(DepthMap::from_fn(img.width, img.height, |u, v| {
        let m = mm[v * img.width + u];
        (m > 0).then(|| m as f64 / 1000.0)
    }))
}

/// Millimeter quantization applied by the 16-bit depth format.
pub fn quantize_depth(depth: &DepthMap) -> Result<DepthMap> {
    let (width, height) = depth.dims();
    let mut out = DepthMap::invalid(width, height);
    for i in 0..width * height {
        if let Some(z) = depth.get_index(i) {
            out.set(i % width, i / width, Some(depth_mm(z)? as f64 / 1000.0));
        }
    }
    Ok(out)
}

pub fn encode_seg_png(seg: &SegmentationMap) -> Result<Vec<u8>> {
    let (width, height) = seg.dims();
    let data = seg
        .labels()
        .iter()
        .map(|&l| match l {
            SegmentationMap::SENTINEL => Ok(PNG_SENTINEL),
            l if l <= MAX_PNG_LABEL => Ok(l as u8),
            l => Err(Error::InvalidArgument(format!(
                "label {l} does not fit an 8-bit segmentation (max {MAX_PNG_LABEL})"
            ))),
        })
        .collect::<Result<Vec<u8>>>()?;
    encode_png(width, height, png::ColorType::Grayscale, png::BitDepth::Eight, &data)
}

pub fn decode_seg_png(bytes: &[u8], path: &Path) -> Result<SegmentationMap> {
    let img = decode_png(bytes, path)?;
    if img.color != png::ColorType::Grayscale || img.depth != png::BitDepth::Eight {
        return Err(corrupt(path, format!("expected 8-bit grayscale, found {:?} {:?}", img.color, img.depth)));
    }
    let labels =
        img.data.iter().map(|&b| if b == PNG_SENTINEL { SegmentationMap::SENTINEL } else { b as u32 }).collect();
    SegmentationMap::from_labels(img.width, img.height, labels)
}

/// 8-bit RGB image.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn encode(&self) -> Result<Vec<u8>> {
        encode_png(self.width, self.height, png::ColorType::Rgb, png::BitDepth::Eight, &self.data)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let img = decode_png(bytes, path)?;
        if img.color != png::ColorType::Rgb || img.depth != png::BitDepth::Eight {
            return Err(corrupt(path, format!("expected 8-bit RGB, found {:?} {:?}", img.color, img.depth)));
        }
        Ok(Self { width: img.width, height: img.height, data: img.data })
    }
}

/// Distinct color per label; the sentinel is black.
pub fn palette(label: u32) -> [u8; 3] {
    if label == SegmentationMap::SENTINEL {
        return [0, 0, 0];
    }
    let hue = (label as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let x = 1.0 - (hue % 2.0 - 1.0).abs();
    let (r, g, b) = match hue as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r, g, b].map(|c: f64| (55.0 + 200.0 * c).round() as u8)
}

/// Color rendering of a segmentation.
pub fn colorize(seg: &SegmentationMap) -> RgbImage {
    let (width, height) = seg.dims();
    RgbImage { width, height, data: seg.labels().iter().flat_map(|&l| palette(l)).collect() }
}
