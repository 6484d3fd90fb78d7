//! 8-bit image buffers, float depth maps and their PNG forms.

use std::path::{Path, PathBuf};

use image::{ImageBuffer as PngBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum BufferError {
    #[error("unsupported channel count {0} (expected 1, 3 or 6)")]
    Channels(usize),
    #[error("buffer length {got} does not match {width}x{height}x{channels}")]
    Length {
        width: u32,
        height: u32,
        channels: usize,
        got: usize,
    },
    #[error("{channels}-channel images cannot be stored as PNG")]
    NotPng { channels: usize },
    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Row-major interleaved 8-bit image with 1, 3 or 6 channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: usize) -> Result<Self, BufferError> {
        check_channels(channels)?;
        Ok(Self {
            width,
            height,
            channels,
            data: vec![0; width as usize * height as usize * channels],
        })
    }

    pub fn from_raw(width: u32, height: u32, channels: usize, data: Vec<u8>) -> Result<Self, BufferError> {
        check_channels(channels)?;
        if data.len() != width as usize * height as usize * channels {
            return Err(BufferError::Length {
                width,
                height,
                channels,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Uniformly colored image; `color.len()` sets the channel count.
    pub fn filled(width: u32, height: u32, color: &[u8]) -> Result<Self, BufferError> {
        let channels = color.len();
        check_channels(channels)?;
        let data = color
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * channels)
            .collect();
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, value: &[u8]) {
        let o = self.offset(x, y);
        let c = self.channels;
        self.data[o..o + c].copy_from_slice(&value[..c]);
    }

    pub fn is_black(&self, x: u32, y: u32) -> bool {
        self.pixel(x, y).iter().all(|v| *v == 0)
    }

    /// Interleave the channels of two equally sized images.
    pub fn concat_channels(a: &ImageBuffer, b: &ImageBuffer) -> Result<Self, BufferError> {
        if a.dimensions() != b.dimensions() {
            return Err(BufferError::Length {
                width: a.width,
                height: a.height,
                channels: a.channels + b.channels,
                got: b.data.len(),
            });
        }
        let channels = a.channels + b.channels;
        check_channels(channels)?;
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        for (pa, pb) in a.data.chunks_exact(a.channels).zip(b.data.chunks_exact(b.channels)) {
            data.extend_from_slice(pa);
            data.extend_from_slice(pb);
        }
        Self::from_raw(a.width, a.height, channels, data)
    }

    /// Split off the channel range `[start, start + count)` as a new image.
    pub fn channel_planes(&self, start: usize, count: usize) -> Result<Self, BufferError> {
        check_channels(count)?;
        if start + count > self.channels {
            return Err(BufferError::Channels(start + count));
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .flat_map(|px| px[start..start + count].iter().copied())
            .collect();
        Self::from_raw(self.width, self.height, count, data)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, BufferError> {
        let mut out = std::io::Cursor::new(Vec::new());
        let fmt = image::ImageFormat::Png;
        let res = match self.channels {
            1 => PngBuffer::<Luma<u8>, _>::from_raw(self.width, self.height, self.data.clone())
                .expect("length checked")
                .write_to(&mut out, fmt),
            3 => PngBuffer::<Rgb<u8>, _>::from_raw(self.width, self.height, self.data.clone())
                .expect("length checked")
                .write_to(&mut out, fmt),
            c => return Err(BufferError::NotPng { channels: c }),
        };
        res.map_err(|e| BufferError::Image {
            path: PathBuf::from("<memory>"),
            source: e,
        })?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), BufferError> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| BufferError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// Decode PNG bytes, converting to grayscale or RGB as stored. `path`
    /// only labels errors.
    pub fn decode_png(bytes: &[u8], path: &Path) -> Result<Self, BufferError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| BufferError::Image {
            path: path.to_path_buf(),
            source: e,
        })?;
        let (w, h) = (img.width(), img.height());
        match img.color().channel_count() {
            1 | 2 => Self::from_raw(w, h, 1, img.into_luma8().into_raw()),
            _ => Self::from_raw(w, h, 3, img.into_rgb8().into_raw()),
        }
    }

    pub fn load_png(path: &Path) -> Result<Self, BufferError> {
        let bytes = read(path)?;
        Self::decode_png(&bytes, path)
    }
}

fn read(path: &Path) -> Result<Vec<u8>, BufferError> {
    std::fs::read(path).map_err(|e| BufferError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn check_channels(c: usize) -> Result<(), BufferError> {
    match c {
        1 | 3 | 6 => Ok(()),
        other => Err(BufferError::Channels(other)),
    }
}

/// Camera-frame depth in meters; `+inf` marks pixels with no surface.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

/// Linear scale used to store a depth map in 16 bits. Stored next to the
/// PNG as `{"d_min": .., "d_max": ..}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self { d_min: 0.1, d_max: 5.0 }
    }
}

/// 16-bit code reserved for background.
pub const DEPTH_PNG_BACKGROUND: u16 = u16::MAX;
const DEPTH_PNG_STEPS: f64 = (u16::MAX - 1) as f64;

impl DepthMap {
    pub fn background(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![f32::INFINITY; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<f32>) -> Result<Self, BufferError> {
        if data.len() != width as usize * height as usize {
            return Err(BufferError::Length {
                width,
                height,
                channels: 1,
                got: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, d: f32) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = d;
    }

    /// Quantize into 16 bits: `[d_min, d_max]` maps linearly onto
    /// `0..=65534`, background onto 65535.
    pub fn to_u16(&self, range: &DepthRange) -> Vec<u16> {
        let span = range.d_max - range.d_min;
        self.data
            .iter()
            .map(|&d| {
                if !d.is_finite() {
                    DEPTH_PNG_BACKGROUND
                } else {
                    let x = ((d as f64).clamp(range.d_min, range.d_max) - range.d_min) / span;
                    (x * DEPTH_PNG_STEPS).round() as u16
                }
            })
            .collect()
    }

    pub fn from_u16(width: u32, height: u32, codes: &[u16], range: &DepthRange) -> Result<Self, BufferError> {
        let span = range.d_max - range.d_min;
        let data = codes
            .iter()
            .map(|&c| {
                if c == DEPTH_PNG_BACKGROUND {
                    f32::INFINITY
                } else {
                    (range.d_min + c as f64 / DEPTH_PNG_STEPS * span) as f32
                }
            })
            .collect();
        Self::from_raw(width, height, data)
    }

    pub fn encode_png16(&self, range: &DepthRange) -> Result<Vec<u8>, BufferError> {
        let img = PngBuffer::<Luma<u16>, _>::from_raw(self.width, self.height, self.to_u16(range)).expect("length checked");
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| BufferError::Image {
            path: PathBuf::from("<memory>"),
            source: e,
        })?;
        Ok(out.into_inner())
    }

    pub fn save_png16(&self, path: &Path, range: &DepthRange) -> Result<(), BufferError> {
        std::fs::write(path, self.encode_png16(range)?).map_err(|e| BufferError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn decode_png16(bytes: &[u8], range: &DepthRange, path: &Path) -> Result<Self, BufferError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| BufferError::Image {
            path: path.to_path_buf(),
            source: e,
        })?;
        let (w, h) = (img.width(), img.height());
        let codes = img.into_luma16().into_raw();
        Self::from_u16(w, h, &codes, range)
    }

    pub fn load_png16(path: &Path, range: &DepthRange) -> Result<Self, BufferError> {
        let bytes = read(path)?;
        Self::decode_png16(&bytes, range, path)
    }
}

impl DepthRange {
    pub fn new(d_min: f64, d_max: f64) -> Self {
        Self { d_min, d_max }
    }

    pub fn is_valid(&self) -> bool {
        self.d_min.is_finite() && self.d_max.is_finite() && self.d_min < self.d_max
    }

    pub fn save_sidecar(&self, path: &Path) -> Result<(), BufferError> {
        let text = serde_json::to_string_pretty(self).expect("plain struct");
        std::fs::write(path, text).map_err(|e| BufferError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load_sidecar(path: &Path) -> Result<Self, BufferError> {
        let text = std::fs::read_to_string(path).map_err(|e| BufferError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let range: DepthRange = serde_json::from_str(&text).map_err(|e| BufferError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if !range.is_valid() {
            return Err(BufferError::Format {
                path: path.to_path_buf(),
                message: "depth range needs finite d_min < d_max".into(),
            });
        }
        Ok(range)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_is_checked() {
        assert!(ImageBuffer::from_raw(2, 2, 3, vec![0; 11]).is_err());
        assert!(ImageBuffer::new(2, 2, 4).is_err());
        let img = ImageBuffer::filled(3, 2, &[1, 2, 3]).unwrap();
        assert_eq!(img.data().len(), 18);
        assert_eq!(img.pixel(2, 1), &[1, 2, 3]);
    }

    #[test]
    fn concat_then_split() {
        let a = ImageBuffer::filled(4, 3, &[10, 20, 30]).unwrap();
        let b = ImageBuffer::filled(4, 3, &[1, 2, 3]).unwrap();
        let six = ImageBuffer::concat_channels(&a, &b).unwrap();
        assert_eq!(six.channels(), 6);
        assert_eq!(six.pixel(1, 1), &[10, 20, 30, 1, 2, 3]);
        assert_eq!(six.channel_planes(0, 3).unwrap(), a);
        assert_eq!(six.channel_planes(3, 3).unwrap(), b);
        assert!(six.encode_png().is_err());
    }

    #[test]
    fn png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = ImageBuffer::new(5, 4, 3).unwrap();
        img.set_pixel(2, 3, &[200, 100, 50]);
        let path = dir.path().join("a.png");
        img.save_png(&path).unwrap();
        assert_eq!(ImageBuffer::load_png(&path).unwrap(), img);
    }

    #[test]
    fn depth_png16_roundtrip_within_step() {
        let dir = tempfile::tempdir().unwrap();
        let range = DepthRange::new(0.5, 3.0);
        let mut d = DepthMap::background(3, 2);
        d.set(0, 0, 0.5);
        d.set(1, 0, 1.234);
        d.set(2, 1, 3.0);
        let path = dir.path().join("d.png");
        d.save_png16(&path, &range).unwrap();
        let back = DepthMap::load_png16(&path, &range).unwrap();
        let step = (range.d_max - range.d_min) / DEPTH_PNG_STEPS;
        for (a, b) in d.data().iter().zip(back.data()) {
            if a.is_finite() {
                assert!(((a - b) as f64).abs() <= step / 2.0 + 1e-6);
            } else {
                assert!(b.is_infinite());
            }
        }
    }
}
