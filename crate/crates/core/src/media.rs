//! Capture-side plumbing: raw frames, background matting and life-size
//! calibration of the avatar billboard.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{half_rad, Scalar};

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("expected {expected:?} frame, got {actual:?}")]
    FormatMismatch { expected: PixelFormat, actual: PixelFormat },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("invalid calibration input: {0}")]
    InvalidCalibration(String),
    #[error("unknown pixel format tag {0}")]
    UnknownFormat(u8),
    #[error("corrupt run-length data")]
    CorruptRle,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelFormat {
    Rgb,
    RgbaMatted,
}

impl PixelFormat {
    pub fn bytes_per_pixel(self) -> usize {
        match self {
            PixelFormat::Rgb => 3,
            PixelFormat::RgbaMatted => 4,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            PixelFormat::Rgb => 0,
            PixelFormat::RgbaMatted => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(PixelFormat::Rgb),
            1 => Some(PixelFormat::RgbaMatted),
            _ => None,
        }
    }
}

/// Row-major pixel buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u16,
    height: u16,
    format: PixelFormat,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: u16, height: u16, format: PixelFormat, data: Vec<u8>) -> Result<Self, MediaError> {
        let expected = usize::from(width) * usize::from(height) * format.bytes_per_pixel();
        if data.len() != expected {
            return Err(MediaError::InvalidFrame(format!(
                "{width}x{height} {format:?} needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self { width, height, format, data })
    }

    /// Frame filled with one RGB color.
    pub fn solid_rgb(width: u16, height: u16, rgb: [u8; 3]) -> Self {
        let n = usize::from(width) * usize::from(height);
        Self { width, height, format: PixelFormat::Rgb, data: rgb.repeat(n) }
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn format(&self) -> PixelFormat {
        self.format
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u16, y: u16) -> &[u8] {
        let bpp = self.format.bytes_per_pixel();
        let i = (usize::from(y) * usize::from(self.width) + usize::from(x)) * bpp;
        &self.data[i..i + bpp]
    }

    pub fn pixel_mut(&mut self, x: u16, y: u16) -> &mut [u8] {
        let bpp = self.format.bytes_per_pixel();
        let i = (usize::from(y) * usize::from(self.width) + usize::from(x)) * bpp;
        &mut self.data[i..i + bpp]
    }

    /// Alpha channel of a matted frame.
    pub fn alpha(&self) -> Option<Vec<u8>> {
        (self.format == PixelFormat::RgbaMatted).then(|| self.data.chunks_exact(4).map(|p| p[3]).collect())
    }

    /// Drops the alpha channel.
    pub fn to_rgb(&self) -> Frame {
        match self.format {
            PixelFormat::Rgb => self.clone(),
            PixelFormat::RgbaMatted => Frame {
                width: self.width,
                height: self.height,
                format: PixelFormat::Rgb,
                data: self.data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            },
        }
    }

    pub const RAW_HEADER_LEN: usize = 8;

    /// Raw file layout: u16 width, u16 height, u8 format tag, 3 zero bytes,
    /// then pixel bytes. Little-endian.
    pub fn write_raw<W: Write>(&self, mut w: W) -> Result<(), MediaError> {
        let mut header = [0u8; Self::RAW_HEADER_LEN];
        header[0..2].copy_from_slice(&self.width.to_le_bytes());
        header[2..4].copy_from_slice(&self.height.to_le_bytes());
        header[4] = self.format.tag();
        w.write_all(&header)?;
        w.write_all(&self.data)?;
        Ok(())
    }

    pub fn read_raw<R: Read>(mut r: R) -> Result<Frame, MediaError> {
        let mut header = [0u8; Self::RAW_HEADER_LEN];
        r.read_exact(&mut header)?;
        let width = u16::from_le_bytes([header[0], header[1]]);
        let height = u16::from_le_bytes([header[2], header[3]]);
        let format = PixelFormat::from_tag(header[4]).ok_or(MediaError::UnknownFormat(header[4]))?;
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        Frame::new(width, height, format, data)
    }
}

/// Seam for background removal. Implementations take an RGB frame and
/// return an RGBA frame of the same size whose color channels are untouched.
pub trait MattingBackend {
    fn matte(&self, frame: &Frame) -> Result<Frame, MediaError>;

    /// Whether `matte` may be called from several threads at once.
    fn concurrent(&self) -> bool;
}

/// Deterministic chroma-key matting against a solid backdrop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChromaKey {
    pub key: [u8; 3],
    pub tolerance: u8,
}

impl ChromaKey {
    pub fn new(key: [u8; 3], tolerance: u8) -> Self {
        Self { key, tolerance }
    }

    fn is_key(&self, rgb: &[u8]) -> bool {
        rgb.iter().zip(self.key).map(|(&c, k)| c.abs_diff(k)).max().unwrap_or(0) <= self.tolerance
    }
}

impl MattingBackend for ChromaKey {
    fn matte(&self, frame: &Frame) -> Result<Frame, MediaError> {
        chroma_key_matte(frame, self.key, self.tolerance)
    }

    fn concurrent(&self) -> bool {
        true
    }
}

/// Alpha is 0 where every channel is within `tolerance` of `key`, else 255.
pub fn chroma_key_matte(frame: &Frame, key: [u8; 3], tolerance: u8) -> Result<Frame, MediaError> {
    if frame.format != PixelFormat::Rgb {
        return Err(MediaError::FormatMismatch { expected: PixelFormat::Rgb, actual: frame.format });
    }
    let ck = ChromaKey { key, tolerance };
    let data = frame
        .data
        .chunks_exact(3)
        .flat_map(|p| [p[0], p[1], p[2], if ck.is_key(p) { 0 } else { 255 }])
        .collect();
    Ok(Frame { width: frame.width, height: frame.height, format: PixelFormat::RgbaMatted, data })
}

/// Byte-oriented run-length coding: `(count, value)` pairs, count 1..=255.
pub fn rle_encode(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut iter = data.iter().copied().peekable();
    while let Some(b) = iter.next() {
        let mut run = 1u8;
        while run < u8::MAX && iter.peek() == Some(&b) {
            iter.next();
            run += 1;
        }
        out.extend_from_slice(&[run, b]);
    }
    out
}

pub fn rle_decode(data: &[u8]) -> Result<Vec<u8>, MediaError> {
    if !data.len().is_multiple_of(2) {
        return Err(MediaError::CorruptRle);
    }
    let mut out = Vec::new();
    for pair in data.chunks_exact(2) {
        if pair[0] == 0 {
            return Err(MediaError::CorruptRle);
        }
        out.extend(std::iter::repeat_n(pair[1], usize::from(pair[0])));
    }
    Ok(out)
}

/// Measurements from the stand-beside calibration shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInput<T> {
    pub person_pixel_height: T,
    pub frame_pixel_height: T,
    pub camera_vertical_fov_deg: T,
    pub camera_distance_m: T,
    pub real_height_m: T,
}

impl<T: Scalar> CalibrationInput<T> {
    pub fn validate(&self) -> Result<(), MediaError> {
        let all = [
            self.person_pixel_height,
            self.frame_pixel_height,
            self.camera_vertical_fov_deg,
            self.camera_distance_m,
            self.real_height_m,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > T::zero())) {
            return Err(MediaError::InvalidCalibration("all quantities must be positive".into()));
        }
        if self.person_pixel_height > self.frame_pixel_height {
            return Err(MediaError::InvalidCalibration("person taller than the frame".into()));
        }
        if self.camera_vertical_fov_deg >= T::lit(180.0) {
            return Err(MediaError::InvalidCalibration("vertical FoV must be below 180°".into()));
        }
        Ok(())
    }

    /// World height the person appears to have when the frame is shown at
    /// the camera's own projection.
    pub fn apparent_height_m(&self) -> T {
        T::lit(2.0)
            * self.camera_distance_m
            * half_rad(self.camera_vertical_fov_deg).tan()
            * (self.person_pixel_height / self.frame_pixel_height)
    }
}

/// Factor by which the billboard must be scaled so the rendered person is
/// `real_height_m` tall.
pub fn life_size_scale<T: Scalar>(c: &CalibrationInput<T>) -> Result<T, MediaError> {
    c.validate()?;
    Ok(c.real_height_m / c.apparent_height_m())
}

/// Vertical angle a billboard of `height_m`, standing on the floor at
/// `distance_m`, subtends for an eye at `eye_height_m`.
pub fn subtended_vertical_deg<T: Scalar>(height_m: T, distance_m: T, eye_height_m: T) -> T {
    let top = (height_m - eye_height_m).atan2(distance_m);
    let bottom = (-eye_height_m).atan2(distance_m);
    (top - bottom).to_degrees()
}
