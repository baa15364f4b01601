//! RGB screenshot frames with normalized channel values, and the pixel-level
//! mean squared error used to find visual transitions.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::trace::FrameRef;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FrameError {
    #[error("frame dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("invalid frame: {0}")]
    Invalid(String),
    #[error("frame {path} unavailable: {reason}")]
    Unavailable { path: String, reason: String },
}

/// Row-major interleaved RGB, each channel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::Invalid(alloc::format!(
                "{width}x{height} frame"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(FrameError::Invalid(alloc::format!(
                "{} values for a {width}x{height} RGB frame",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FrameError::Invalid(alloc::format!(
                "channel value {v} outside [0,1]"
            )));
        }
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [f32; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Frame::new(width, height, data).expect("filled frame is well-formed")
    }

    pub fn from_rgb8(width: u32, height: u32, bytes: &[u8]) -> Result<Self, FrameError> {
        let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        Frame::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [f32; 3]) {
        let o = self.offset(x, y);
        for (c, v) in rgb.iter().enumerate() {
            self.data[o + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Fills the axis-aligned rectangle `[x0, x1) × [y0, y1)`, clipped to the frame.
    pub fn fill_rect(&mut self, x0: u32, y0: u32, x1: u32, y1: u32, rgb: [f32; 3]) {
        for y in y0..y1.min(self.height) {
            for x in x0..x1.min(self.width) {
                self.set_pixel(x, y, rgb);
            }
        }
    }

    /// Normalized histogram of per-pixel mean intensity.
    pub fn intensity_histogram(&self, bins: usize) -> Vec<f64> {
        let bins = bins.max(1);
        let mut h = vec![0.0; bins];
        let n = (self.width as usize * self.height as usize) as f64;
        for px in self.data.chunks_exact(3) {
            let mean = (px[0] as f64 + px[1] as f64 + px[2] as f64) / 3.0;
            let b = ((mean * bins as f64) as usize).min(bins - 1);
            h[b] += 1.0;
        }
        for v in &mut h {
            *v /= n;
        }
        h
    }

    /// Box-filter downscale by an integer factor (each output dimension at least 1).
    pub fn downscale(&self, factor: u32) -> Frame {
        if factor <= 1 {
            return self.clone();
        }
        let w = (self.width / factor).max(1);
        let h = (self.height / factor).max(1);
        let mut data = Vec::with_capacity(w as usize * h as usize * 3);
        for oy in 0..h {
            for ox in 0..w {
                let mut acc = [0.0f64; 3];
                let mut count = 0.0;
                for y in oy * factor..((oy + 1) * factor).min(self.height) {
                    for x in ox * factor..((ox + 1) * factor).min(self.width) {
                        let p = self.pixel(x, y);
                        for c in 0..3 {
                            acc[c] += p[c] as f64;
                        }
                        count += 1.0;
                    }
                }
                data.extend(acc.iter().map(|v| (v / count) as f32));
            }
        }
        Frame {
            width: w,
            height: h,
            data,
        }
    }

    /// Bilinear resampling to an arbitrary size.
    pub fn resize_bilinear(&self, width: u32, height: u32) -> Frame {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let width = width.max(1);
        let height = height.max(1);
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for oy in 0..height {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy as u32;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for ox in 0..width {
                let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx as u32;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let (p00, p10, p01, p11) = (
                    self.pixel(x0, y0),
                    self.pixel(x1, y0),
                    self.pixel(x0, y1),
                    self.pixel(x1, y1),
                );
                for c in 0..3 {
                    let top = p00[c] as f64 * (1.0 - tx) + p10[c] as f64 * tx;
                    let bottom = p01[c] as f64 * (1.0 - tx) + p11[c] as f64 * tx;
                    data.push((top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0) as f32);
                }
            }
        }
        Frame {
            width,
            height,
            data,
        }
    }
}

/// Mean over all pixels and channels of the squared channel difference.
pub fn frame_mse(a: &Frame, b: &Frame) -> Result<f64, FrameError> {
    if a.dims() != b.dims() {
        return Err(FrameError::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// How to compare frames recorded at different resolutions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchPolicy {
    #[default]
    Error,
    /// Bilinearly resample both frames to the smaller common size.
    DownscaleToCommon,
}

pub fn frame_mse_with(a: &Frame, b: &Frame, policy: MismatchPolicy) -> Result<f64, FrameError> {
    if a.dims() == b.dims() || policy == MismatchPolicy::Error {
        return frame_mse(a, b);
    }
    let w = a.width.min(b.width);
    let h = a.height.min(b.height);
    frame_mse(&a.resize_bilinear(w, h), &b.resize_bilinear(w, h))
}

/// Total-variation distance between two normalized histograms, in `[0, 1]`.
pub fn histogram_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    let l1: f64 = (0..n)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .sum();
    l1 / 2.0
}

/// Resolves screenshot references to decoded frames.
pub trait FrameSource {
    fn load(&self, frame: &FrameRef) -> Result<Frame, FrameError>;
}

impl<S: FrameSource + ?Sized> FrameSource for &S {
    fn load(&self, frame: &FrameRef) -> Result<Frame, FrameError> {
        (**self).load(frame)
    }
}

/// Frames held in memory, keyed by path.
#[derive(Debug, Clone, Default)]
pub struct MemoryFrames {
    frames: BTreeMap<String, Frame>,
}

impl MemoryFrames {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, frame: Frame) {
        self.frames.insert(path.into(), frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

impl FrameSource for MemoryFrames {
    fn load(&self, frame: &FrameRef) -> Result<Frame, FrameError> {
        self.frames
            .get(&frame.path)
            .cloned()
            .ok_or_else(|| FrameError::Unavailable {
                path: frame.path.clone(),
                reason: "not in memory".into(),
            })
    }
}

/// A source with no frames; every lookup fails.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoFrames;

impl FrameSource for NoFrames {
    fn load(&self, frame: &FrameRef) -> Result<Frame, FrameError> {
        Err(FrameError::Unavailable {
            path: frame.path.clone(),
            reason: "no frame source".into(),
        })
    }
}
