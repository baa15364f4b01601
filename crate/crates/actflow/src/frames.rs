//! PNG screenshot loading and encoding.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use actflow_core::frame::{Frame, FrameError, FrameSource};
use actflow_core::trace::FrameRef;
use base64::Engine;
use image::{imageops::FilterType, DynamicImage, ImageFormat, RgbImage};

/// Loads screenshot references relative to `root`, optionally box-downscaled
/// by an integer factor before comparison.
#[derive(Debug, Clone)]
pub struct PngFrames {
    root: PathBuf,
    downscale: u32,
}

impl PngFrames {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        PngFrames {
            root: root.into(),
            downscale: 1,
        }
    }

    pub fn with_downscale(mut self, factor: u32) -> Self {
        self.downscale = factor.max(1);
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, r: &FrameRef) -> PathBuf {
        self.root.join(&r.path)
    }

    /// Cheap readability check: decodes the header only.
    pub fn check(&self, r: &FrameRef) -> Result<(), String> {
        if r.frame.is_some_and(|f| f != 0) {
            return Err(format!(
                "frame {} requested from a still image",
                r.frame.unwrap_or(0)
            ));
        }
        image::image_dimensions(self.resolve(r))
            .map(|_| ())
            .map_err(|e| e.to_string())
    }
}

impl FrameSource for PngFrames {
    fn load(&self, r: &FrameRef) -> Result<Frame, FrameError> {
        let unavailable = |reason: String| FrameError::Unavailable {
            path: r.path.clone(),
            reason,
        };
        self.check(r).map_err(unavailable)?;
        let img = image::open(self.resolve(r))
            .map_err(|e| unavailable(e.to_string()))?
            .to_rgb8();
        let frame = Frame::from_rgb8(img.width(), img.height(), img.as_raw())?;
        Ok(if self.downscale > 1 {
            frame.downscale(self.downscale)
        } else {
            frame
        })
    }
}

pub fn to_rgb_image(frame: &Frame) -> RgbImage {
    let (w, h) = frame.dims();
    let bytes = frame
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    RgbImage::from_raw(w, h, bytes).expect("frame data is width*height*3")
}

pub fn write_png(frame: &Frame, path: &Path) -> image::ImageResult<()> {
    to_rgb_image(frame).save_with_format(path, ImageFormat::Png)
}

/// Re-encodes an image as a PNG data URL, shrunk so its longer edge is at
/// most `max_edge` pixels.
pub fn png_data_url(path: &Path, max_edge: u32) -> Result<String, String> {
    let img = image::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let img = if img.width().max(img.height()) > max_edge {
        img.resize(max_edge, max_edge, FilterType::Triangle)
    } else {
        img
    };
    let mut buf = Cursor::new(Vec::new());
    DynamicImage::ImageRgb8(img.to_rgb8())
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    let b64 = base64::engine::general_purpose::STANDARD.encode(buf.into_inner());
    Ok(format!("data:image/png;base64,{b64}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_and_downscale() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = Frame::filled(8, 4, [0.0, 0.0, 0.0]);
        f.fill_rect(0, 0, 4, 4, [1.0, 1.0, 1.0]);
        write_png(&f, &dir.path().join("a.png")).unwrap();
        let src = PngFrames::new(dir.path());
        let back = src.load(&FrameRef::new("a.png")).unwrap();
        assert_eq!(back, f);
        let small = src.with_downscale(2).load(&FrameRef::new("a.png")).unwrap();
        assert_eq!(small.dims(), (4, 2));
    }

    #[test]
    fn missing_file_is_unavailable() {
        let src = PngFrames::new("/nonexistent");
        assert!(matches!(
            src.load(&FrameRef::new("x.png")),
            Err(FrameError::Unavailable { .. })
        ));
        assert!(src.check(&FrameRef::new("x.png")).is_err());
    }

    #[test]
    fn data_url_respects_max_edge() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.png");
        write_png(&Frame::filled(64, 32, [0.5, 0.2, 0.1]), &path).unwrap();
        let url = png_data_url(&path, 16).unwrap();
        let b64 = url.strip_prefix("data:image/png;base64,").unwrap();
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(b64)
            .unwrap();
        let img = image::load_from_memory(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (16, 8));
    }
}
