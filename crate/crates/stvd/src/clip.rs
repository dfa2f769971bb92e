//! Core video types: frames, clips, annotations, and training windows.
//!
//! Intensities are real values in `[0, 1]`, stored row-major in `f64`.
//! 8-bit pixel `p` maps to `p / 255` on load and back via
//! round-half-away-from-zero on save (see [`crate::io`]).

use crate::error::{Error, Result};

/// A single grayscale frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("frame dims {height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "frame data length {} != {height}x{width}",
                data.len()
            )));
        }
        Ok(Frame { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Frame { height, width, data: vec![0.0; height * width] }
    }

    /// Constant-intensity frame.
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Frame { height, width, data: vec![value; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Clamp every intensity into `[0, 1]`.
    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }
}

/// An ordered frame sequence with manifest metadata.
#[derive(Debug, Clone)]
pub struct Clip {
    frames: Vec<Frame>,
    fps: f64,
    source_id: String,
}

impl Clip {
    pub fn new(frames: Vec<Frame>, fps: f64, source_id: impl Into<String>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Shape("clip must contain at least one frame".into()));
        }
        let (h, w) = (frames[0].height(), frames[0].width());
        for (i, f) in frames.iter().enumerate() {
            if f.height() != h || f.width() != w {
                return Err(Error::Shape(format!(
                    "frame {i} is {}x{}, expected {h}x{w}",
                    f.height(),
                    f.width()
                )));
            }
        }
        Ok(Clip { frames, fps, source_id: source_id.into() })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: >= 1 frame
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn frame(&self, t: usize) -> &Frame {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }
}

/// Axis-aligned pixel box, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> usize {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        if x1 > x0 && y1 > y0 {
            (x1 - x0) * (y1 - y0)
        } else {
            0
        }
    }

    pub fn overlaps(&self, other: &BoundingBox) -> bool {
        self.intersection_area(other) > 0
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Per-frame object box annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxAnnotation {
    pub frame_index: usize,
    pub object_id: u64,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoxAnnotation {
    pub fn rect(&self) -> BoundingBox {
        BoundingBox { x: self.x, y: self.y, w: self.w, h: self.h }
    }
}

/// Check a set of annotations against a clip's bounds.
pub fn validate_annotations(clip: &Clip, annotations: &[BoxAnnotation]) -> Result<()> {
    for (i, a) in annotations.iter().enumerate() {
        if a.frame_index >= clip.len() {
            return Err(Error::Range(format!(
                "annotation {i}: frame {} >= clip length {}",
                a.frame_index,
                clip.len()
            )));
        }
        if a.w == 0 || a.h == 0 {
            return Err(Error::Range(format!("annotation {i}: zero extent")));
        }
        if a.x + a.w > clip.width() || a.y + a.h > clip.height() {
            return Err(Error::Range(format!(
                "annotation {i}: box ({},{} {}x{}) exceeds frame {}x{}",
                a.x,
                a.y,
                a.w,
                a.h,
                clip.width(),
                clip.height()
            )));
        }
    }
    Ok(())
}

/// A training window around a center frame `t` with temporal stride `T`.
///
/// The window supplies the three network inputs `t`, `t-T`, `t-2T` and the
/// future frame `t+T` used only by the reconstruction target, so it is valid
/// only when all four indices exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameWindow {
    t: usize,
    stride: usize,
}

impl FrameWindow {
    pub fn new(clip_len: usize, t: usize, stride: usize) -> Result<Self> {
        assert!(stride >= 1, "window stride must be >= 1");
        if t < 2 * stride || t + stride >= clip_len {
            return Err(Error::Range(format!(
                "window at t={t} stride={stride} needs frames {} and {} in a {clip_len}-frame clip",
                t as isize - 2 * stride as isize,
                t + stride
            )));
        }
        Ok(FrameWindow { t, stride })
    }

    pub fn center(&self) -> usize {
        self.t
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn past(&self) -> usize {
        self.t - self.stride
    }

    pub fn past2(&self) -> usize {
        self.t - 2 * self.stride
    }

    pub fn future(&self) -> usize {
        self.t + self.stride
    }

    /// The three network input frames, current first.
    pub fn inputs<'c>(&self, clip: &'c Clip) -> [&'c Frame; 3] {
        [clip.frame(self.t), clip.frame(self.past()), clip.frame(self.past2())]
    }

    pub fn future_frame<'c>(&self, clip: &'c Clip) -> &'c Frame {
        clip.frame(self.future())
    }
}

/// All valid windows of a clip at stride `T`, ascending in `t`.
pub fn valid_windows(clip: &Clip, stride: usize) -> Vec<FrameWindow> {
    assert!(stride >= 1, "window stride must be >= 1");
    let len = clip.len();
    if len < 3 * stride + 1 {
        return Vec::new();
    }
    (2 * stride..=len - 1 - stride)
        .map(|t| FrameWindow { t, stride })
        .collect()
}
