//! Reconstruction targets.
//!
//! Each target condenses temporal neighborhood information into a single
//! frame that the network learns to reconstruct. The main target combines
//! the current frame with the directionally-positive differences of its
//! temporal neighbors; the inverted variant takes the negative differences
//! instead, for videos whose objects are darker than the background.
//! All accumulation happens in `f64`, sequentially, so results are
//! bit-stable across runs.

use std::sync::OnceLock;

use crate::clip::{Clip, Frame, FrameWindow};
use crate::error::{Error, Result};

/// Which reconstruction target to build, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    /// Positive frame difference combined with the current frame at
    /// temporal stride `stride`; `inverted` swaps max for min.
    Pfd { stride: usize, inverted: bool },
    /// The current frame itself (identity reconstruction).
    Raw,
    /// `|I_t - I_{t+stride}|`.
    AbsDiff { stride: usize },
    /// Current frame minus the clip's temporal mean, clamped.
    BackgroundSub,
    /// Pixelwise population standard deviation over `2*radius + 1` frames.
    Sigma { radius: usize },
    /// Sum of an odd window of frames minus `window * mean`, positive part.
    SumMinusMean { window: usize },
}

impl TargetKind {
    /// Parse a CLI target name. `n` overrides the window parameter of
    /// `sigma` / `sum-mean`.
    pub fn parse(name: &str, n: Option<usize>) -> Result<Self> {
        let kind = match name {
            "pfdwt1" => TargetKind::Pfd { stride: 1, inverted: false },
            "pfdwt2" => TargetKind::Pfd { stride: 2, inverted: false },
            "inv-pfdwt1" => TargetKind::Pfd { stride: 1, inverted: true },
            "raw" => TargetKind::Raw,
            "absdiff" => TargetKind::AbsDiff { stride: n.unwrap_or(1) },
            "bgsub" => TargetKind::BackgroundSub,
            "sigma" => TargetKind::Sigma { radius: n.unwrap_or(2) },
            "sum-mean" => TargetKind::SumMinusMean { window: n.unwrap_or(3) },
            other => {
                return Err(Error::Config(format!(
                    "unknown target '{other}'; valid targets: {}",
                    Self::NAMES.join("|")
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }

    pub const NAMES: [&'static str; 8] =
        ["pfdwt1", "pfdwt2", "inv-pfdwt1", "raw", "absdiff", "bgsub", "sigma", "sum-mean"];

    pub fn validate(&self) -> Result<()> {
        match *self {
            TargetKind::Pfd { stride, .. } | TargetKind::AbsDiff { stride } if stride == 0 => {
                Err(Error::Config("target stride must be >= 1".into()))
            }
            TargetKind::Sigma { radius } if radius == 0 => {
                Err(Error::Config("sigma radius must be >= 1".into()))
            }
            TargetKind::SumMinusMean { window } if window < 3 || window % 2 == 0 => {
                Err(Error::Config("sum-mean window must be odd and >= 3".into()))
            }
            _ => Ok(()),
        }
    }

    /// Temporal stride the training window must honor. The three-frame
    /// network input fixes the past reach; PFD-style targets share their
    /// stride with it.
    pub fn input_stride(&self) -> usize {
        match *self {
            TargetKind::Pfd { stride, .. } => stride,
            _ => 1,
        }
    }

    /// Frames needed around `t` beyond the network inputs: `(past, future)`.
    pub fn reach(&self) -> (usize, usize) {
        match *self {
            TargetKind::Pfd { stride, .. } => (2 * stride, stride),
            TargetKind::Raw | TargetKind::BackgroundSub => (0, 0),
            TargetKind::AbsDiff { stride } => (0, stride),
            TargetKind::Sigma { radius } => (radius, radius),
            TargetKind::SumMinusMean { window } => (window / 2, window / 2),
        }
    }
}

/// Pixelwise temporal mean of all frames, accumulated in `f64` in frame
/// order.
pub fn mean_frame(clip: &Clip) -> Frame {
    let n = clip.len() as f64;
    let mut acc = vec![0.0; clip.height() * clip.width()];
    for frame in clip.frames() {
        for (a, &v) in acc.iter_mut().zip(frame.data()) {
            *a += v;
        }
    }
    for a in &mut acc {
        *a /= n;
    }
    Frame::new(clip.height(), clip.width(), acc).expect("mean preserves dims")
}

/// Positive-difference target: `max(0, I_{t-T} - I_t) + I_t + max(0, I_{t+T} - I_t)`,
/// or the min-variant when `inverted`. Clamped to `[0,1]` when `clamp` is set.
pub fn pfd_target(clip: &Clip, window: &FrameWindow, inverted: bool, clamp: bool) -> Frame {
    let current = clip.frame(window.center()).data();
    let past = clip.frame(window.past()).data();
    let future = clip.frame(window.future()).data();
    let fold = if inverted { f64::min } else { f64::max };
    let mut out = Vec::with_capacity(current.len());
    for i in 0..current.len() {
        let c = current[i];
        let mut s = fold(0.0, past[i] - c) + c + fold(0.0, future[i] - c);
        if clamp {
            s = s.clamp(0.0, 1.0);
        }
        out.push(s);
    }
    Frame::new(clip.height(), clip.width(), out).expect("dims preserved")
}

/// `|I_t - I_{t+stride}|`.
pub fn abs_diff_target(clip: &Clip, t: usize, stride: usize) -> Result<Frame> {
    let future = t + stride;
    if t >= clip.len() || future >= clip.len() {
        return Err(Error::Range(format!(
            "abs-diff needs frames {t} and {future} in a {}-frame clip",
            clip.len()
        )));
    }
    let a = clip.frame(t).data();
    let b = clip.frame(future).data();
    let out = a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).collect();
    Frame::new(clip.height(), clip.width(), out)
}

/// `clamp(I_t - mean, 0, 1)` with a caller-supplied mean frame.
pub fn background_sub_with_mean(frame: &Frame, mean: &Frame) -> Frame {
    let out = frame
        .data()
        .iter()
        .zip(mean.data())
        .map(|(&v, &m)| (v - m).clamp(0.0, 1.0))
        .collect();
    Frame::new(frame.height(), frame.width(), out).expect("dims preserved")
}

pub fn background_sub_target(clip: &Clip, t: usize) -> Result<Frame> {
    if t >= clip.len() {
        return Err(Error::Range(format!("frame {t} out of range")));
    }
    Ok(background_sub_with_mean(clip.frame(t), &mean_frame(clip)))
}

/// Pixelwise population standard deviation over frames `t-radius ..= t+radius`.
pub fn sigma_target(clip: &Clip, t: usize, radius: usize) -> Result<Frame> {
    if t < radius || t + radius >= clip.len() {
        return Err(Error::Range(format!(
            "sigma window [{}..={}] out of range for {}-frame clip",
            t as isize - radius as isize,
            t + radius,
            clip.len()
        )));
    }
    let count = 2 * radius + 1;
    let size = clip.height() * clip.width();
    let mut mean = vec![0.0; size];
    for u in t - radius..=t + radius {
        for (m, &v) in mean.iter_mut().zip(clip.frame(u).data()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut var = vec![0.0; size];
    for u in t - radius..=t + radius {
        for i in 0..size {
            let d = clip.frame(u).data()[i] - mean[i];
            var[i] += d * d;
        }
    }
    let out = var.iter().map(|&v| (v / count as f64).sqrt()).collect();
    Frame::new(clip.height(), clip.width(), out)
}

/// `clamp(sum(window) - window_len * mean, 0, 1)` over the odd window
/// centered at `t`, with a caller-supplied clip mean.
pub fn sum_minus_mean_with_mean(
    clip: &Clip,
    t: usize,
    window: usize,
    mean: &Frame,
) -> Result<Frame> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::Config("sum-mean window must be odd and >= 3".into()));
    }
    let half = window / 2;
    if t < half || t + half >= clip.len() {
        return Err(Error::Range(format!(
            "sum window [{}..={}] out of range for {}-frame clip",
            t as isize - half as isize,
            t + half,
            clip.len()
        )));
    }
    let size = clip.height() * clip.width();
    let mut sum = vec![0.0; size];
    for u in t - half..=t + half {
        for (s, &v) in sum.iter_mut().zip(clip.frame(u).data()) {
            *s += v;
        }
    }
    let out = sum
        .iter()
        .zip(mean.data())
        .map(|(&s, &m)| (s - window as f64 * m).clamp(0.0, 1.0))
        .collect();
    Frame::new(clip.height(), clip.width(), out)
}

pub fn sum_minus_mean_target(clip: &Clip, t: usize, window: usize) -> Result<Frame> {
    sum_minus_mean_with_mean(clip, t, window, &mean_frame(clip))
}

/// Per-clip target builder that caches the temporal mean.
pub struct TargetContext<'c> {
    clip: &'c Clip,
    mean: OnceLock<Frame>,
}

impl<'c> TargetContext<'c> {
    pub fn new(clip: &'c Clip) -> Self {
        TargetContext { clip, mean: OnceLock::new() }
    }

    pub fn mean(&self) -> &Frame {
        self.mean.get_or_init(|| mean_frame(self.clip))
    }

    /// Build the target for center frame `t`. `clamp` applies the final
    /// `[0,1]` range limit on PFD targets (all other targets are range
    /// limited by their own formulas).
    pub fn target(&self, t: usize, kind: &TargetKind, clamp: bool) -> Result<Frame> {
        match *kind {
            TargetKind::Pfd { stride, inverted } => {
                let window = FrameWindow::new(self.clip.len(), t, stride)?;
                Ok(pfd_target(self.clip, &window, inverted, clamp))
            }
            TargetKind::Raw => {
                if t >= self.clip.len() {
                    return Err(Error::Range(format!("frame {t} out of range")));
                }
                Ok(self.clip.frame(t).clone())
            }
            TargetKind::AbsDiff { stride } => abs_diff_target(self.clip, t, stride),
            TargetKind::BackgroundSub => {
                if t >= self.clip.len() {
                    return Err(Error::Range(format!("frame {t} out of range")));
                }
                Ok(background_sub_with_mean(self.clip.frame(t), self.mean()))
            }
            TargetKind::Sigma { radius } => sigma_target(self.clip, t, radius),
            TargetKind::SumMinusMean { window } => {
                sum_minus_mean_with_mean(self.clip, t, window, self.mean())
            }
        }
    }
}

/// One-shot dispatch over [`TargetKind`].
pub fn compute_target(clip: &Clip, t: usize, kind: &TargetKind, clamp: bool) -> Result<Frame> {
    TargetContext::new(clip).target(t, kind, clamp)
}
