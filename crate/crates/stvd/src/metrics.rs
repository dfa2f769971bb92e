//! Denoising metrics.
//!
//! The clean-free metric compares the pixel-intensity distribution inside
//! an annotated box against the same spatial box in the nearest frame with
//! no object there, via KL divergence in nats, and averages over boxes.
//! PSNR/SSIM are available when synthetic clean ground truth exists, and a
//! connected-component blob detector with greedy IoU matching provides a
//! desk-scale detection proxy.

use crate::clip::{validate_annotations, BoundingBox, BoxAnnotation, Clip, Frame};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 256;
pub const HISTOGRAM_SMOOTHING: f64 = 1e-8;

/// Normalized intensity histogram over uniform bins spanning `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Histogram {
    mass: Vec<f64>,
}

impl Histogram {
    /// Bin raw counts with additive smoothing, then normalize to total
    /// mass 1. Every bin is strictly positive afterwards.
    pub fn from_counts(counts: &[u64], smoothing: f64) -> Self {
        let total: f64 =
            counts.iter().map(|&c| c as f64 + smoothing).sum();
        let mass = counts.iter().map(|&c| (c as f64 + smoothing) / total).collect();
        Histogram { mass }
    }

    /// Build directly from probability masses (test/oracle entry point).
    pub fn from_mass(mass: Vec<f64>) -> Self {
        Histogram { mass }
    }

    pub fn bin_count(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }
}

fn bin_index(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

/// Histogram of the pixels inside `rect` of `frame`.
pub fn pixel_histogram(frame: &Frame, rect: &BoundingBox, bins: usize) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::Config("histogram needs at least 2 bins".into()));
    }
    if rect.x + rect.w > frame.width() || rect.y + rect.h > frame.height() {
        return Err(Error::Range(format!(
            "box ({},{} {}x{}) exceeds frame {}x{}",
            rect.x,
            rect.y,
            rect.w,
            rect.h,
            frame.width(),
            frame.height()
        )));
    }
    let mut counts = vec![0u64; bins];
    for y in rect.y..rect.y + rect.h {
        for x in rect.x..rect.x + rect.w {
            counts[bin_index(frame.get(y, x), bins)] += 1;
        }
    }
    Ok(Histogram::from_counts(&counts, HISTOGRAM_SMOOTHING))
}

/// KL divergence `sum p * ln(p/q)` in nats. Requires equal bin counts;
/// smoothing keeps it finite.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.bin_count() != q.bin_count() {
        return Err(Error::Shape(format!(
            "histogram bins differ: {} vs {}",
            p.bin_count(),
            q.bin_count()
        )));
    }
    let mut sum = 0.0;
    for (&pi, &qi) in p.mass.iter().zip(&q.mass) {
        if pi > 0.0 {
            sum += pi * (pi / qi).ln();
        }
    }
    Ok(sum)
}

/// The frame nearest in time to the annotation's frame whose annotations
/// all have zero overlap with the query box region; earlier frames win
/// ties. `None` when every other frame has an object there.
pub fn find_background_frame(
    clip: &Clip,
    annotations: &[BoxAnnotation],
    query: &BoxAnnotation,
) -> Option<usize> {
    let rect = query.rect();
    let clear = |t: usize| {
        annotations
            .iter()
            .filter(|a| a.frame_index == t)
            .all(|a| !a.rect().overlaps(&rect))
    };
    let t0 = query.frame_index;
    for d in 1..clip.len() {
        if t0 >= d && clear(t0 - d) {
            return Some(t0 - d);
        }
        if t0 + d < clip.len() && clear(t0 + d) {
            return Some(t0 + d);
        }
    }
    None
}

#[derive(Debug, Clone, Copy)]
pub struct FbdRow {
    /// Index of the annotation in input order.
    pub box_index: usize,
    pub frame_index: usize,
    pub kl: f64,
}

/// Per-box divergences and their mean.
#[derive(Debug, Clone)]
pub struct FbdReport {
    pub rows: Vec<FbdRow>,
    pub mean: f64,
    pub evaluated: usize,
    /// Boxes with no object-free frame available.
    pub skipped: usize,
}

impl FbdReport {
    /// `box_index,frame,kl` rows then a `mean_fbd=` line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("box_index,frame,kl\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:.6}\n", r.box_index, r.frame_index, r.kl));
        }
        out.push_str(&format!("mean_fbd={:.6}\n", self.mean));
        out
    }
}

/// Foreground/background divergence over all annotated boxes.
pub fn fbd(clip: &Clip, annotations: &[BoxAnnotation], bins: usize) -> Result<FbdReport> {
    if annotations.is_empty() {
        return Err(Error::Config("fbd needs at least one annotation".into()));
    }
    validate_annotations(clip, annotations)?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (i, ann) in annotations.iter().enumerate() {
        let Some(bg_frame) = find_background_frame(clip, annotations, ann) else {
            skipped += 1;
            continue;
        };
        let fg = pixel_histogram(clip.frame(ann.frame_index), &ann.rect(), bins)?;
        let bg = pixel_histogram(clip.frame(bg_frame), &ann.rect(), bins)?;
        rows.push(FbdRow { box_index: i, frame_index: ann.frame_index, kl: kl_divergence(&fg, &bg)? });
    }
    if rows.is_empty() {
        return Err(Error::NoEvaluableBoxes);
    }
    let mean = rows.iter().map(|r| r.kl).sum::<f64>() / rows.len() as f64;
    Ok(FbdReport { evaluated: rows.len(), skipped, rows, mean })
}

/// Peak signal-to-noise ratio in dB with peak 1.0; `inf` for identical
/// frames.
pub fn psnr(clean: &Frame, test: &Frame) -> Result<f64> {
    if !clean.same_dims(test) {
        return Err(Error::Shape("psnr: frame sizes differ".into()));
    }
    let mut mse = 0.0;
    for (&a, &b) in clean.data().iter().zip(test.data()) {
        let d = a - b;
        mse += d * d;
    }
    mse /= clean.data().len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Mean structural similarity over non-overlapping uniform windows
/// (stride = window size), dynamic range 1.
pub fn ssim(clean: &Frame, test: &Frame, window: usize, k1: f64, k2: f64) -> Result<f64> {
    if !clean.same_dims(test) {
        return Err(Error::Shape("ssim: frame sizes differ".into()));
    }
    if clean.height() < window || clean.width() < window {
        return Err(Error::Shape(format!(
            "ssim: frame {}x{} smaller than window {window}",
            clean.height(),
            clean.width()
        )));
    }
    let c1 = (k1 * 1.0f64).powi(2);
    let c2 = (k2 * 1.0f64).powi(2);
    let n = (window * window) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for wy in 0..clean.height() / window {
        for wx in 0..clean.width() / window {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in wy * window..(wy + 1) * window {
                for x in wx * window..(wx + 1) * window {
                    let a = clean.get(y, x);
                    let b = test.get(y, x);
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            let mx = sx / n;
            let my = sy / n;
            let vx = sxx / n - mx * mx;
            let vy = syy / n - my * my;
            let cov = sxy / n - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

pub fn ssim_default(clean: &Frame, test: &Frame) -> Result<f64> {
    ssim(clean, test, SSIM_WINDOW, SSIM_K1, SSIM_K2)
}

/// 4-connected components of `{v >= threshold}` with area >= `min_area`,
/// as tight bounding boxes in row-major discovery order.
pub fn detect_blobs(frame: &Frame, threshold: f64, min_area: usize) -> Vec<BoundingBox> {
    assert!(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0,1)");
    let (h, w) = (frame.height(), frame.width());
    let mut visited = vec![false; h * w];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if visited[start] || frame.data()[start] < threshold {
            continue;
        }
        // flood fill
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0usize, 0usize);
        let mut area = 0usize;
        visited[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (y, x) = (idx / w, idx % w);
            area += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut push = |ny: usize, nx: usize| {
                let nidx = ny * w + nx;
                if !visited[nidx] && frame.data()[nidx] >= threshold {
                    visited[nidx] = true;
                    stack.push(nidx);
                }
            };
            if y > 0 {
                push(y - 1, x);
            }
            if y + 1 < h {
                push(y + 1, x);
            }
            if x > 0 {
                push(y, x - 1);
            }
            if x + 1 < w {
                push(y, x + 1);
            }
        }
        if area >= min_area {
            boxes.push(BoundingBox { x: x0, y: y0, w: x1 - x0 + 1, h: y1 - y0 + 1 });
        }
    }
    boxes
}

/// Greedy one-to-one matching by descending IoU at a fixed threshold.
#[derive(Debug, Clone, Copy, Default)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchCounts {
    pub fn add(&mut self, other: MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// Empty predictions against non-empty truth report precision 0.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            if self.fn_ == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

pub fn match_boxes(
    predictions: &[BoundingBox],
    truths: &[BoundingBox],
    iou_threshold: f64,
) -> MatchCounts {
    let mut pairs = Vec::new();
    for (pi, p) in predictions.iter().enumerate() {
        for (ti, t) in truths.iter().enumerate() {
            let iou = p.iou(t);
            if iou >= iou_threshold {
                pairs.push((iou, pi, ti));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; predictions.len()];
    let mut truth_used = vec![false; truths.len()];
    let mut tp = 0;
    for (_, pi, ti) in pairs {
        if !pred_used[pi] && !truth_used[ti] {
            pred_used[pi] = true;
            truth_used[ti] = true;
            tp += 1;
        }
    }
    MatchCounts { tp, fp: predictions.len() - tp, fn_: truths.len() - tp }
}

/// Precision and recall of predicted boxes against ground truth.
pub fn detection_pr(
    predictions: &[BoundingBox],
    truths: &[BoundingBox],
    iou_threshold: f64,
) -> (f64, f64) {
    let counts = match_boxes(predictions, truths, iou_threshold);
    (counts.precision(), counts.recall())
}

/// Run the blob detector on every frame and pool matches against the
/// annotations.
pub fn detect_clip(
    clip: &Clip,
    annotations: &[BoxAnnotation],
    threshold: f64,
    min_area: usize,
    iou_threshold: f64,
) -> Result<MatchCounts> {
    validate_annotations(clip, annotations)?;
    let mut totals = MatchCounts::default();
    for t in 0..clip.len() {
        let preds = detect_blobs(clip.frame(t), threshold, min_area);
        let truths: Vec<BoundingBox> = annotations
            .iter()
            .filter(|a| a.frame_index == t)
            .map(|a| a.rect())
            .collect();
        totals.add(match_boxes(&preds, &truths, iou_threshold));
    }
    Ok(totals)
}

/// `frame_index,psnr,ssim` rows plus means, as line-oriented text.
pub fn quality_report(clean: &Clip, test: &Clip) -> Result<String> {
    if clean.len() != test.len() {
        return Err(Error::Shape("clips differ in length".into()));
    }
    let mut out = String::from("frame_index,psnr,ssim\n");
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for t in 0..clean.len() {
        let p = psnr(clean.frame(t), test.frame(t))?;
        let s = ssim_default(clean.frame(t), test.frame(t))?;
        out.push_str(&format!("{t},{p:.6},{s:.6}\n"));
        psnr_sum += p;
        ssim_sum += s;
    }
    out.push_str(&format!("mean_psnr={:.6}\n", psnr_sum / clean.len() as f64));
    out.push_str(&format!("mean_ssim={:.6}\n", ssim_sum / clean.len() as f64));
    Ok(out)
}

/// Mean PSNR/SSIM over a clip pair.
pub fn mean_quality(clean: &Clip, test: &Clip) -> Result<(f64, f64)> {
    if clean.len() != test.len() {
        return Err(Error::Shape("clips differ in length".into()));
    }
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for t in 0..clean.len() {
        psnr_sum += psnr(clean.frame(t), test.frame(t))?;
        ssim_sum += ssim_default(clean.frame(t), test.frame(t))?;
    }
    Ok((psnr_sum / clean.len() as f64, ssim_sum / clean.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ann(frame: usize, id: u64, x: usize, y: usize, w: usize, h: usize) -> BoxAnnotation {
        BoxAnnotation { frame_index: frame, object_id: id, x, y, w, h }
    }

    #[test]
    fn histogram_masses() {
        let frame = Frame::zeros(4, 4);
        let rect = BoundingBox { x: 0, y: 0, w: 4, h: 4 };
        let h = pixel_histogram(&frame, &rect, 2).unwrap();
        assert!(h.mass()[0] > 0.999 && h.mass()[1] < 1e-8);
        assert!((h.mass().iter().sum::<f64>() - 1.0).abs() <= 1e-12);

        // uniform ramp covering [0,1] -> near-uniform mass
        let ramp = Frame::new(1, 256, (0..256).map(|i| i as f64 / 255.0).collect()).unwrap();
        let hr = pixel_histogram(&ramp, &BoundingBox { x: 0, y: 0, w: 256, h: 1 }, 16).unwrap();
        for &m in hr.mass() {
            assert!((m - 1.0 / 16.0).abs() < 0.01, "mass {m}");
        }

        let h256 = pixel_histogram(&ramp, &BoundingBox { x: 0, y: 0, w: 256, h: 1 }, 256).unwrap();
        assert!((h256.mass().iter().sum::<f64>() - 1.0).abs() <= 1e-12);

        // out-of-bounds box
        assert!(pixel_histogram(&frame, &BoundingBox { x: 2, y: 0, w: 4, h: 1 }, 4).is_err());
    }

    #[test]
    fn kl_oracle_values() {
        let p = Histogram::from_mass(vec![0.5, 0.5]);
        let q = Histogram::from_mass(vec![0.9, 0.1]);
        // direct two-term sums
        let forward = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        let reverse = 0.9 * (0.9f64 / 0.5).ln() + 0.1 * (0.1f64 / 0.5).ln();
        assert!((kl_divergence(&p, &q).unwrap() - forward).abs() <= 1e-15);
        assert!((forward - 0.5108).abs() < 1e-4);
        assert!((kl_divergence(&q, &p).unwrap() - reverse).abs() <= 1e-15);
        assert!((reverse - 0.3681).abs() < 1e-4);
        // asymmetry witnessed
        assert!((forward - reverse).abs() > 0.1);
        // identity
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);

        let r = Histogram::from_mass(vec![0.2, 0.3, 0.5]);
        assert!(kl_divergence(&p, &r).is_err());
    }

    #[test]
    fn kl_nonnegative_on_random_histograms() {
        let mut rng = crate::rng::stream_rng(0, &[0x41]);
        for _ in 0..200 {
            let counts_p: Vec<u64> = (0..16).map(|_| rng.gen_range(0..50)).collect();
            let counts_q: Vec<u64> = (0..16).map(|_| rng.gen_range(0..50)).collect();
            let p = Histogram::from_counts(&counts_p, HISTOGRAM_SMOOTHING);
            let q = Histogram::from_counts(&counts_q, HISTOGRAM_SMOOTHING);
            let kl = kl_divergence(&p, &q).unwrap();
            assert!(kl >= 0.0, "negative KL {kl}");
            if counts_p == counts_q {
                assert!(kl.abs() <= 1e-12);
            }
        }
    }

    fn white_square_clip() -> (Clip, Vec<BoxAnnotation>) {
        // object only in frame 3 of 5
        let mut frames = vec![Frame::zeros(16, 16); 5];
        for y in 4..8 {
            for x in 4..8 {
                frames[3].data_mut()[y * 16 + x] = 1.0;
            }
        }
        let clip = Clip::new(frames, 10.0, "sq").unwrap();
        let anns = vec![ann(3, 1, 4, 4, 4, 4)];
        (clip, anns)
    }

    #[test]
    fn background_frame_selection() {
        let (clip, anns) = white_square_clip();
        assert_eq!(find_background_frame(&clip, &anns, &anns[0]), Some(2));

        // objects overlapping b in every frame -> none
        let all: Vec<BoxAnnotation> = (0..5).map(|t| ann(t, 1, 4, 4, 4, 4)).collect();
        assert_eq!(find_background_frame(&clip, &all, &all[3]), None);

        // equidistant candidates 1 and 5 around t0=3 -> earlier wins
        let clip7 = Clip::new(vec![Frame::zeros(8, 8); 7], 10.0, "c").unwrap();
        let blockers = vec![ann(2, 9, 0, 0, 8, 8), ann(3, 1, 0, 0, 4, 4), ann(4, 9, 0, 0, 8, 8)];
        assert_eq!(find_background_frame(&clip7, &blockers, &blockers[1]), Some(1));
    }

    #[test]
    fn fbd_separable_vs_identical() {
        let (clip, anns) = white_square_clip();
        let report = fbd(&clip, &anns, 256).unwrap();
        assert!(report.mean > 5.0, "white-on-black divergence {}", report.mean);
        assert_eq!(report.evaluated, 1);
        assert_eq!(report.skipped, 0);

        // statistically identical fg/bg: two noise draws
        let mut rng = crate::rng::stream_rng(5, &[0x52]);
        let mut noise_frame =
            || Frame::new(16, 16, (0..256).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let clip2 = Clip::new(vec![noise_frame(), noise_frame()], 10.0, "n").unwrap();
        let anns2 = vec![ann(0, 1, 0, 0, 16, 16)];
        let r2 = fbd(&clip2, &anns2, 8).unwrap();
        assert!(r2.mean < 0.05, "noise-vs-noise divergence {}", r2.mean);
    }

    #[test]
    fn fbd_counts_skipped_and_mean_matches_rows() {
        let (clip, mut anns) = white_square_clip();
        // a second, stationary object covering its region in every frame
        for t in 0..5 {
            anns.push(ann(t, 7, 10, 10, 3, 3));
        }
        let report = fbd(&clip, &anns, 64).unwrap();
        assert_eq!(report.skipped, 5);
        assert_eq!(report.evaluated, 1);
        let mean = report.rows.iter().map(|r| r.kl).sum::<f64>() / report.rows.len() as f64;
        assert!((report.mean - mean).abs() <= 1e-12);
    }

    #[test]
    fn fbd_invariant_to_order_and_ids() {
        let (clip, mut anns) = white_square_clip();
        anns.push(ann(3, 2, 9, 9, 4, 4));
        let a = fbd(&clip, &anns, 128).unwrap();
        let mut shuffled = vec![anns[1], anns[0]];
        for s in &mut shuffled {
            s.object_id += 100;
        }
        let b = fbd(&clip, &shuffled, 128).unwrap();
        assert!((a.mean - b.mean).abs() <= 1e-12);
    }

    #[test]
    fn psnr_cases() {
        let a = Frame::filled(8, 8, 0.5);
        let mut b = a.clone();
        for v in b.data_mut() {
            *v += 0.1;
        }
        // MSE = 0.01 -> 20 dB
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &Frame::zeros(4, 4)).is_err());

        let mut rng = crate::rng::stream_rng(3, &[0x9]);
        let x = Frame::new(8, 8, (0..64).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let y = Frame::new(8, 8, (0..64).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let mse: f64 =
            x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 64.0;
        let expected = 10.0 * (1.0 / mse).log10();
        assert!((psnr(&x, &y).unwrap() - expected).abs() <= 1e-9);
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let clean = Frame::filled(16, 16, 0.5);
        let mut last = f64::INFINITY;
        for (i, sigma) in [0.02, 0.05, 0.1, 0.2].iter().enumerate() {
            let mut noise =
                crate::rng::NormalSampler::new(crate::rng::stream_rng(7, &[0x91, i as u64]));
            let mut noisy = clean.clone();
            for v in noisy.data_mut() {
                *v = (*v + sigma * noise.next()).clamp(0.0, 1.0);
            }
            let p = psnr(&clean, &noisy).unwrap();
            assert!(p < last, "psnr {p} not below {last} at sigma {sigma}");
            last = p;
        }
    }

    #[test]
    fn ssim_cases() {
        let mut rng = crate::rng::stream_rng(4, &[0x33]);
        let a = Frame::new(16, 16, (0..256).map(|_| rng.gen::<f64>()).collect()).unwrap();
        assert!((ssim_default(&a, &a).unwrap() - 1.0).abs() <= 1e-12);

        let c = Frame::filled(8, 8, 0.3);
        assert!((ssim_default(&c, &c).unwrap() - 1.0).abs() <= 1e-12);

        // high-contrast frame vs its inversion scores below 0.5
        let checker = Frame::new(
            16,
            16,
            (0..256).map(|i| ((i / 16 + i % 16) % 2) as f64).collect(),
        )
        .unwrap();
        let inverted =
            Frame::new(16, 16, checker.data().iter().map(|v| 1.0 - v).collect()).unwrap();
        assert!(ssim_default(&checker, &inverted).unwrap() < 0.5);

        assert!(ssim_default(&Frame::zeros(4, 4), &Frame::zeros(4, 4)).is_err());
    }

    #[test]
    fn blob_detection() {
        let mut frame = Frame::zeros(16, 16);
        for y in 2..5 {
            for x in 3..6 {
                frame.data_mut()[y * 16 + x] = 1.0;
            }
        }
        let boxes = detect_blobs(&frame, 0.5, 1);
        assert_eq!(boxes, vec![BoundingBox { x: 3, y: 2, w: 3, h: 3 }]);

        assert!(detect_blobs(&Frame::zeros(8, 8), 0.5, 1).is_empty());

        // two separated squares -> two boxes, scan order
        for y in 10..12 {
            for x in 10..12 {
                frame.data_mut()[y * 16 + x] = 0.9;
            }
        }
        let boxes = detect_blobs(&frame, 0.5, 1);
        assert_eq!(boxes.len(), 2);
        assert_eq!(boxes[0].y, 2);
        assert_eq!(boxes[1], BoundingBox { x: 10, y: 10, w: 2, h: 2 });

        // min_area filters the small one
        let big_only = detect_blobs(&frame, 0.5, 6);
        assert_eq!(big_only.len(), 1);

        // oracle cross-check: areas from a reference flood fill
        let mut rng = crate::rng::stream_rng(8, &[0x77]);
        let noisy =
            Frame::new(32, 32, (0..1024).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let got = detect_blobs(&noisy, 0.6, 3);
        let reference = reference_components(&noisy, 0.6, 3);
        assert_eq!(got, reference);
    }

    // independent component labeling by repeated scanning
    fn reference_components(frame: &Frame, threshold: f64, min_area: usize) -> Vec<BoundingBox> {
        let (h, w) = (frame.height(), frame.width());
        let mut label = vec![usize::MAX; h * w];
        let mut next = 0;
        for i in 0..h * w {
            if frame.data()[i] >= threshold && label[i] == usize::MAX {
                // BFS with a queue (order independent of detect_blobs' stack)
                let mut queue = std::collections::VecDeque::new();
                queue.push_back(i);
                label[i] = next;
                while let Some(j) = queue.pop_front() {
                    let (y, x) = (j / w, j % w);
                    for (ny, nx) in [
                        (y.wrapping_sub(1), x),
                        (y + 1, x),
                        (y, x.wrapping_sub(1)),
                        (y, x + 1),
                    ] {
                        if ny < h && nx < w {
                            let nj = ny * w + nx;
                            if frame.data()[nj] >= threshold && label[nj] == usize::MAX {
                                label[nj] = next;
                                queue.push_back(nj);
                            }
                        }
                    }
                }
                next += 1;
            }
        }
        let mut boxes = Vec::new();
        for comp in 0..next {
            let (mut x0, mut y0, mut x1, mut y1, mut area) = (w, h, 0, 0, 0);
            for i in 0..h * w {
                if label[i] == comp {
                    let (y, x) = (i / w, i % w);
                    area += 1;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
            if area >= min_area {
                boxes.push(BoundingBox { x: x0, y: y0, w: x1 - x0 + 1, h: y1 - y0 + 1 });
            }
        }
        boxes
    }

    #[test]
    fn pr_matching() {
        let a = vec![BoundingBox { x: 0, y: 0, w: 10, h: 10 }, BoundingBox { x: 20, y: 20, w: 5, h: 5 }];
        assert_eq!(detection_pr(&a, &a, 0.5), (1.0, 1.0));

        let none: Vec<BoundingBox> = vec![];
        assert_eq!(detection_pr(&none, &a, 0.5), (0.0, 0.0));
        assert_eq!(detection_pr(&none, &none, 0.5), (1.0, 1.0));

        // boxes of size 10 shifted by 1: IoU = 90/110 ~ 0.81 >= 0.5 -> matched
        let shifted = vec![BoundingBox { x: 1, y: 0, w: 10, h: 10 }];
        let truth = vec![BoundingBox { x: 0, y: 0, w: 10, h: 10 }];
        assert!((truth[0].iou(&shifted[0]) - 90.0 / 110.0).abs() < 1e-12);
        assert_eq!(detection_pr(&shifted, &truth, 0.5), (1.0, 1.0));
    }
}
