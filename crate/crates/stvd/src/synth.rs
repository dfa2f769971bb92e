//! Deterministic synthetic low-SNR video.
//!
//! Clips pair a drifting smooth background with soft-edged moving discs,
//! plus a choice of additive Gaussian, multiplicative speckle, or spatial
//! 1/f ("pink") noise. Clean frames, noisy frames, and tight per-disc box
//! annotations are all fully determined by the seed; the clean clip never
//! depends on the noise parameters.

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::clip::{BoxAnnotation, Clip, Frame};
use crate::error::{Error, Result};
use crate::rng::{self, stream, NormalSampler};

/// Noise family applied to the clean frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    Speckle { sigma: f64 },
    Pink { amplitude: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub n_frames: usize,
    pub n_objects: usize,
    pub object_radius: f64,
    /// Pixels per frame along a random direction.
    pub object_speed: f64,
    /// Intensity delta of a disc; negative values produce dark objects.
    pub object_contrast: f64,
    pub background_drift_speed: f64,
    pub noise: NoiseKind,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 64,
            width: 64,
            n_frames: 200,
            n_objects: 3,
            object_radius: 4.0,
            object_speed: 1.0,
            object_contrast: 0.35,
            background_drift_speed: 0.3,
            noise: NoiseKind::Gaussian { sigma: 0.15 },
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("frame dims must be positive".into()));
        }
        if self.n_frames < 4 {
            return Err(Error::Config("need at least 4 frames".into()));
        }
        let c = self.object_contrast.abs();
        if self.n_objects > 0 && (c <= 0.0 || c > 1.0) {
            return Err(Error::Config("object contrast magnitude must lie in (0, 1]".into()));
        }
        if self.object_radius < 1.0 {
            return Err(Error::Config("object radius must be >= 1".into()));
        }
        let margin = self.object_radius + 1.5;
        if self.n_objects > 0
            && ((self.width as f64) < 2.0 * margin + 1.0 || (self.height as f64) < 2.0 * margin + 1.0)
        {
            return Err(Error::Config("frame too small for the object radius".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub clean: Clip,
    pub noisy: Clip,
    pub annotations: Vec<BoxAnnotation>,
}

// Background: a mixture of low-frequency sinusoids around BG_LEVEL, with
// component amplitudes summing to BG_AMPLITUDE so the range is bounded.
const BG_LEVEL: f64 = 0.35;
const BG_AMPLITUDE: f64 = 0.08;
const BG_COMPONENTS: usize = 4;

struct BackgroundField {
    // per component: (fx, fy, phase, amplitude); drift in pixels/frame
    components: Vec<(f64, f64, f64, f64)>,
    drift: (f64, f64),
    width: f64,
    height: f64,
}

impl BackgroundField {
    fn from_seed(cfg: &SynthConfig) -> Self {
        let mut rng = rng::stream_rng(cfg.seed, &[stream::BACKGROUND]);
        let mut raw: Vec<(f64, f64, f64, f64)> = (0..BG_COMPONENTS)
            .map(|_| {
                let fx = rng.gen_range(0.5..3.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let fy = rng.gen_range(0.5..3.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let amp = rng.gen_range(0.5..1.0);
                (fx, fy, phase, amp)
            })
            .collect();
        let total: f64 = raw.iter().map(|c| c.3).sum();
        for c in &mut raw {
            c.3 *= BG_AMPLITUDE / total;
        }
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let drift =
            (cfg.background_drift_speed * theta.cos(), cfg.background_drift_speed * theta.sin());
        BackgroundField {
            components: raw,
            drift,
            width: cfg.width as f64,
            height: cfg.height as f64,
        }
    }

    fn sample(&self, x: f64, y: f64, t: f64) -> f64 {
        let sx = x + self.drift.0 * t;
        let sy = y + self.drift.1 * t;
        let mut v = BG_LEVEL;
        for &(fx, fy, phase, amp) in &self.components {
            v += amp
                * (std::f64::consts::TAU * (fx * sx / self.width + fy * sy / self.height) + phase)
                    .sin();
        }
        v
    }
}

struct Disc {
    start: (f64, f64),
    velocity: (f64, f64),
}

impl Disc {
    /// Center at frame `t`, reflecting off the margin box so the disc stays
    /// fully inside the frame.
    fn center(&self, t: f64, cfg: &SynthConfig) -> (f64, f64) {
        let margin = cfg.object_radius + 1.5;
        let fold = |p0: f64, v: f64, lo: f64, hi: f64| -> f64 {
            let span = hi - lo;
            if span <= 0.0 {
                return lo.max(hi);
            }
            let u = (p0 - lo + v * t).rem_euclid(2.0 * span);
            if u <= span {
                lo + u
            } else {
                lo + 2.0 * span - u
            }
        };
        (
            fold(self.start.0, self.velocity.0, margin, cfg.width as f64 - 1.0 - margin),
            fold(self.start.1, self.velocity.1, margin, cfg.height as f64 - 1.0 - margin),
        )
    }
}

fn seeded_discs(cfg: &SynthConfig) -> Vec<Disc> {
    let mut rng = rng::stream_rng(cfg.seed, &[stream::OBJECTS]);
    let margin = cfg.object_radius + 1.5;
    (0..cfg.n_objects)
        .map(|_| {
            let x = rng.gen_range(margin..cfg.width as f64 - 1.0 - margin);
            let y = rng.gen_range(margin..cfg.height as f64 - 1.0 - margin);
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            Disc {
                start: (x, y),
                velocity: (cfg.object_speed * theta.cos(), cfg.object_speed * theta.sin()),
            }
        })
        .collect()
}

/// Soft edge: full contrast inside `r - 0.5`, linear falloff over one pixel.
fn disc_weight(dist: f64, radius: f64) -> f64 {
    (radius + 0.5 - dist).clamp(0.0, 1.0)
}

/// Generate a clean/noisy clip pair with tight per-disc annotations.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let background = BackgroundField::from_seed(cfg);
    let discs = seeded_discs(cfg);
    let (h, w) = (cfg.height, cfg.width);

    let results: Vec<(Frame, Frame, Vec<BoxAnnotation>)> = (0..cfg.n_frames)
        .into_par_iter()
        .map(|t| {
            let tf = t as f64;
            let mut clean = vec![0.0f64; h * w];
            for y in 0..h {
                for x in 0..w {
                    clean[y * w + x] = background.sample(x as f64, y as f64, tf);
                }
            }
            let mut annotations = Vec::with_capacity(discs.len());
            for (id, disc) in discs.iter().enumerate() {
                let (cx, cy) = disc.center(tf, cfg);
                let r = cfg.object_radius;
                let x_lo = (cx - r - 1.0).floor().max(0.0) as usize;
                let x_hi = ((cx + r + 1.0).ceil() as usize).min(w - 1);
                let y_lo = (cy - r - 1.0).floor().max(0.0) as usize;
                let y_hi = ((cy + r + 1.0).ceil() as usize).min(h - 1);
                // paint and collect the strong support (weight > 0.5) box
                let (mut bx0, mut by0, mut bx1, mut by1) = (w, h, 0usize, 0usize);
                for y in y_lo..=y_hi {
                    for x in x_lo..=x_hi {
                        let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                        let weight = disc_weight(d, r);
                        if weight > 0.0 {
                            clean[y * w + x] += cfg.object_contrast * weight;
                        }
                        if weight > 0.5 {
                            bx0 = bx0.min(x);
                            by0 = by0.min(y);
                            bx1 = bx1.max(x);
                            by1 = by1.max(y);
                        }
                    }
                }
                annotations.push(BoxAnnotation {
                    frame_index: t,
                    object_id: id as u64,
                    x: bx0,
                    y: by0,
                    w: bx1 - bx0 + 1,
                    h: by1 - by0 + 1,
                });
            }
            for v in &mut clean {
                *v = v.clamp(0.0, 1.0);
            }
            let clean = Frame::new(h, w, clean).expect("synth frame dims");

            let mut frame_rng = rng::stream_rng(cfg.seed, &[stream::FRAME_NOISE, t as u64]);
            let noisy = match cfg.noise {
                NoiseKind::Gaussian { sigma } => add_gaussian(&clean, sigma, &mut frame_rng),
                NoiseKind::Speckle { sigma } => add_speckle(&clean, sigma, &mut frame_rng),
                NoiseKind::Pink { amplitude } => add_pink(&clean, amplitude, &mut frame_rng),
            };
            (clean, noisy, annotations)
        })
        .collect();

    let mut clean_frames = Vec::with_capacity(cfg.n_frames);
    let mut noisy_frames = Vec::with_capacity(cfg.n_frames);
    let mut annotations = Vec::new();
    for (clean, noisy, anns) in results {
        clean_frames.push(clean);
        noisy_frames.push(noisy);
        annotations.extend(anns);
    }
    Ok(SynthOutput {
        clean: Clip::new(clean_frames, 10.0, format!("synth-{}-clean", cfg.seed))?,
        noisy: Clip::new(noisy_frames, 10.0, format!("synth-{}-noisy", cfg.seed))?,
        annotations,
    })
}

/// `clamp(v + n)`, `n ~ N(0, sigma^2)` i.i.d. per pixel.
pub fn add_gaussian<R: rand::RngCore>(frame: &Frame, sigma: f64, rng: &mut R) -> Frame {
    let mut sampler = NormalSampler::new(rng);
    let data = frame
        .data()
        .iter()
        .map(|&v| (v + sigma * sampler.next()).clamp(0.0, 1.0))
        .collect();
    Frame::new(frame.height(), frame.width(), data).expect("dims preserved")
}

/// `clamp(v * (1 + n))`: multiplicative noise scaling with intensity.
pub fn add_speckle<R: rand::RngCore>(frame: &Frame, sigma: f64, rng: &mut R) -> Frame {
    let mut sampler = NormalSampler::new(rng);
    let data = frame
        .data()
        .iter()
        .map(|&v| (v * (1.0 + sigma * sampler.next())).clamp(0.0, 1.0))
        .collect();
    Frame::new(frame.height(), frame.width(), data).expect("dims preserved")
}

/// `clamp(v + P)` where `P` is a frequency-shaped 1/f field normalized to
/// standard deviation `amplitude`. The spectral weight is `1/max(f, 1)`
/// with `f` the radial frequency in cycles per frame width, which bounds
/// the spectrum at DC.
pub fn add_pink<R: rand::RngCore>(frame: &Frame, amplitude: f64, rng: &mut R) -> Frame {
    if amplitude == 0.0 {
        return frame.clone();
    }
    let field = pink_field(frame.height(), frame.width(), amplitude, rng);
    let data = frame
        .data()
        .iter()
        .zip(&field)
        .map(|(&v, &p)| (v + p).clamp(0.0, 1.0))
        .collect();
    Frame::new(frame.height(), frame.width(), data).expect("dims preserved")
}

/// White noise, shaped in the frequency domain, returned with mean 0 and
/// std `amplitude`.
pub fn pink_field<R: rand::RngCore>(h: usize, w: usize, amplitude: f64, rng: &mut R) -> Vec<f64> {
    let mut sampler = NormalSampler::new(rng);
    let mut grid: Vec<Complex<f64>> =
        (0..h * w).map(|_| Complex::new(sampler.next(), 0.0)).collect();

    let mut planner = FftPlanner::<f64>::new();
    fft_2d(&mut grid, h, w, &mut planner, rustfft::FftDirection::Forward);
    for ky in 0..h {
        for kx in 0..w {
            let fx = kx.min(w - kx) as f64;
            let fy = ky.min(h - ky) as f64;
            let f = (fx * fx + fy * fy).sqrt();
            grid[ky * w + kx] *= 1.0 / f.max(1.0);
        }
    }
    fft_2d(&mut grid, h, w, &mut planner, rustfft::FftDirection::Inverse);

    let mut field: Vec<f64> = grid.iter().map(|c| c.re).collect();
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let var = field.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = if var > 0.0 { amplitude / var.sqrt() } else { 0.0 };
    for v in &mut field {
        *v = (*v - mean) * scale;
    }
    field
}

fn fft_2d(
    grid: &mut [Complex<f64>],
    h: usize,
    w: usize,
    planner: &mut FftPlanner<f64>,
    direction: rustfft::FftDirection,
) {
    let row_fft = planner.plan_fft(w, direction);
    for row in grid.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft(h, direction);
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = grid[y * w + x];
        }
        col_fft.process(&mut column);
        for y in 0..h {
            grid[y * w + x] = column[y];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;

    #[test]
    fn deterministic_under_seed() {
        let cfg = SynthConfig { n_frames: 6, ..Default::default() };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        for t in 0..6 {
            assert!(a
                .noisy
                .frame(t)
                .data()
                .iter()
                .zip(b.noisy.frame(t).data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(a.annotations, b.annotations);

        let c = generate(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.noisy.frame(0).data(), c.noisy.frame(0).data());
    }

    #[test]
    fn no_objects_no_noise_means_noisy_equals_clean() {
        let cfg = SynthConfig {
            n_frames: 5,
            n_objects: 0,
            noise: NoiseKind::Gaussian { sigma: 0.0 },
            ..Default::default()
        };
        let out = generate(&cfg).unwrap();
        for t in 0..5 {
            assert_eq!(out.clean.frame(t).data(), out.noisy.frame(t).data());
        }
        assert!(out.annotations.is_empty());
        // background still drifts
        assert_ne!(out.clean.frame(0).data(), out.clean.frame(4).data());
    }

    #[test]
    fn clean_is_independent_of_noise_params() {
        let base = SynthConfig { n_frames: 5, ..Default::default() };
        let a = generate(&base).unwrap();
        let b = generate(&SynthConfig { noise: NoiseKind::Speckle { sigma: 0.4 }, ..base })
            .unwrap();
        let c = generate(&SynthConfig { noise: NoiseKind::Pink { amplitude: 0.2 }, ..base })
            .unwrap();
        for t in 0..5 {
            assert_eq!(a.clean.frame(t).data(), b.clean.frame(t).data());
            assert_eq!(a.clean.frame(t).data(), c.clean.frame(t).data());
        }
    }

    #[test]
    fn annotations_cover_strong_disc_support() {
        let cfg = SynthConfig { n_frames: 8, object_contrast: -0.35, ..Default::default() };
        let out = generate(&cfg).unwrap();
        let discs = seeded_discs(&cfg);
        let threshold = 0.5 * cfg.object_contrast.abs();
        for ann in &out.annotations {
            let t = ann.frame_index;
            let disc = &discs[ann.object_id as usize];
            let (cx, cy) = disc.center(t as f64, &cfg);
            for y in 0..cfg.height {
                for x in 0..cfg.width {
                    let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                    let contribution = cfg.object_contrast.abs() * disc_weight(d, cfg.object_radius);
                    if contribution > threshold {
                        let inside = x >= ann.x
                            && x < ann.x + ann.w
                            && y >= ann.y
                            && y < ann.y + ann.h;
                        assert!(inside, "pixel ({x},{y}) outside box at frame {t}");
                    }
                }
            }
        }
        // every object visible in every frame: one box per (frame, object)
        assert_eq!(out.annotations.len(), cfg.n_frames * cfg.n_objects);
    }

    #[test]
    fn gaussian_noise_statistics() {
        let frame = Frame::filled(64, 64, 0.5);
        let mut rng = rng::stream_rng(3, &[stream::FRAME_NOISE, 0]);
        let noisy = add_gaussian(&frame, 0.1, &mut rng);
        let n = noisy.data().len() as f64;
        let mean_diff: f64 =
            noisy.data().iter().zip(frame.data()).map(|(a, b)| a - b).sum::<f64>() / n;
        let std: f64 = (noisy
            .data()
            .iter()
            .zip(frame.data())
            .map(|(a, b)| (a - b - mean_diff).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        assert!((std - 0.1).abs() / 0.1 < 0.05, "std {std}");

        let mut rng0 = rng::stream_rng(3, &[stream::FRAME_NOISE, 0]);
        let identity = add_gaussian(&frame, 0.0, &mut rng0);
        assert_eq!(identity.data(), frame.data());

        let mut rng_b = rng::stream_rng(4, &[stream::FRAME_NOISE, 0]);
        let other = add_gaussian(&frame, 0.1, &mut rng_b);
        assert_ne!(noisy.data(), other.data());
    }

    #[test]
    fn speckle_scales_with_intensity() {
        let zero = Frame::zeros(16, 16);
        let mut rng = rng::stream_rng(5, &[stream::FRAME_NOISE, 1]);
        assert_eq!(add_speckle(&zero, 0.3, &mut rng).data(), zero.data());

        let mut half = Frame::filled(64, 64, 0.4);
        let bright = Frame::filled(64, 64, 0.8);
        let mut rng_a = rng::stream_rng(6, &[stream::FRAME_NOISE, 2]);
        let mut rng_b = rng::stream_rng(6, &[stream::FRAME_NOISE, 2]);
        let noisy_a = add_speckle(&half, 0.1, &mut rng_a);
        let noisy_b = add_speckle(&bright, 0.1, &mut rng_b);
        let std = |noisy: &Frame, clean: &Frame| {
            let n = noisy.data().len() as f64;
            (noisy
                .data()
                .iter()
                .zip(clean.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n)
                .sqrt()
        };
        let ratio = std(&noisy_b, &bright) / std(&noisy_a, &half);
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");

        let mut rng0 = rng::stream_rng(6, &[stream::FRAME_NOISE, 3]);
        assert_eq!(add_speckle(&mut half, 0.0, &mut rng0).data(), half.data());
    }

    #[test]
    fn pink_field_statistics_and_slope() {
        let mut rng = rng::stream_rng(7, &[stream::FRAME_NOISE, 4]);
        let field = pink_field(64, 64, 0.1, &mut rng);
        let n = field.len() as f64;
        let mean = field.iter().sum::<f64>() / n;
        let std = (field.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-12);
        assert!((std - 0.1).abs() / 0.1 < 1e-9, "normalized std {std}");

        // radial power spectrum: low band dominates high band
        let mut grid: Vec<Complex<f64>> =
            field.iter().map(|&v| Complex::new(v, 0.0)).collect();
        let mut planner = FftPlanner::new();
        fft_2d(&mut grid, 64, 64, &mut planner, rustfft::FftDirection::Forward);
        let mut low = 0.0;
        let mut high = 0.0;
        let mut low_n = 0.0;
        let mut high_n = 0.0;
        for ky in 0..64usize {
            for kx in 0..64usize {
                let f = (((kx.min(64 - kx)).pow(2) + (ky.min(64 - ky)).pow(2)) as f64).sqrt();
                let p = grid[ky * 64 + kx].norm_sqr();
                if f >= 1.0 && f < 4.0 {
                    low += p;
                    low_n += 1.0;
                } else if f >= 16.0 {
                    high += p;
                    high_n += 1.0;
                }
            }
        }
        assert!(low / low_n > 10.0 * (high / high_n), "spectrum not red enough");

        let frame = Frame::filled(32, 32, 0.5);
        let mut rng2 = rng::stream_rng(7, &[stream::FRAME_NOISE, 5]);
        assert_eq!(add_pink(&frame, 0.0, &mut rng2).data(), frame.data());
    }

    #[test]
    fn measured_psnr_tracks_sigma() {
        let cfg = SynthConfig {
            n_frames: 30,
            object_contrast: 0.4,
            noise: NoiseKind::Gaussian { sigma: 0.1 },
            ..Default::default()
        };
        let out = generate(&cfg).unwrap();
        let mut total = 0.0;
        for t in 0..out.clean.len() {
            total += psnr(out.clean.frame(t), out.noisy.frame(t)).unwrap();
        }
        let mean = total / out.clean.len() as f64;
        assert!((mean - 20.0).abs() <= 0.5, "psnr {mean} dB");
    }
}
