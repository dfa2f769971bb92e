//! Classical per-frame processing and multi-channel composition.
//!
//! Downstream consumers take a three-channel image: the denoised frame
//! duplicated into the first two channels and an auxiliary frame
//! (background-subtracted or median-filtered) in the last. Composites are
//! written as binary P6 pixmaps with the same manifest scheme as clips.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::clip::{Clip, Frame};
use crate::error::{Error, Result};
use crate::io::{parse_pnm_header, quantize, MANIFEST_NAME};
use crate::targets::{background_sub_with_mean, mean_frame};

/// Subtract the clip's temporal mean from every frame, clamped to `[0,1]`.
pub fn background_subtract_clip(clip: &Clip) -> Clip {
    let mean = mean_frame(clip);
    let frames = clip
        .frames()
        .iter()
        .map(|f| background_sub_with_mean(f, &mean))
        .collect();
    Clip::new(frames, clip.fps(), clip.source_id()).expect("dims preserved")
}

/// Spatial k-by-k median with edge replication. `k` must be odd and >= 3.
pub fn median_filter_frame(frame: &Frame, k: usize) -> Result<Frame> {
    if k < 3 || k % 2 == 0 {
        return Err(Error::Config(format!("median kernel {k} must be odd and >= 3")));
    }
    let (h, w) = (frame.height(), frame.width());
    let half = (k / 2) as isize;
    let mut out = Vec::with_capacity(h * w);
    let mut window = Vec::with_capacity(k * k);
    for y in 0..h as isize {
        for x in 0..w as isize {
            window.clear();
            for dy in -half..=half {
                for dx in -half..=half {
                    let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                    let sx = (x + dx).clamp(0, w as isize - 1) as usize;
                    window.push(frame.get(sy, sx));
                }
            }
            window.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out.push(window[window.len() / 2]);
        }
    }
    Frame::new(h, w, out)
}

pub fn median_filter_clip(clip: &Clip, k: usize) -> Result<Clip> {
    let frames: Result<Vec<Frame>> =
        clip.frames().iter().map(|f| median_filter_frame(f, k)).collect();
    Clip::new(frames?, clip.fps(), clip.source_id())
}

/// One three-channel frame, planar storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeFrame {
    pub height: usize,
    pub width: usize,
    pub channels: [Vec<f64>; 3],
}

#[derive(Debug, Clone)]
pub struct CompositeClip {
    pub frames: Vec<CompositeFrame>,
    pub fps: f64,
}

/// Channel order is fixed: `(primary, primary, aux)`.
pub fn compose_channels(primary: &Clip, aux: &Clip) -> Result<CompositeClip> {
    if primary.len() != aux.len()
        || primary.height() != aux.height()
        || primary.width() != aux.width()
    {
        return Err(Error::Shape("compose_channels: clip geometry differs".into()));
    }
    let frames = primary
        .frames()
        .iter()
        .zip(aux.frames())
        .map(|(p, a)| CompositeFrame {
            height: p.height(),
            width: p.width(),
            channels: [p.data().to_vec(), p.data().to_vec(), a.data().to_vec()],
        })
        .collect();
    Ok(CompositeClip { frames, fps: primary.fps() })
}

/// Write as one P6 pixmap per frame plus a manifest.
pub fn save_composite_clip(clip: &CompositeClip, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = format!("fps={}\n", clip.fps);
    for (i, frame) in clip.frames.iter().enumerate() {
        let name = format!("frame_{i:06}.ppm");
        let mut bytes = Vec::with_capacity(frame.height * frame.width * 3 + 32);
        write!(bytes, "P6\n{} {}\n255\n", frame.width, frame.height)?;
        for p in 0..frame.height * frame.width {
            for ch in &frame.channels {
                bytes.push(quantize(ch[p]));
            }
        }
        fs::write(dir.join(&name), bytes)?;
        manifest.push_str(&name);
        manifest.push('\n');
    }
    fs::write(dir.join(MANIFEST_NAME), manifest)?;
    Ok(())
}

pub fn load_composite_clip(dir: &Path) -> Result<CompositeClip> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::format(&manifest_path, format!("missing manifest: {e}")))?;
    let mut lines = text.lines();
    let fps: f64 = lines
        .next()
        .and_then(|l| l.strip_prefix("fps="))
        .ok_or_else(|| Error::format(&manifest_path, "first line must be fps=<float>"))?
        .trim()
        .parse()
        .map_err(|e| Error::format(&manifest_path, format!("bad fps: {e}")))?;
    let mut frames = Vec::new();
    for name in lines.filter(|l| !l.trim().is_empty()) {
        let path = dir.join(name.trim());
        let bytes = fs::read(&path)?;
        let (header_len, fields) = parse_pnm_header(&bytes, &path)?;
        if fields[0] != b"P6"[..] {
            return Err(Error::format(&path, "not a binary PPM (P6)"));
        }
        let parse = |b: &[u8]| -> Result<usize> {
            std::str::from_utf8(b)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::format(&path, "bad header field"))
        };
        let width = parse(&fields[1])?;
        let height = parse(&fields[2])?;
        if parse(&fields[3])? != 255 {
            return Err(Error::format(&path, "unsupported bit depth"));
        }
        let pixels = &bytes[header_len..];
        if pixels.len() != width * height * 3 {
            return Err(Error::format(&path, "pixel payload size mismatch"));
        }
        let mut channels = [
            Vec::with_capacity(width * height),
            Vec::with_capacity(width * height),
            Vec::with_capacity(width * height),
        ];
        for px in pixels.chunks_exact(3) {
            for (c, &b) in channels.iter_mut().zip(px) {
                c.push(b as f64 / 255.0);
            }
        }
        frames.push(CompositeFrame { height, width, channels });
    }
    if frames.is_empty() {
        return Err(Error::format(&manifest_path, "manifest lists no frames"));
    }
    Ok(CompositeClip { frames, fps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use tempfile::TempDir;

    fn random_clip(n: usize, h: usize, w: usize, seed: u64) -> Clip {
        let mut rng = crate::rng::stream_rng(seed, &[0xC0]);
        let frames = (0..n)
            .map(|_| Frame::new(h, w, (0..h * w).map(|_| rng.gen::<f64>()).collect()).unwrap())
            .collect();
        Clip::new(frames, 10.0, "c").unwrap()
    }

    #[test]
    fn background_subtract_constant_clip_is_zero() {
        let clip = Clip::new(vec![Frame::filled(8, 8, 0.6); 4], 10.0, "c").unwrap();
        let out = background_subtract_clip(&clip);
        for f in out.frames() {
            assert!(f.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn background_subtract_retains_object() {
        // two frames: flat background, then background plus a bright pixel.
        // mean = bg + delta/2 at that pixel, so the object frame keeps
        // delta/2 there and everything else clamps to zero.
        let bg = Frame::filled(4, 4, 0.2);
        let mut obj = bg.clone();
        obj.data_mut()[5] = 0.8;
        let clip = Clip::new(vec![bg, obj], 10.0, "c").unwrap();
        let out = background_subtract_clip(&clip);
        assert_eq!(out.frame(0).data()[5], 0.0);
        assert!((out.frame(1).data()[5] - 0.3).abs() <= 1e-12);
        for (i, &v) in out.frame(1).data().iter().enumerate() {
            if i != 5 {
                assert_eq!(v, 0.0);
            }
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn median_filter_cases() {
        let constant = Frame::filled(6, 6, 0.4);
        assert_eq!(median_filter_frame(&constant, 3).unwrap().data(), constant.data());

        let mut salt = Frame::zeros(8, 8);
        salt.data_mut()[3 * 8 + 3] = 1.0;
        let filtered = median_filter_frame(&salt, 3).unwrap();
        assert!(filtered.data().iter().all(|&v| v == 0.0));

        assert!(median_filter_frame(&constant, 4).is_err());
        assert!(median_filter_frame(&constant, 1).is_err());

        // sort-based per-pixel oracle with edge replication
        let frame = random_clip(1, 8, 8, 1).frame(0).clone();
        let got = median_filter_frame(&frame, 3).unwrap();
        for y in 0..8i64 {
            for x in 0..8i64 {
                let mut vals = Vec::new();
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let sy = (y + dy).clamp(0, 7) as usize;
                        let sx = (x + dx).clamp(0, 7) as usize;
                        vals.push(frame.get(sy, sx));
                    }
                }
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert_eq!(got.get(y as usize, x as usize), vals[4]);
            }
        }
    }

    #[test]
    fn median_idempotent_on_binary_images() {
        let mut rng = crate::rng::stream_rng(9, &[0xB1]);
        for _ in 0..5 {
            let data: Vec<f64> =
                (0..144).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect();
            let frame = Frame::new(12, 12, data).unwrap();
            let once = median_filter_frame(&frame, 3).unwrap();
            let twice = median_filter_frame(&once, 3).unwrap();
            assert_eq!(once.data(), twice.data());
        }
    }

    #[test]
    fn compose_channel_order_and_round_trip() {
        let dir = TempDir::new().unwrap();
        let primary = random_clip(3, 8, 8, 2);
        let aux = random_clip(3, 8, 8, 3);
        let composite = compose_channels(&primary, &aux).unwrap();
        save_composite_clip(&composite, dir.path()).unwrap();

        // byte inspection: interleaved RGB must be (primary, primary, aux)
        let bytes = fs::read(dir.path().join("frame_000000.ppm")).unwrap();
        let header_end = bytes.len() - 8 * 8 * 3;
        let px = &bytes[header_end..];
        for p in 0..64 {
            assert_eq!(px[p * 3], quantize(primary.frame(0).data()[p]));
            assert_eq!(px[p * 3 + 1], px[p * 3]);
            assert_eq!(px[p * 3 + 2], quantize(aux.frame(0).data()[p]));
        }

        // load preserves quantized values exactly
        let back = load_composite_clip(dir.path()).unwrap();
        assert_eq!(back.frames.len(), 3);
        for (orig, loaded) in composite.frames.iter().zip(&back.frames) {
            for ch in 0..3 {
                for (a, b) in orig.channels[ch].iter().zip(&loaded.channels[ch]) {
                    assert_eq!(quantize(*a) as f64 / 255.0, *b);
                }
            }
        }

        // aux == primary -> three identical channels
        let same = compose_channels(&primary, &primary).unwrap();
        assert_eq!(same.frames[0].channels[0], same.frames[0].channels[2]);

        let short = random_clip(2, 8, 8, 4);
        assert!(compose_channels(&primary, &short).is_err());
    }
}
