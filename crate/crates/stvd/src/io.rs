//! On-disk formats: clip directories (P5 PGM + manifest) and annotation CSV.
//!
//! A clip directory holds one 8-bit binary PGM per frame plus `manifest.txt`
//! whose first line is `fps=<float>` and whose remaining lines list frame
//! files in playback order. Annotations are `frame,id,x,y,w,h` CSV lines.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::clip::{BoxAnnotation, Clip, Frame};
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.txt";

/// Quantize an intensity to 8 bits: round(clamp(v,0,1)*255), half away from zero.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a clip as PGM frames plus manifest. Frames are clamped and
/// quantized; a later [`load_clip`] reproduces the quantized intensities
/// exactly.
pub fn save_clip(clip: &Clip, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    manifest.push_str(&format!("fps={}\n", clip.fps()));
    for (i, frame) in clip.frames().iter().enumerate() {
        let name = format!("frame_{i:06}.pgm");
        write_pgm(frame, &dir.join(&name))?;
        manifest.push_str(&name);
        manifest.push('\n');
    }
    fs::write(dir.join(MANIFEST_NAME), manifest)?;
    Ok(())
}

/// Load a clip directory in manifest order.
pub fn load_clip(dir: &Path) -> Result<Clip> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::format(&manifest_path, format!("missing manifest: {e}")))?;
    let mut lines = text.lines();
    let fps_line = lines
        .next()
        .ok_or_else(|| Error::format(&manifest_path, "empty manifest"))?;
    let fps: f64 = fps_line
        .strip_prefix("fps=")
        .ok_or_else(|| Error::format(&manifest_path, "first line must be fps=<float>"))?
        .trim()
        .parse()
        .map_err(|e| Error::format(&manifest_path, format!("bad fps value: {e}")))?;

    let mut frames = Vec::new();
    for name in lines {
        let name = name.trim();
        if name.is_empty() {
            continue;
        }
        frames.push(read_pgm(&dir.join(name))?);
    }
    if frames.is_empty() {
        return Err(Error::format(&manifest_path, "manifest lists no frames"));
    }
    let source_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".to_string());
    Clip::new(frames, fps, source_id)
}

fn write_pgm(frame: &Frame, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(frame.data().len() + 32);
    write!(bytes, "P5\n{} {}\n255\n", frame.width(), frame.height())?;
    bytes.extend(frame.data().iter().map(|&v| quantize(v)));
    fs::write(path, bytes)?;
    Ok(())
}

fn read_pgm(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::format(path, format!("missing frame: {e}")))?;
    let (header_len, fields) = parse_pnm_header(&bytes, path)?;
    let [magic, w, h, maxval] = fields;
    if magic != b"P5"[..] {
        return Err(Error::format(path, "not a binary PGM (P5)"));
    }
    let width: usize = parse_field(&w, path, "width")?;
    let height: usize = parse_field(&h, path, "height")?;
    let maxval: usize = parse_field(&maxval, path, "maxval")?;
    if maxval != 255 {
        return Err(Error::format(path, format!("unsupported bit depth (maxval {maxval})")));
    }
    let pixels = &bytes[header_len..];
    if pixels.len() != width * height {
        return Err(Error::format(
            path,
            format!("expected {} pixel bytes, found {}", width * height, pixels.len()),
        ));
    }
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Frame::new(height, width, data)
}

/// Parse a PNM header of `n` whitespace-separated fields (with `#` comments),
/// returning the byte offset where raster data begins.
pub(crate) fn parse_pnm_header(bytes: &[u8], path: &Path) -> Result<(usize, [Vec<u8>; 4])> {
    let mut fields: Vec<Vec<u8>> = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        if i >= bytes.len() {
            return Err(Error::format(path, "truncated header"));
        }
        match bytes[i] {
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'#' {
                    i += 1;
                }
                fields.push(bytes[start..i].to_vec());
            }
        }
    }
    // Exactly one whitespace byte separates the header from the raster.
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return Err(Error::format(path, "malformed header terminator"));
    }
    i += 1;
    let fields: [Vec<u8>; 4] = fields.try_into().expect("collected 4 fields");
    Ok((i, fields))
}

fn parse_field<T: std::str::FromStr>(bytes: &[u8], path: &Path, what: &str) -> Result<T> {
    std::str::from_utf8(bytes)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(path, format!("bad {what} field")))
}

/// Parse `frame,id,x,y,w,h` lines. Empty lines are ignored; malformed lines
/// report their 1-based line number.
pub fn load_annotations(path: &Path) -> Result<Vec<BoxAnnotation>> {
    let text = fs::read_to_string(path)?;
    parse_annotations(&text)
}

pub fn parse_annotations(text: &str) -> Result<Vec<BoxAnnotation>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(Error::Annotation {
                line: line_no,
                msg: format!("expected 6 comma-separated fields, found {}", parts.len()),
            });
        }
        let nums: Vec<i64> = parts
            .iter()
            .map(|p| p.parse::<i64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Annotation { line: line_no, msg: format!("bad integer: {e}") })?;
        let [frame, id, x, y, w, h] = nums[..] else { unreachable!() };
        if frame < 0 || id < 0 || x < 0 || y < 0 {
            return Err(Error::Annotation { line: line_no, msg: "negative coordinate".into() });
        }
        if w < 1 || h < 1 {
            return Err(Error::Annotation {
                line: line_no,
                msg: format!("non-positive extent {w}x{h}"),
            });
        }
        out.push(BoxAnnotation {
            frame_index: frame as usize,
            object_id: id as u64,
            x: x as usize,
            y: y as usize,
            w: w as usize,
            h: h as usize,
        });
    }
    Ok(out)
}

pub fn save_annotations(annotations: &[BoxAnnotation], path: &Path) -> Result<()> {
    let mut text = String::new();
    for a in annotations {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            a.frame_index, a.object_id, a.x, a.y, a.w, a.h
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::TempDir;

    #[test]
    fn quantize_rules() {
        assert_eq!(quantize(0.5), 128); // 127.5 rounds away from zero
        assert_eq!(quantize(1.3), 255);
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
    }

    #[test]
    fn byte_mapping_is_exact() {
        let dir = TempDir::new().unwrap();
        let frame = Frame::new(1, 3, vec![0.0, 128.0 / 255.0, 1.0]).unwrap();
        let clip = Clip::new(vec![frame], 12.5, "m").unwrap();
        save_clip(&clip, dir.path()).unwrap();
        let back = load_clip(dir.path()).unwrap();
        assert_eq!(back.frame(0).data(), &[0.0, 128.0 / 255.0, 1.0]);
        assert_eq!(back.fps(), 12.5);
    }

    #[test]
    fn manifest_order_wins_over_name_order() {
        let dir = TempDir::new().unwrap();
        let f1 = Frame::filled(2, 2, 0.0);
        let f2 = Frame::filled(2, 2, 1.0);
        write_pgm(&f1, &dir.path().join("f1.pgm")).unwrap();
        write_pgm(&f2, &dir.path().join("f2.pgm")).unwrap();
        fs::write(dir.path().join(MANIFEST_NAME), "fps=10\nf2.pgm\nf1.pgm\n").unwrap();
        let clip = load_clip(dir.path()).unwrap();
        assert_eq!(clip.frame(0).get(0, 0), 1.0);
        assert_eq!(clip.frame(1).get(0, 0), 0.0);
    }

    #[test]
    fn load_errors() {
        let dir = TempDir::new().unwrap();
        assert!(load_clip(dir.path()).is_err()); // no manifest

        fs::write(dir.path().join(MANIFEST_NAME), "fps=10\nmissing.pgm\n").unwrap();
        assert!(load_clip(dir.path()).is_err()); // listed file missing

        // inconsistent dimensions
        write_pgm(&Frame::zeros(2, 2), &dir.path().join("a.pgm")).unwrap();
        write_pgm(&Frame::zeros(2, 3), &dir.path().join("b.pgm")).unwrap();
        fs::write(dir.path().join(MANIFEST_NAME), "fps=10\na.pgm\nb.pgm\n").unwrap();
        assert!(load_clip(dir.path()).is_err());

        // unsupported bit depth
        fs::write(dir.path().join("deep.pgm"), b"P5\n1 1\n65535\n\0\0").unwrap();
        fs::write(dir.path().join(MANIFEST_NAME), "fps=10\ndeep.pgm\n").unwrap();
        assert!(load_clip(dir.path()).is_err());
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir1 = TempDir::new().unwrap();
        let dir2 = TempDir::new().unwrap();
        let frames: Vec<Frame> = (0..3)
            .map(|i| {
                let data = (0..64).map(|j| ((i * 64 + j) % 256) as f64 / 255.0).collect();
                Frame::new(8, 8, data).unwrap()
            })
            .collect();
        let clip = Clip::new(frames, 9.5, "rt").unwrap();
        save_clip(&clip, dir1.path()).unwrap();
        let back = load_clip(dir1.path()).unwrap();
        save_clip(&back, dir2.path()).unwrap();
        for i in 0..3 {
            let name = format!("frame_{i:06}.pgm");
            let a = fs::read(dir1.path().join(&name)).unwrap();
            let b = fs::read(dir2.path().join(&name)).unwrap();
            assert_eq!(a, b, "frame {i} bytes differ");
        }
    }

    #[test]
    fn annotation_parsing() {
        let anns = parse_annotations("0,1,10,12,5,6\n").unwrap();
        assert_eq!(
            anns,
            vec![BoxAnnotation { frame_index: 0, object_id: 1, x: 10, y: 12, w: 5, h: 6 }]
        );
        assert!(parse_annotations("").unwrap().is_empty());
        let err = parse_annotations("0,1,10,12,-5,6").unwrap_err();
        match err {
            Error::Annotation { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
        let err = parse_annotations("0,1,10,12,5,6\n0,1,x,0,1,1").unwrap_err();
        match err {
            Error::Annotation { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    proptest! {
        // Intensities on the 1/255 grid survive save->load exactly.
        #[test]
        fn grid_intensities_round_trip(values in proptest::collection::vec(0u8..=255, 16)) {
            let dir = TempDir::new().unwrap();
            let data: Vec<f64> = values.iter().map(|&p| p as f64 / 255.0).collect();
            let clip = Clip::new(
                vec![Frame::new(4, 4, data.clone()).unwrap()],
                7.0,
                "prop",
            ).unwrap();
            save_clip(&clip, dir.path()).unwrap();
            let back = load_clip(dir.path()).unwrap();
            prop_assert_eq!(back.frame(0).data(), &data[..]);
        }
    }
}
