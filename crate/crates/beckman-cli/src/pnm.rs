//! Binary netpbm readers/writers: 8-bit PGM (P5) for grayscale and PPM (P6)
//! for color. Values scale linearly between bytes and `[0, 1]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use beckman::ImageTensor;

/// Reads a P5 or P6 file into an image with values in `[0, 1]`.
pub fn read_image(path: &Path) -> Result<ImageTensor> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn parse(bytes: &[u8]) -> Result<ImageTensor> {
    let mut pos = 0usize;
    let magic = token(bytes, &mut pos).context("missing magic number")?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => bail!("unsupported netpbm magic {other:?} (want binary P5 or P6)"),
    };
    let width: usize = token(bytes, &mut pos).context("missing width")?.parse().context("bad width")?;
    let height: usize =
        token(bytes, &mut pos).context("missing height")?.parse().context("bad height")?;
    let maxval: u32 =
        token(bytes, &mut pos).context("missing maxval")?.parse().context("bad maxval")?;
    if maxval == 0 || maxval > 255 {
        bail!("unsupported maxval {maxval} (want 1..=255)");
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        bail!("malformed header/raster separator");
    }
    pos += 1;
    let expected = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        bail!("raster truncated: want {expected} bytes, have {}", raster.len());
    }
    let scale = 1.0 / maxval as f64;
    // Interleaved raster -> channel planes.
    let mut values = vec![0.0f64; expected];
    let plane = width * height;
    for (i, chunk) in raster[..expected].chunks(channels).enumerate() {
        for (c, &b) in chunk.iter().enumerate() {
            values[c * plane + i] = (b as f64 * scale).min(1.0);
        }
    }
    Ok(ImageTensor::new(channels, height, width, values)?)
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Writes a grayscale image as P5 or a 3-channel image as P6 (maxval 255).
pub fn write_image(path: &Path, img: &ImageTensor) -> Result<()> {
    let (magic, channels) = match img.channels() {
        1 => ("P5", 1),
        3 => ("P6", 3),
        c => bail!("cannot encode {c}-channel image as netpbm"),
    };
    let mut out = Vec::new();
    write!(out, "{magic}\n{} {}\n255\n", img.width(), img.height())?;
    let plane = img.pixel_count();
    for i in 0..plane {
        for c in 0..channels {
            let v = img.values()[c * plane + i];
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let img = ImageTensor::new(1, 2, 3, vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.1]).unwrap();
        write_image(&path, &img).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(back.channels(), 1);
        assert_eq!((back.height(), back.width()), (2, 3));
        for (a, b) in back.values().iter().zip(img.values()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn roundtrip_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ppm");
        let img = ImageTensor::new(3, 1, 2, vec![0.1, 0.9, 0.2, 0.8, 0.3, 0.7]).unwrap();
        write_image(&path, &img).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(back.channels(), 3);
        for (a, b) in back.values().iter().zip(img.values()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P5\n# a comment\n2 1\n# another\n255\n\x00\xff";
        let img = parse(bytes).unwrap();
        assert_eq!(img.values(), &[0.0, 1.0]);
    }

    #[test]
    fn truncated_raster_is_rejected() {
        let bytes = b"P5\n2 2\n255\n\x00\xff";
        assert!(parse(bytes).is_err());
    }

    #[test]
    fn ascii_formats_are_rejected() {
        let bytes = b"P2\n2 1\n255\n0 255\n";
        assert!(parse(bytes).is_err());
    }
}
