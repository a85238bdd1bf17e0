//! Signal file formats.
//!
//! The lossless `PNPK` format is a 16-byte header — magic `b"PNPK"`, then
//! little-endian `u32` height, width and channels — followed by the
//! channel-planar data as little-endian `f64`. PNG is 8-bit and lossy
//! (values are clamped to `[0, 1]` and quantised); use it for viewing only.

use std::fs;
use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{PnpError, Result};
use crate::signal::{Shape, Signal};

pub const PNPK_MAGIC: &[u8; 4] = b"PNPK";

pub fn encode_pnpk(signal: &Signal) -> Vec<u8> {
    let (h, w, c) = signal.shape().hwc();
    let mut out = Vec::with_capacity(16 + 8 * signal.len());
    out.extend_from_slice(PNPK_MAGIC);
    for dim in [h, w, c] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in signal.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_pnpk(bytes: &[u8]) -> Result<Signal> {
    if bytes.len() < 16 {
        return Err(PnpError::Format("PNPK header truncated".into()));
    }
    if &bytes[..4] != PNPK_MAGIC {
        return Err(PnpError::Format("bad PNPK magic".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let n = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| PnpError::Format("PNPK dims overflow".into()))?;
    let body = &bytes[16..];
    if body.len() != 8 * n {
        return Err(PnpError::Format(format!(
            "PNPK body has {} bytes, expected {} for {h}x{w}x{c}",
            body.len(),
            8 * n
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Signal::new(data, Shape::image(h, w, c))
}

pub fn write_pnpk(path: impl AsRef<Path>, signal: &Signal) -> Result<()> {
    fs::write(path, encode_pnpk(signal))?;
    Ok(())
}

pub fn read_pnpk(path: impl AsRef<Path>) -> Result<Signal> {
    decode_pnpk(&fs::read(path)?)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png(path: impl AsRef<Path>, signal: &Signal) -> Result<()> {
    let (h, w, c) = signal.shape().hwc();
    let img = match c {
        1 => DynamicImage::ImageLuma8(GrayImage::from_fn(w as u32, h as u32, |j, i| {
            image::Luma([quantize(signal.data()[i as usize * w + j as usize])])
        })),
        3 => DynamicImage::ImageRgb8(RgbImage::from_fn(w as u32, h as u32, |j, i| {
            let p = i as usize * w + j as usize;
            image::Rgb([0, 1, 2].map(|ch| quantize(signal.channel(ch)[p])))
        })),
        _ => {
            return Err(PnpError::Format(format!(
                "PNG output needs 1 or 3 channels, got {c}"
            )))
        }
    };
    img.save(path)?;
    Ok(())
}

pub fn read_png(path: impl AsRef<Path>) -> Result<Signal> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let mut data = vec![0.0; 3 * h * w];
        for (j, i, px) in rgb.enumerate_pixels() {
            for ch in 0..3 {
                data[ch * h * w + i as usize * w + j as usize] = px[ch] as f64 / 255.0;
            }
        }
        Signal::new(data, Shape::image(h, w, 3))
    } else {
        let g = img.to_luma8();
        let data = g.pixels().map(|p| p[0] as f64 / 255.0).collect();
        Signal::new(data, Shape::image(h, w, 1))
    }
}

/// Reads `.pnpk` losslessly, anything else through the PNG decoder.
pub fn read_signal(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("pnpk") => read_pnpk(path),
        _ => read_png(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let s = Signal::new(vec![1.5; 6], Shape::image(2, 3, 1)).unwrap();
        let b = encode_pnpk(&s);
        assert_eq!(&b[..4], b"PNPK");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..12], &3u32.to_le_bytes());
        assert_eq!(&b[12..16], &1u32.to_le_bytes());
        assert_eq!(&b[16..24], &1.5f64.to_le_bytes());
        assert_eq!(b.len(), 16 + 48);
    }

    #[test]
    fn rejects_truncated_and_bad_magic() {
        assert!(decode_pnpk(b"PNP").is_err());
        let mut b = encode_pnpk(&Signal::zeros(Shape::image(1, 1, 1)));
        b[0] = b'X';
        assert!(decode_pnpk(&b).is_err());
        let mut b = encode_pnpk(&Signal::zeros(Shape::image(2, 2, 1)));
        b.pop();
        assert!(decode_pnpk(&b).is_err());
    }

    #[test]
    fn png_quantises_to_8_bits() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let s = Signal::new(vec![0.0, 0.5, 1.0, 2.0], Shape::image(2, 2, 1)).unwrap();
        write_png(&p, &s).unwrap();
        let back = read_png(&p).unwrap();
        assert_eq!(back.shape(), s.shape());
        assert!((back.data()[1] - 128.0 / 255.0).abs() < 1e-12);
        assert_eq!(back.data()[3], 1.0);
    }

    proptest! {
        #[test]
        fn pnpk_is_lossless(h in 1usize..6, w in 1usize..6, c in 1usize..4, seed in any::<u64>()) {
            let mut rng = crate::noise::seeded_rng(seed, 0);
            let data = crate::noise::standard_normals(&mut rng, h * w * c);
            let s = Signal::new(data, Shape::image(h, w, c)).unwrap();
            let back = decode_pnpk(&encode_pnpk(&s)).unwrap();
            prop_assert!(back.data().iter().zip(s.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back.shape(), s.shape());
        }
    }
}
