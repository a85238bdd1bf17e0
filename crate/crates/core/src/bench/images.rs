//! Bundled test images: two synthetic piecewise-constant scenes and two
//! downsampled public-domain photographs (lossless PNPK).

use std::path::Path;

use crate::error::{PnpError, Result};
use crate::io::{decode_pnpk, read_signal};
use crate::signal::{Shape, Signal};

pub const BUILTIN_SIZE: usize = 64;
pub const BUILTIN_IMAGES: [&str; 4] = ["shapes", "bars", "camera", "astronaut"];

const CAMERA: &[u8] = include_bytes!("../../assets/camera64.pnpk");
const ASTRONAUT: &[u8] = include_bytes!("../../assets/astronaut64.pnpk");

/// Two-level scene: a square and a disc at 0.8 on a 0.2 background.
pub fn shapes(n: usize) -> Signal {
    let f = n as f64;
    let data = (0..n * n)
        .map(|k| {
            let (i, j) = ((k / n) as f64 + 0.5, (k % n) as f64 + 0.5);
            let in_square = (0.15 * f..0.5 * f).contains(&i) && (0.15 * f..0.45 * f).contains(&j);
            let (di, dj) = (i - 0.65 * f, j - 0.65 * f);
            let in_disc = di * di + dj * dj <= (0.22 * f).powi(2);
            if in_square || in_disc {
                0.8
            } else {
                0.2
            }
        })
        .collect();
    Signal::from_raw(data, Shape::image(n, n, 1))
}

/// Vertical bars of decreasing width, alternating 0.2 / 0.8.
pub fn bars(n: usize) -> Signal {
    let mut edges = Vec::new();
    let (mut pos, mut width) = (0usize, (n / 6).max(1));
    while pos < n {
        edges.push(pos);
        pos += width;
        width = (width * 3 / 4).max(1);
    }
    let data = (0..n * n)
        .map(|k| {
            let j = k % n;
            let band = edges.iter().filter(|&&e| e <= j).count();
            if band % 2 == 0 {
                0.2
            } else {
                0.8
            }
        })
        .collect();
    Signal::from_raw(data, Shape::image(n, n, 1))
}

pub fn builtin_image(name: &str) -> Option<Signal> {
    match name {
        "shapes" => Some(shapes(BUILTIN_SIZE)),
        "bars" => Some(bars(BUILTIN_SIZE)),
        "camera" => decode_pnpk(CAMERA).ok(),
        "astronaut" => decode_pnpk(ASTRONAUT).ok(),
        _ => None,
    }
}

/// A builtin name or a path to a `.pnpk` / PNG file.
pub fn load_image(spec: &str) -> Result<Signal> {
    if let Some(s) = builtin_image(spec) {
        return Ok(s);
    }
    let p = Path::new(spec);
    if !p.exists() {
        return Err(PnpError::Config(format!(
            "image `{spec}` is neither a builtin ({}) nor an existing file",
            BUILTIN_IMAGES.join(", ")
        )));
    }
    read_signal(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        for name in BUILTIN_IMAGES {
            let s = builtin_image(name).unwrap();
            let (h, w, _) = s.shape().hwc();
            assert_eq!((h, w), (64, 64), "{name}");
            assert!(s.data().iter().all(|v| (0.0..=1.0).contains(v)), "{name}");
        }
        assert_eq!(builtin_image("astronaut").unwrap().shape().hwc().2, 3);
    }

    #[test]
    fn synthetic_images_are_two_level() {
        for s in [shapes(64), bars(64)] {
            assert!(s.data().iter().all(|&v| v == 0.2 || v == 0.8));
            let hi = s.data().iter().filter(|&&v| v == 0.8).count();
            assert!(hi > 400 && hi < 64 * 64 - 400);
        }
    }

    #[test]
    fn unknown_image_is_config_error() {
        assert!(matches!(load_image("no/such/file.png"), Err(PnpError::Config(_))));
    }
}
