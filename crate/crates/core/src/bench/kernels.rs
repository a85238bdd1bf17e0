//! Synthetic blur kernels standing in for the usual motion-blur test set.

use crate::blur::Kernel;
use crate::error::{PnpError, Result};

pub const GAUSSIAN_STD: f64 = 1.6;
pub const GAUSSIAN_SIZE: usize = 9;
pub const BOX_SIZE: usize = 5;
pub const DISK_RADIUS: usize = 3;
pub const MOTION_LENGTH: usize = 7;

pub fn gaussian(std: f64, size: usize) -> Result<Kernel> {
    let c = (size / 2) as f64;
    let data = (0..size * size)
        .map(|k| {
            let (i, j) = ((k / size) as f64 - c, (k % size) as f64 - c);
            (-(i * i + j * j) / (2.0 * std * std)).exp()
        })
        .collect();
    Kernel::new(data, size, size)?.normalized()
}

pub fn boxcar(size: usize) -> Result<Kernel> {
    Kernel::new(vec![1.0; size * size], size, size)?.normalized()
}

/// Pixels whose centre lies within `radius` of the kernel centre.
pub fn disk(radius: usize) -> Result<Kernel> {
    let size = 2 * radius + 1;
    let r = radius as f64;
    let data = (0..size * size)
        .map(|k| {
            let (i, j) = ((k / size) as f64 - r, (k % size) as f64 - r);
            if i * i + j * j <= r * r {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Kernel::new(data, size, size)?.normalized()
}

/// Uniform blur along the main diagonal.
pub fn motion(length: usize) -> Result<Kernel> {
    let data = (0..length * length)
        .map(|k| if k / length == k % length { 1.0 } else { 0.0 })
        .collect();
    Kernel::new(data, length, length)?.normalized()
}

/// The four benchmark kernels, each normalised to sum to one.
pub fn builtin_kernels() -> Vec<(String, Kernel)> {
    ["gaussian", "box", "disk", "motion"]
        .into_iter()
        .map(|n| (n.to_string(), parse_kernel(n).expect("builtin kernel spec")))
        .collect()
}

fn param<T: std::str::FromStr>(spec: &str, raw: Option<&str>, default: T) -> Result<T> {
    match raw {
        None => Ok(default),
        Some(s) => s
            .parse()
            .map_err(|_| PnpError::Config(format!("bad parameter `{s}` in kernel spec `{spec}`"))),
    }
}

/// Parses `name[:params]`: `delta`, `gaussian[:std[:size]]`, `box[:size]`,
/// `disk[:radius]`, `motion[:length]`.
pub fn parse_kernel(spec: &str) -> Result<Kernel> {
    let mut parts = spec.split(':');
    let name = parts.next().unwrap_or_default();
    let (a, b) = (parts.next(), parts.next());
    if parts.next().is_some() {
        return Err(PnpError::Config(format!("too many parameters in kernel spec `{spec}`")));
    }
    let size_ok = |n: usize| -> Result<usize> {
        if n % 2 == 1 && n > 0 {
            Ok(n)
        } else {
            Err(PnpError::Config(format!("kernel size must be odd and positive in `{spec}`")))
        }
    };
    match name {
        "delta" => Ok(Kernel::delta()),
        "gaussian" => {
            let std: f64 = param(spec, a, GAUSSIAN_STD)?;
            if !(std > 0.0) {
                return Err(PnpError::Config(format!("gaussian std must be > 0 in `{spec}`")));
            }
            gaussian(std, size_ok(param(spec, b, GAUSSIAN_SIZE)?)?)
        }
        "box" => boxcar(size_ok(param(spec, a, BOX_SIZE)?)?),
        "disk" => disk(param(spec, a, DISK_RADIUS)?),
        "motion" => motion(size_ok(param(spec, a, MOTION_LENGTH)?)?),
        _ => Err(PnpError::Config(format!("unknown kernel `{spec}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_normalized_and_nonnegative() {
        let ks = builtin_kernels();
        assert_eq!(ks.len(), 4);
        for (name, k) in ks {
            assert!((k.sum() - 1.0).abs() < 1e-12, "{name}");
            assert!(k.is_photometric(), "{name}");
        }
    }

    #[test]
    fn gaussian_is_rotation_symmetric() {
        let k = parse_kernel("gaussian").unwrap();
        let n = k.rows();
        assert_eq!(n, 9);
        for i in 0..n {
            for j in 0..n {
                // 90° rotation: (i, j) -> (j, n-1-i)
                assert!((k.at(i, j) - k.at(j, n - 1 - i)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn disk_support_matches_radius_test() {
        let k = disk(3).unwrap();
        let mut support = 0;
        for i in 0..7i32 {
            for j in 0..7i32 {
                let inside = (i - 3).pow(2) + (j - 3).pow(2) <= 9;
                assert_eq!(k.at(i as usize, j as usize) > 0.0, inside);
                support += inside as usize;
            }
        }
        assert_eq!(support, 29);
    }

    #[test]
    fn motion_is_diagonal() {
        let k = motion(7).unwrap();
        assert!((k.at(3, 3) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(k.at(0, 1), 0.0);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(parse_kernel("box:3").unwrap().rows(), 3);
        assert_eq!(parse_kernel("gaussian:1.0:5").unwrap().rows(), 5);
        assert!(parse_kernel("box:4").is_err());
        assert!(parse_kernel("blur").is_err());
        assert!(parse_kernel("gaussian:x").is_err());
        assert!(parse_kernel("disk:1:2:3").is_err());
    }
}
