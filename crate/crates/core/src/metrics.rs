//! Image quality metrics.

use crate::error::{PnpError, Result};
use crate::signal::Signal;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_WINDOW_STD: f64 = 1.5;

/// PSNR in dB over all channels jointly. Returns `f64::INFINITY` when the
/// signals are identical.
pub fn psnr(x: &Signal, reference: &Signal, peak: f64) -> Result<f64> {
    x.ensure_same_shape(reference)?;
    let mse = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Normalised 1-D Gaussian taps of length [`SSIM_WINDOW`].
pub fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * SSIM_WINDOW_STD * SSIM_WINDOW_STD)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering: output is `(h-n+1) × (w-n+1)`.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = (0..n).map(|t| taps[t] * plane[i * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..n).map(|t| taps[t] * rows[(i + t) * ow + j]).sum();
        }
    }
    out
}

/// Mean SSIM over fully-contained 11×11 Gaussian windows (σ = 1.5), with
/// `C1 = (0.01·peak)²` and `C2 = (0.03·peak)²`; averaged over channels.
pub fn ssim_with_peak(x: &Signal, reference: &Signal, peak: f64) -> Result<f64> {
    x.ensure_same_shape(reference)?;
    let (h, w, c) = x.shape().hwc();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(PnpError::ImageTooSmall {
            height: h,
            width: w,
            window: SSIM_WINDOW,
        });
    }
    let taps = gaussian_window();
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let mut total = 0.0;
    for ch in 0..c {
        let a = x.channel(ch);
        let b = reference.channel(ch);
        let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = a.iter().zip(b).map(|(p, q)| p * q).collect();
        let mu_a = filter_valid(a, h, w, &taps);
        let mu_b = filter_valid(b, h, w, &taps);
        let e_aa = filter_valid(&aa, h, w, &taps);
        let e_bb = filter_valid(&bb, h, w, &taps);
        let e_ab = filter_valid(&ab, h, w, &taps);
        let n = mu_a.len();
        let mut sum = 0.0;
        for i in 0..n {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / n as f64;
    }
    Ok(total / c as f64)
}

/// [`ssim_with_peak`] with peak 1.
pub fn ssim(x: &Signal, reference: &Signal) -> Result<f64> {
    ssim_with_peak(x, reference, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::awgn_corrupt;
    use crate::signal::Shape;

    fn pattern(h: usize, w: usize) -> Signal {
        Signal::new(
            (0..h * w)
                .map(|i| {
                    let (r, c) = (i / w, i % w);
                    0.5 + 0.3 * ((r as f64 * 0.7).sin() * (c as f64 * 0.45).cos())
                })
                .collect(),
            Shape::image(h, w, 1),
        )
        .unwrap()
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let x = pattern(4, 4);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_direct_formula() {
        let r = Signal::zeros(Shape::Vector(4));
        let x = Signal::filled(Shape::Vector(4), 0.1);
        assert!((psnr(&x, &r, 1.0).unwrap() - 20.0).abs() < 1e-12);
        let one = Signal::filled(Shape::Vector(9), 1.0);
        let zero = Signal::zeros(Shape::Vector(9));
        assert!(psnr(&zero, &one, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn psnr_shape_mismatch() {
        assert!(psnr(&Signal::zeros(Shape::Vector(3)), &Signal::zeros(Shape::Vector(4)), 1.0).is_err());
    }

    #[test]
    fn ssim_identity_and_anticorrelation() {
        let r = pattern(16, 16);
        assert!((ssim(&r, &r).unwrap() - 1.0).abs() < 1e-12);
        let inv = r.map(|v| 1.0 - v);
        assert!(ssim(&inv, &r).unwrap() < 0.0);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let r = pattern(10, 16);
        assert!(matches!(
            ssim(&r, &r),
            Err(PnpError::ImageTooSmall { .. })
        ));
    }

    // Per-window brute force: every window's weighted statistics summed
    // directly from the 2-D weight w_i w_j.
    fn ssim_bruteforce(x: &Signal, r: &Signal) -> f64 {
        let (h, w, _) = x.shape().hwc();
        let g = gaussian_window();
        let n = SSIM_WINDOW;
        let (c1, c2) = (1e-4, 9e-4);
        let (a, b) = (x.data(), r.data());
        let mut total = 0.0;
        let mut count = 0;
        for i0 in 0..=h - n {
            for j0 in 0..=w - n {
                let (mut ma, mut mb) = (0.0, 0.0);
                for u in 0..n {
                    for v in 0..n {
                        let wt = g[u] * g[v];
                        ma += wt * a[(i0 + u) * w + j0 + v];
                        mb += wt * b[(i0 + u) * w + j0 + v];
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for u in 0..n {
                    for v in 0..n {
                        let wt = g[u] * g[v];
                        let da = a[(i0 + u) * w + j0 + v] - ma;
                        let db = b[(i0 + u) * w + j0 + v] - mb;
                        va += wt * da * da;
                        vb += wt * db * db;
                        cov += wt * da * db;
                    }
                }
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn ssim_matches_windowed_bruteforce() {
        let clean = pattern(16, 16);
        let noisy = awgn_corrupt(&clean, 0.05, 11).unwrap();
        let fast = ssim(&noisy, &clean).unwrap();
        let slow = ssim_bruteforce(&noisy, &clean);
        assert!((fast - slow).abs() < 1e-8, "{fast} vs {slow}");
    }
}
