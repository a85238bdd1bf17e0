//! Seeded Gaussian noise.
//!
//! All randomness goes through ChaCha20 (`rand_chacha`), a counter-based
//! generator whose output depends only on `(seed, stream)`, so runs
//! reproduce bit-for-bit across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::signal::Signal;

/// Generator for `seed`, on ChaCha stream `stream`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` i.i.d. standard normals from `rng`.
pub fn standard_normals(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `x + n` with `n ~ N(0, σ² I)`, a pure function of `(x, sigma, seed)`.
pub fn awgn_corrupt(x: &Signal, sigma: f64, seed: u64) -> Result<Signal> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("must be > 0, got {sigma}")));
    }
    let mut rng = seeded_rng(seed, 0);
    let noise = standard_normals(&mut rng, x.len());
    Ok(Signal::from_raw(
        x.data()
            .iter()
            .zip(noise)
            .map(|(&v, n)| v + sigma * n)
            .collect(),
        x.shape(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Shape;

    #[test]
    fn rejects_non_positive_sigma() {
        let x = Signal::zeros(Shape::Vector(3));
        assert!(awgn_corrupt(&x, 0.0, 1).is_err());
        assert!(awgn_corrupt(&x, -1.0, 1).is_err());
    }

    #[test]
    fn vanishing_sigma_returns_input() {
        let x = Signal::vector((0..64).map(|i| i as f64 / 64.0).collect()).unwrap();
        let y = awgn_corrupt(&x, 1e-12, 7).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-10);
    }

    #[test]
    fn same_seed_same_bits() {
        let x = Signal::zeros(Shape::image(8, 8, 3));
        let a = awgn_corrupt(&x, 0.1, 42).unwrap();
        let b = awgn_corrupt(&x, 0.1, 42).unwrap();
        let c = awgn_corrupt(&x, 0.1, 43).unwrap();
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_std_matches_sigma() {
        let sigma = 0.03;
        let x = Signal::filled(Shape::Vector(1_000_000), 0.5);
        let y = awgn_corrupt(&x, sigma, 2024).unwrap();
        let d: Vec<f64> = y.data().iter().map(|v| v - 0.5).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!((var.sqrt() / sigma - 1.0).abs() < 0.01);
    }
}
