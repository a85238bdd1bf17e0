//! Real-valued signals: abstract vectors and channel-planar images.

use std::fmt;

use crate::error::{PnpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Vector(usize),
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
}

impl Shape {
    pub fn image(height: usize, width: usize, channels: usize) -> Self {
        Shape::Image {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Image {
                height,
                width,
                channels,
            } => height * width * channels,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(height, width, channels)`; a vector of length n is treated as n×1×1.
    pub fn hwc(&self) -> (usize, usize, usize) {
        match *self {
            Shape::Vector(n) => (n, 1, 1),
            Shape::Image {
                height,
                width,
                channels,
            } => (height, width, channels),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Vector(n) => write!(f, "({n},)"),
            Shape::Image {
                height,
                width,
                channels,
            } => write!(f, "({height}, {width}, {channels})"),
        }
    }
}

/// Flat `f64` storage plus shape. Images are channel-planar: channel `c`
/// occupies `data[c*h*w .. (c+1)*h*w]` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    data: Vec<f64>,
    shape: Shape,
}

impl Signal {
    pub fn new(data: Vec<f64>, shape: Shape) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(PnpError::ShapeMismatch {
                expected: format!("{} values for shape {shape}", shape.len()),
                got: format!("{} values", data.len()),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(PnpError::NonFinite {
                what: format!("signal entry {i}"),
            });
        }
        Ok(Signal { data, shape })
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Signal::new(data, Shape::Vector(n))
    }

    pub fn zeros(shape: Shape) -> Self {
        Signal {
            data: vec![0.0; shape.len()],
            shape,
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Signal {
            data: vec![value; shape.len()],
            shape,
        }
    }

    /// Builds a signal without the finiteness scan. Callers that produce
    /// iterates check finiteness themselves and report the iteration.
    pub(crate) fn from_raw(data: Vec<f64>, shape: Shape) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        Signal { data, shape }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let (h, w, _) = self.shape.hwc();
        &self.data[c * h * w..(c + 1) * h * w]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_same_shape(&self, other: &Signal) -> Result<()> {
        if self.shape != other.shape {
            return Err(PnpError::ShapeMismatch {
                expected: self.shape.to_string(),
                got: other.shape.to_string(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Signal {
        Signal::from_raw(self.data.iter().map(|&v| f(v)).collect(), self.shape)
    }

    /// Elementwise `f(self[i], other[i])`; panics on shape mismatch.
    pub fn zip_map(&self, other: &Signal, f: impl Fn(f64, f64) -> f64) -> Signal {
        assert_eq!(self.shape, other.shape, "zip_map on mismatched shapes");
        Signal::from_raw(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            self.shape,
        )
    }

    pub fn add(&self, other: &Signal) -> Signal {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Signal) -> Signal {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Signal {
        self.map(|v| k * v)
    }

    /// `self + k * other`
    pub fn axpy(&self, k: f64, other: &Signal) -> Signal {
        self.zip_map(other, |a, b| a + k * b)
    }

    pub fn dot(&self, other: &Signal) -> f64 {
        assert_eq!(self.shape, other.shape, "dot on mismatched shapes");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(&self, other: &Signal) -> f64 {
        assert_eq!(self.shape, other.shape, "dist on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &Signal) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Signal {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(self, shape: Shape) -> Result<Signal> {
        if shape.len() != self.data.len() {
            return Err(PnpError::ShapeMismatch {
                expected: format!("{} values", shape.len()),
                got: format!("{} values", self.data.len()),
            });
        }
        Ok(Signal {
            data: self.data,
            shape,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_must_match_shape() {
        assert!(Signal::new(vec![0.0; 5], Shape::image(2, 2, 1)).is_err());
        assert!(Signal::new(vec![0.0; 12], Shape::image(2, 2, 3)).is_ok());
    }

    #[test]
    fn rejects_non_finite() {
        let err = Signal::vector(vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, PnpError::NonFinite { .. }));
        assert!(Signal::vector(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn channel_planar_layout() {
        let s = Signal::new((0..8).map(f64::from).collect(), Shape::image(2, 2, 2)).unwrap();
        assert_eq!(s.channel(1), &[4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn arithmetic() {
        let a = Signal::vector(vec![1.0, 2.0]).unwrap();
        let b = Signal::vector(vec![3.0, -1.0]).unwrap();
        assert_eq!(a.add(&b).data(), &[4.0, 1.0]);
        assert_eq!(a.axpy(2.0, &b).data(), &[7.0, 0.0]);
        assert_eq!(a.dot(&b), 1.0);
        assert!((a.dist(&b) - 13f64.sqrt()).abs() < 1e-15);
    }
}
