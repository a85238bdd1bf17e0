//! Circular blur operators diagonalised by the 2-D DFT.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, PnpError, Result};
use crate::signal::{Shape, Signal};

/// Convolution kernel with odd side lengths; the centre tap sits at
/// `(rows/2, cols/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Kernel {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if rows.is_multiple_of(2) || cols.is_multiple_of(2) {
            return Err(invalid(
                "kernel",
                format!("side lengths must be odd, got {rows}x{cols}"),
            ));
        }
        if data.len() != rows * cols {
            return Err(PnpError::ShapeMismatch {
                expected: format!("{} kernel taps", rows * cols),
                got: format!("{}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(PnpError::NonFinite {
                what: "kernel".into(),
            });
        }
        Ok(Kernel { data, rows, cols })
    }

    pub fn delta() -> Self {
        Kernel {
            data: vec![1.0],
            rows: 1,
            cols: 1,
        }
    }

    /// Rescales the taps to sum to one.
    pub fn normalized(mut self) -> Result<Self> {
        let s: f64 = self.data.iter().sum();
        if s.abs() < f64::EPSILON {
            return Err(invalid("kernel", "taps sum to zero"));
        }
        self.data.iter_mut().for_each(|v| *v /= s);
        Ok(self)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_photometric(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0) && (self.sum() - 1.0).abs() < 1e-9
    }
}

#[derive(Clone)]
pub(crate) struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (h, w) = (self.height, self.width);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for r in buf.chunks_exact_mut(w) {
            row.process(r);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for j in 0..w {
            for i in 0..h {
                column[i] = buf[i * w + j];
            }
            col.process(&mut column);
            for i in 0..h {
                buf[i * w + j] = column[i];
            }
        }
        if inverse {
            let k = 1.0 / (h * w) as f64;
            buf.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub(crate) fn forward_real(&self, plane: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        buf
    }

    pub(crate) fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spectrum, true);
        spectrum.into_iter().map(|c| c.re).collect()
    }
}

/// The measurement operator `A`: circular convolution with a kernel at a
/// fixed image size, stored with its transfer function.
#[derive(Clone)]
pub struct BlurOperator {
    kernel: Kernel,
    height: usize,
    width: usize,
    transfer: Vec<Complex64>,
    fft: Fft2,
}

impl fmt::Debug for BlurOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlurOperator")
            .field("kernel", &(self.kernel.rows, self.kernel.cols))
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl BlurOperator {
    pub fn new(kernel: Kernel, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid("image size", "must be non-empty"));
        }
        let fft = Fft2::new(height, width);
        let padded = center_padded(&kernel, height, width);
        let transfer = fft.forward_real(&padded);
        Ok(BlurOperator {
            kernel,
            height,
            width,
            transfer,
            fft,
        })
    }

    /// Operator sized to act on signals of `shape` (per channel).
    pub fn for_shape(kernel: Kernel, shape: Shape) -> Result<Self> {
        let (h, w, _) = shape.hwc();
        BlurOperator::new(kernel, h, w)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn transfer(&self) -> &[Complex64] {
        &self.transfer
    }

    pub(crate) fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Largest `|K̂|` over all frequencies.
    pub fn max_gain(&self) -> f64 {
        self.transfer.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub(crate) fn check_shape(&self, x: &Signal) -> Result<()> {
        let (h, w, _) = x.shape().hwc();
        if h != self.height || w != self.width {
            return Err(PnpError::ShapeMismatch {
                expected: format!("{}x{} per channel", self.height, self.width),
                got: format!("{h}x{w} (signal shape {})", x.shape()),
            });
        }
        Ok(())
    }

    /// Applies `multiplier(k̂)` to every channel's spectrum.
    pub(crate) fn apply_spectral(
        &self,
        x: &Signal,
        multiplier: impl Fn(Complex64) -> Complex64,
    ) -> Result<Signal> {
        self.check_shape(x)?;
        let (_, _, c) = x.shape().hwc();
        let mut out = Vec::with_capacity(x.len());
        for ch in 0..c {
            let mut spec = self.fft.forward_real(x.channel(ch));
            for (v, k) in spec.iter_mut().zip(&self.transfer) {
                *v *= multiplier(*k);
            }
            out.extend(self.fft.inverse_real(spec));
        }
        Ok(Signal::from_raw(out, x.shape()))
    }

    /// `A x`
    pub fn apply(&self, x: &Signal) -> Result<Signal> {
        self.apply_spectral(x, |k| k)
    }

    /// `Aᵀ x` (correlation, i.e. the conjugate transfer function).
    pub fn adjoint(&self, x: &Signal) -> Result<Signal> {
        self.apply_spectral(x, |k| k.conj())
    }
}

/// Zero-pads the kernel to `height × width` with its centre moved to the
/// origin (wrapping around, so taps outside the image alias).
pub(crate) fn center_padded(kernel: &Kernel, height: usize, width: usize) -> Vec<f64> {
    let mut padded = vec![0.0; height * width];
    let (ci, cj) = (kernel.rows / 2, kernel.cols / 2);
    for i in 0..kernel.rows {
        for j in 0..kernel.cols {
            let r = (i as isize - ci as isize).rem_euclid(height as isize) as usize;
            let c = (j as isize - cj as isize).rem_euclid(width as isize) as usize;
            padded[r * width + c] += kernel.at(i, j);
        }
    }
    padded
}

/// `A x` computed per channel in the frequency domain.
pub fn circular_convolve(x: &Signal, op: &BlurOperator) -> Result<Signal> {
    op.apply(x)
}
