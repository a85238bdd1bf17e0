//! Proximal operators: the closed-form prox of the quadratic data term and
//! a grid-search oracle for low-dimensional regularizers.

use crate::blur::BlurOperator;
use crate::error::{invalid, PnpError, Result};
use crate::signal::Signal;

/// `v ↦ prox_{γ f}(v)` for some `f`.
pub trait Prox {
    fn prox(&self, v: &Signal, gamma: f64) -> Result<Signal>;
}

impl<F> Prox for F
where
    F: Fn(&Signal, f64) -> Result<Signal>,
{
    fn prox(&self, v: &Signal, gamma: f64) -> Result<Signal> {
        self(v, gamma)
    }
}

/// `g(x) = (1/(2λ)) ‖A x − y‖²`.
#[derive(Debug, Clone)]
pub struct DataFidelity {
    blur: BlurOperator,
    y: Signal,
    lambda: f64,
}

impl DataFidelity {
    pub fn new(blur: BlurOperator, y: Signal, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid("lambda", format!("must be > 0, got {lambda}")));
        }
        if !y.is_finite() {
            return Err(PnpError::NonFinite { what: "observation".into() });
        }
        blur.check_shape(&y)?;
        Ok(DataFidelity { blur, y, lambda })
    }

    pub fn blur(&self) -> &BlurOperator {
        &self.blur
    }

    pub fn observation(&self) -> &Signal {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eval(&self, x: &Signal) -> Result<f64> {
        x.ensure_same_shape(&self.y)?;
        let r = self.blur.apply(x)?.sub(&self.y);
        Ok(r.norm_sq() / (2.0 * self.lambda))
    }

    /// `∇g(x) = (1/λ) Aᵀ(A x − y)`.
    pub fn grad(&self, x: &Signal) -> Result<Signal> {
        x.ensure_same_shape(&self.y)?;
        let r = self.blur.apply(x)?.sub(&self.y);
        Ok(self.blur.adjoint(&r)?.scale(1.0 / self.lambda))
    }

    /// Lipschitz constant of `∇g`: `max |K̂|² / λ`.
    pub fn grad_lipschitz(&self) -> f64 {
        self.blur.max_gain().powi(2) / self.lambda
    }
}

impl Prox for DataFidelity {
    fn prox(&self, v: &Signal, gamma: f64) -> Result<Signal> {
        prox_quadratic_fft(self, gamma, v)
    }
}

/// Exact minimiser of `½‖x − v‖² + γ g(x)`, solved per frequency:
/// `x̂ = (γ conj(K̂) ŷ + λ v̂) / (γ |K̂|² + λ)`.
pub fn prox_quadratic_fft(df: &DataFidelity, gamma: f64, v: &Signal) -> Result<Signal> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid("gamma", format!("must be > 0, got {gamma}")));
    }
    v.ensure_same_shape(&df.y)?;
    let blur = &df.blur;
    let fft = blur.fft();
    let lambda = df.lambda;
    let (_, _, c) = v.shape().hwc();
    let mut out = Vec::with_capacity(v.len());
    for ch in 0..c {
        let vs = fft.forward_real(v.channel(ch));
        let ys = fft.forward_real(df.y.channel(ch));
        let xs = vs
            .iter()
            .zip(&ys)
            .zip(blur.transfer())
            .map(|((vh, yh), k)| (k.conj() * yh * gamma + vh * lambda) / (gamma * k.norm_sqr() + lambda))
            .collect();
        out.extend(fft.inverse_real(xs));
    }
    Ok(Signal::from_raw(out, v.shape()))
}

/// `∇g` of the data term.
pub fn data_fidelity_grad(df: &DataFidelity, x: &Signal) -> Result<Signal> {
    df.grad(x)
}

/// Uniform grid `lo, lo + step, …, hi` (`n` points) on every axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(invalid("grid", "needs at least 3 points per dimension"));
        }
        if !(hi > lo) {
            return Err(invalid("grid", format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Grid { lo, hi, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step()
    }
}

/// A regularizer tabulated on a grid (`d ≤ 2`), reusable across many prox
/// queries.
#[derive(Debug, Clone)]
pub struct GridOracle {
    grid: Grid,
    dim: usize,
    /// Lexicographic order: index `i` (1-D) or `i * n + j` (2-D).
    values: Vec<f64>,
}

impl GridOracle {
    pub fn new(h_eval: impl Fn(&[f64]) -> f64, dim: usize, grid: Grid) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(invalid("dim", format!("grid oracle supports d ≤ 2, got {dim}")));
        }
        let n = grid.n;
        let values = match dim {
            1 => (0..n).map(|i| h_eval(&[grid.point(i)])).collect(),
            _ => (0..n * n)
                .map(|k| h_eval(&[grid.point(k / n), grid.point(k % n)]))
                .collect(),
        };
        Ok(GridOracle { grid, dim, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    fn point(&self, k: usize) -> Vec<f64> {
        match self.dim {
            1 => vec![self.grid.point(k)],
            _ => vec![self.grid.point(k / self.grid.n), self.grid.point(k % self.grid.n)],
        }
    }

    /// Objective `½‖x_k − v‖² + γ h(x_k)` at grid index `k`.
    pub fn objective(&self, k: usize, gamma: f64, v: &[f64]) -> f64 {
        let x = self.point(k);
        let d2: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * d2 + gamma * self.values[k]
    }

    /// Grid minimiser; ties go to the lexicographically smallest point.
    pub fn prox(&self, gamma: f64, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(PnpError::ShapeMismatch {
                expected: format!("dim {}", self.dim),
                got: format!("dim {}", v.len()),
            });
        }
        let mut best: Option<(usize, f64)> = None;
        for k in 0..self.values.len() {
            if !self.values[k].is_finite() {
                continue;
            }
            let obj = self.objective(k, gamma, v);
            if best.is_none_or(|(_, b)| obj < b) {
                best = Some((k, obj));
            }
        }
        best.map(|(k, _)| self.point(k)).ok_or(PnpError::InfiniteOnGrid)
    }
}

/// Brute-force `prox_{γh}(v)` over a grid, `d ≤ 2`.
pub fn prox_bruteforce(
    h_eval: impl Fn(&[f64]) -> f64,
    gamma: f64,
    v: &[f64],
    grid: Grid,
) -> Result<Vec<f64>> {
    GridOracle::new(h_eval, v.len(), grid)?.prox(gamma, v)
}
