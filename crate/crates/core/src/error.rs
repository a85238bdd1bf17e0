use thiserror::Error;

#[derive(Debug, Error)]
pub enum PnpError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("non-finite iterate at iteration {iteration} ({which})")]
    Diverged { iteration: usize, which: &'static str },

    #[error("covariance of component {component} is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { component: usize, min_eig: f64 },

    #[error("x not in denoiser image: {0}")]
    NotInImage(String),

    #[error("h infinite on grid")]
    InfiniteOnGrid,

    #[error("image of size {height}x{width} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall { height: usize, width: usize, window: usize },

    #[error("no sample landed in the denoiser image")]
    NoSampleInImage,

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PnpError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> PnpError {
    PnpError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
