use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    Dimension {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("target mask is empty")]
    EmptyTarget,

    /// The neighborhood around a target has zero spread, so SCR is undefined.
    #[error("degenerate background (sigma_c = 0): mu_t = {mu_t}, mu_c = {mu_c}")]
    DegenerateBackground { mu_t: f64, mu_c: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("no mask found for image stem `{stem}`")]
    Pairing { stem: String },

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("checkpoint incompatible: {0}")]
    Version(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 1,
            Error::Divergence { .. } => 3,
            Error::Verification(_) => 4,
            _ => 2,
        }
    }
}

pub(crate) fn check_shape(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
