use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A generator, modulus or coefficient returned NaN or an infinity.
    #[error("non-finite value {value} from {what} at t={t}, state={state:?}, z={z:?}")]
    Evaluation {
        what: &'static str,
        t: f64,
        state: Vec<f64>,
        z: Vec<f64>,
        value: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-convexity detected: {0}")]
    NonConvex(String),

    #[error("conjugate search diverged for q={q:?} (radius {radius:e}); the supremum looks infinite")]
    Unbounded { q: Vec<f64>, radius: f64 },

    #[error("rank-deficient regression basis at step {step}: {detail}")]
    Basis { step: usize, detail: String },

    #[error("Picard iteration did not converge: gap {gap:e} after {iterations} iterations")]
    PicardNonConvergence { gap: f64, iterations: usize },

    #[error("Picard iteration diverging: gap grew {streak} times in a row (last gap {gap:e})")]
    PicardDivergence { gap: f64, streak: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("degenerate weights: effective sample size {ess:.1} below {threshold:.1}")]
    DegenerateWeights { ess: f64, threshold: f64 },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn evaluation(what: &'static str, t: f64, state: &[f64], z: &[f64], value: f64) -> Self {
        Error::Evaluation {
            what,
            t,
            state: state.to_vec(),
            z: z.to_vec(),
            value,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
