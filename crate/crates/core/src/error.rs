use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("index {index} out of range for `{field}` (len {len})")]
    IndexOutOfRange {
        field: &'static str,
        index: usize,
        len: usize,
    },

    #[error("non-finite {what} at node {node}{}", path.map(|p| format!(" on path {p}")).unwrap_or_default())]
    NonFinite {
        what: &'static str,
        node: usize,
        path: Option<usize>,
    },

    #[error("singular tangent flow on path {path} at node {node} (condition number {cond:.3e})")]
    SingularFlow { path: usize, node: usize, cond: f64 },

    #[error("coefficient set has no analytic derivatives; the variational solver needs them")]
    MissingDerivatives,

    #[error("explicit scheme violates CFL: dt = {dt:.3e} but dt <= {required_dt:.3e} is required")]
    Cfl { dt: f64, required_dt: f64 },

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("malformed binary file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
