use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("distributions or functions are defined on different grids")]
    GridMismatch,
    #[error("degenerate distribution: no node carries mass above {tol:e}")]
    DegenerateDistribution { tol: f64 },
    #[error("distribution puts mass {mass:e} on boundary node {node} where the information cost is steep")]
    BoundarySupport { node: usize, mass: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("duality certificate failed: {0}")]
    DualityGap(String),
    #[error("invalid shadow derivative: {0}")]
    InvalidShadowDerivative(String),
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
    #[error("invalid surgery: {0}")]
    InvalidSurgery(String),
    #[error("seller search failed: {0}")]
    SearchFailure(String),
    #[error("construction bug: {0}")]
    Construction(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user input rather than a failed certificate.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse(_) | Error::Io(_) | Error::GridMismatch | Error::Domain(_)
        )
    }
}
