use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {value} outside domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("knot {knot} would reach multiplicity {multiplicity} > degree {degree}")]
    MultiplicityOverflow {
        knot: f64,
        multiplicity: usize,
        degree: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular Jacobian (det = {det:e}) at parametric point {point:?}")]
    SingularJacobian { det: f64, point: Vec<f64> },

    #[error("Newton inversion did not converge after {iterations} iterations (best residual {residual:e})")]
    InversionFailed { iterations: usize, residual: f64 },

    #[error("point {point:?} lies outside the patch image (residual {residual:e})")]
    OutsideImage { point: Vec<f64>, residual: f64 },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("query point {index} lies outside the sampled lattice hull")]
    OutsideHull { index: usize },

    #[error("trace failed at point {index}: {source}")]
    Trace {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("subdomain {id}: {source}")]
    Subdomain {
        id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_subdomain(self, id: usize) -> Self {
        match self {
            e @ Error::Subdomain { .. } => e,
            e => Error::Subdomain {
                id,
                source: Box::new(e),
            },
        }
    }
}
