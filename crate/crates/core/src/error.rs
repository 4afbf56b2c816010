use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("CFL condition violated: {ratio_name} = {value:.4} exceeds limit {limit:.4}")]
    Cfl {
        ratio_name: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("tridiagonal solve failed in column {column}: zero or non-finite pivot")]
    SingularSolve { column: usize },

    #[error("potential is not confining on the grid: {0}")]
    NotConfining(String),

    #[error("mass mismatch: {lhs} vs {rhs}")]
    MassMismatch { lhs: f64, rhs: f64 },

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error(
        "fixed point diverging at iteration {iteration} (contraction ratio {ratio:.3}); \
         try a smaller mass or stronger damping"
    )]
    Divergence { iteration: usize, ratio: f64 },

    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("malformed grid file {0}: {1}")]
    Format(PathBuf, String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
