use thiserror::Error;

/// Errors produced by mesh construction, assembly, reduction and solves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("mesh file line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("cell {cell} is inverted: J = {jacobian:e} at reference vertex {vertex}")]
    InvertedCell { cell: usize, vertex: usize, jacobian: f64 },

    #[error("unsupported quadrature order {order} on {cell}")]
    UnsupportedOrder { cell: &'static str, order: usize },

    #[error("{block} block at vertex {vertex} is not symmetric positive definite")]
    SingularLocalBlock { vertex: usize, block: &'static str },

    #[error("rotation Schur block at vertex {vertex} is not positive ({value:e})")]
    SingularRotation { vertex: usize, value: f64 },

    #[error("conflicting essential conditions on {space} dof {dof}: {first} vs {second}")]
    ConflictingConstraint {
        space: &'static str,
        dof: usize,
        first: f64,
        second: f64,
    },

    #[error("inconsistent boundary data: {0}")]
    InconsistentData(String),

    #[error("krylov solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
