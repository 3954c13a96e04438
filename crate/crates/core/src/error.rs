use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value in field `{field}` at node {node}")]
    NonFinite { field: String, node: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("not uniformly elliptic: smallest symmetric eigenvalue {lambda:.6e} at node {node}")]
    NotElliptic { lambda: f64, node: usize },

    #[error("no admissible boxes: {0}")]
    NoAdmissibleBoxes(String),

    #[error("kernel under-resolved: {0}")]
    KernelUnderResolved(String),

    #[error("not a graph map: h = {value:.6e} at node {node}")]
    NotAGraphMap { value: f64, node: usize },

    #[error("change of variable is not certified: eps = {eps:.6e} >= eps0 = {eps0:.6e}")]
    Uncertified { eps: f64, eps0: f64 },

    #[error("degenerate lower-right entry: min b = {0:.6e}")]
    DegenerateLowerRight(f64),

    #[error("pipeline infeasible at this resolution: no N <= {n_max} satisfies the stage bounds")]
    PipelineInfeasible { n_max: usize },

    #[error("stage {stage} failed: {reason}")]
    Stage { stage: usize, reason: String },

    #[error("linear solver did not converge: residual history {history:?}")]
    SolverDiverged { history: Vec<f64> },

    #[error("point outside solved region: ({y:.4}, {t:.4})")]
    OutsideRegion { y: f64, t: f64 },

    #[error("matrix-valued dilation rejected: the weight |Ht|/|t| is only cancelled by det(Jac) when H = h I")]
    MatrixDilation,

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("invalid input at `{key}`: {reason}")]
    InvalidInput { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 input validation, 3 mathematical precondition,
    /// 4 resolution or convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGrid(_)
            | Error::NonFinite { .. }
            | Error::Shape(_)
            | Error::UnknownFixture(_)
            | Error::InvalidInput { .. }
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::NotElliptic { .. }
            | Error::NotAGraphMap { .. }
            | Error::Uncertified { .. }
            | Error::DegenerateLowerRight(_)
            | Error::MatrixDilation
            | Error::OutsideRegion { .. }
            | Error::Stage { .. } => 3,
            Error::InsufficientResolution(_)
            | Error::NoAdmissibleBoxes(_)
            | Error::KernelUnderResolved(_)
            | Error::PipelineInfeasible { .. }
            | Error::SolverDiverged { .. } => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
