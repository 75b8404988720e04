//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not symmetric (relative deviation {deviation:.3e})")]
    NotSymmetric { deviation: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("singular operator: {0}")]
    Singular(String),

    #[error("{what} is rank deficient: expected {expected}, got {actual}")]
    RankDeficient {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("unstable closed loop (spectral abscissa {abscissa:.3e})")]
    UnstableClosedLoop { abscissa: f64 },

    #[error("policy not stabilizing (spectral abscissa {abscissa:.3e})")]
    PolicyNotStabilizing { abscissa: f64 },

    #[error("data not informative (CL): rank {actual} < {expected}")]
    DataNotInformativeCl { expected: usize, actual: usize },

    #[error("data not informative (IRL): rank {actual} < {expected}")]
    DataNotInformativeIrl { expected: usize, actual: usize },

    #[error("trajectory blow-up: state norm {norm:.3e} exceeded the cap")]
    TrajectoryBlowUp { norm: f64 },

    #[error("iterate blow-up at step {step}: norm {norm:.3e}")]
    IterateBlowUp { step: usize, norm: f64 },

    #[error("left the stabilizing set during integration at t = {t:.6}; try a smaller step")]
    StabilizingSetExit { t: f64 },

    #[error("CARE ill-posed: Hamiltonian has eigenvalues on the imaginary axis")]
    CareIllPosed,

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("degenerate optimizer: {0}")]
    DegenerateOptimizer(String),

    #[error("conic solve failed: {0}")]
    ConicFailure(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
