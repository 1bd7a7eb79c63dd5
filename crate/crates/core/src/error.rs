use thiserror::Error;

/// Errors surfaced by the library. Variants carry enough context to name the
/// offending stage or quantity without the caller re-deriving it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("particle count must be at least 3, got {0}")]
    ParticleCountTooSmall(u32),

    #[error("irrep-2 sector requires N >= 4, got {0}")]
    TwoSectorUnavailable(u32),

    #[error("particle label {label} out of range 1..={n}")]
    LabelOutOfRange { label: u32, n: u32 },

    #[error("pair index requires two distinct labels, got ({0}, {1})")]
    DegeneratePair(u32, u32),

    #[error("flat offset {offset} out of range for {coords} internal coordinates")]
    OffsetOutOfRange { offset: usize, coords: usize },

    #[error("permutation image {0:?} is not a bijection on 1..={1}")]
    InvalidPermutation(Vec<u32>, u32),

    #[error("slot arrangement {0} does not match any tensor block")]
    UnknownBlock(String),

    #[error("graph {graph} is not a member of the {context} catalog")]
    GraphNotInCatalog { graph: String, context: String },

    #[error("coupling key {key} is not realized for N = {n}")]
    CouplingUnavailable { key: String, n: u32 },

    #[error("coupling tensor for key {key} vanishes identically at N = {n}; no scale can be extracted")]
    CouplingVanishes { key: String, n: u32 },

    #[error("probe positions for key {key} give a singular extraction system at N = {n}")]
    SingularExtraction { key: String, n: u32 },

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },

    #[error("unstable configuration: sector {sector} has lambda = {lambda} < 0")]
    UnstableConfiguration { sector: String, lambda: f64 },

    #[error("sector {sector}: product matrix is not of symmetric-times-metric form (asymmetry {residual:.3e})")]
    IncompatibleSectorInput { sector: String, residual: f64 },

    #[error("minimization failed to converge after {iterations} iterations (residual {residual:.3e})")]
    MinimizationDiverged { iterations: usize, residual: f64 },

    #[error("stationary point at (r, gamma) = ({r}, {gamma}) is not a minimum (hessian eigenvalues {ev0:.3e}, {ev1:.3e})")]
    SaddlePoint { r: f64, gamma: f64, ev0: f64, ev1: f64 },

    #[error("representative tuples of graph {graph} disagree: {first} vs {second}; extraction is not label-symmetric")]
    TupleMismatch { graph: String, first: f64, second: f64 },

    #[error("{0}")]
    InputError(String),
}

pub type Result<T> = std::result::Result<T, Error>;
