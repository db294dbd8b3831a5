//! Detection and estimation of low-rank signals buried in additive noise,
//! using the full spectrum of the data matrix rather than only its leading
//! components.
//!
//! When the noise spectrum occupies a single interval, the familiar picture
//! holds: a strong enough signal produces a separated top eigen/singular
//! value and the principal vectors carry the signal. When the noise spectrum
//! splits into several bulks, a signal can instead surface as a *middle*
//! component inside an interior spectral gap, sometimes while the principal
//! component stays pinned to the bulk edge and carries nothing. This crate
//! provides:
//!
//! - spectral measures and multi-bulk support detection ([`measure`]),
//! - the Cauchy/phi/D transform calculus with inversion and edge limits
//!   ([`transform`]),
//! - regime classification, outlier location and overlap prediction for both
//!   symmetric and rectangular models, plus the exact finite-n identities
//!   behind them ([`predict`]),
//! - a data-facing detector/estimator that scans every bulk edge, not just
//!   the top one ([`detect`]),
//! - seeded noise/signal ensembles and a reproducible Monte Carlo harness
//!   ([`sim`]),
//! - matrix file I/O and static SVG plotting used by the `spectral-inform`
//!   CLI ([`matio`], [`plot`], [`figures`]).

pub mod detect;
pub mod figures;
pub mod linalg;
pub mod matio;
pub mod measure;
pub mod plot;
pub mod predict;
pub mod seed;
pub mod sim;
pub mod transform;

pub use detect::{DetectConfig, DetectionReport, NullModel, SignalEstimate};
pub use measure::{SpectralMeasure, SupportConfig, SupportProfile};
pub use predict::{Geometry, OutlierPrediction, Regime, SignalModel};
pub use sim::{ExperimentSpec, NoiseKind, NoiseSpec};
pub use transform::AspectRatio;

/// Descending singular values of a matrix.
pub fn spectrum_of(a: &ndarray::Array2<f64>) -> Result<Vec<f64>> {
    linalg::singular_values(a)
}

/// Descending eigenvalues of a symmetric matrix.
pub fn eigen_spectrum_of(a: &ndarray::Array2<f64>) -> Result<Vec<f64>> {
    Ok(linalg::eigh_desc(a)?.0)
}

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty sample list")]
    EmptySamples,

    #[error("negative weight {0}")]
    NegativeWeight(f64),

    #[error("weight list length {got} does not match {expected} values")]
    WeightLength { expected: usize, got: usize },

    #[error("measure has non-positive total mass {0}")]
    DegenerateMass(f64),

    #[error("support detection needs at least {need} atoms, got {got}")]
    TooFewAtoms { need: usize, got: usize },

    #[error("cluster with {got} atoms is below the configured minimum {min}")]
    ClusterTooSmall { min: usize, got: usize },

    #[error("invalid density piece [{lo}, {hi}]")]
    BadPiece { lo: f64, hi: f64 },

    #[error("aspect ratio {0} outside (0, 1]")]
    BadAspectRatio(f64),

    #[error("aspect ratio required for the D-transform")]
    MissingAspectRatio,

    #[error("evaluation point {z} lies in the support near [{lo}, {hi}]")]
    InsideSupport { z: f64, lo: f64, hi: f64 },

    #[error(
        "target {y} is outside the attainable range ({at_hi:e}, {at_lo:e}) on the gap ({lo}, {hi})"
    )]
    Regime {
        y: f64,
        /// Transform value just above the lower gap endpoint.
        at_lo: f64,
        /// Transform value just below the upper gap endpoint (0 for an
        /// unbounded gap).
        at_hi: f64,
        lo: f64,
        hi: f64,
    },

    #[error("root finding did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("signal strengths must be positive and sorted descending")]
    BadThetas,

    #[error("operation requires {expected} geometry")]
    GeometryMismatch { expected: &'static str },

    #[error("planted vectors are not orthonormal: {0}")]
    NotOrthonormal(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("signal rank {r} too large for {n}x{m}")]
    RankTooLarge { r: usize, n: usize, m: usize },

    #[error("matrix too small: need n >= {need}, got {got}")]
    MatrixTooSmall { need: usize, got: usize },

    #[error("calibration needs at least {need} draws for alpha = {alpha}, got {got}")]
    InsufficientCalibration { need: usize, got: usize, alpha: f64 },

    #[error("invalid noise spec: {0}")]
    BadNoiseSpec(String),

    #[error("experiment too large: n*m*trials = {0} exceeds the resource guard")]
    ResourceGuard(u128),

    #[error("linear algebra backend failure: {0}")]
    Backend(String),

    #[error("{path}: {msg}")]
    FileFormat { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
