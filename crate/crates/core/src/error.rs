use std::path::PathBuf;

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least {required} thickness samples, got {got}")]
    TooFewSamples { required: usize, got: usize },

    #[error("sample {index} at ({x:.4}, {y:.4}) m lies outside the boundary")]
    SampleOutsideBoundary { index: usize, x: f64, y: f64 },

    #[error("degenerate boundary: {0}")]
    DegenerateBoundary(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("path `{path}` leaves the soundboard mask at node ({i}, {j})")]
    PathOutsideMask { path: String, i: usize, j: usize },

    #[error("station {bridge} key {key} is {distance:.4} m from its bridge (tolerance {tolerance:.4} m)")]
    StationOffBridge {
        bridge: String,
        key: u32,
        distance: f64,
        tolerance: f64,
    },

    #[error("layout schema violation: {0}")]
    Schema(String),

    #[error("non-physical material: {0}")]
    NonPhysicalMaterial(String),

    #[error(
        "unstable configuration: stability number {number:.4} at node ({i}, {j}) exceeds 1 (dt = {dt:e} s)"
    )]
    Unstable {
        number: f64,
        i: usize,
        j: usize,
        dt: f64,
    },

    #[error("simulation diverged at step {step}, node {node}")]
    Diverged { step: usize, node: usize },

    #[error("decay curve never reaches {level_db} dB")]
    InsufficientDecay { level_db: f64 },

    #[error("signal has no energy; spectral centroid is undefined")]
    UndefinedCentroid,

    #[error("calibration interval does not bracket target T60 {target:.4} s (range {low:.4}..{high:.4} s)")]
    NonBracketing { target: f64, low: f64, high: f64 },

    #[error("station sets are disjoint")]
    DisjointStations,

    #[error("load case toggles `{0}` but the layout has no such stiffener")]
    AbsentStiffener(String),

    #[error("static solve did not converge within {steps} steps (residual ratio {ratio:e})")]
    NoConvergence { steps: usize, ratio: f64 },

    #[error("region is empty")]
    EmptyRegion,

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("toml error in {path}: {message}")]
    Toml { path: PathBuf, message: String },

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Strips context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
