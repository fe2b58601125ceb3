use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("point at infinity after alignment")]
    PointAtInfinity,
    #[error("degenerate: coincident centers")]
    CoincidentCenters,
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("rank-deficient sample (sigma ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },
    #[error("extraction singular")]
    ExtractionSingular,
    #[error("interpolation ill-conditioned (condition {condition:.3e})")]
    InterpolationIllConditioned { condition: f64 },
    #[error("inexact quotient (relative remainder {relative:.3e})")]
    InexactQuotient { relative: f64 },
    #[error("common factor / degenerate resultant")]
    ResultantDegenerate,
    #[error("slice rank collapse in T{slice}")]
    SliceRankCollapse { slice: usize },
    #[error("epipole indeterminate")]
    EpipoleIndeterminate,
    #[error("enforcement degenerate")]
    EnforcementDegenerate,
    #[error("infeasible scene: {0}")]
    InfeasibleScene(String),
    #[error("gimbal-adjacent pose (pitch {pitch:.3} rad, roll {roll:.3} rad)")]
    GimbalLock { pitch: f64, roll: f64 },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("not enough triplets: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no model found: {0}")]
    NoModel(String),
    #[error("unknown solver '{0}'")]
    UnknownSolver(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
