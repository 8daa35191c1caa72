use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("region mask selects no grid nodes")]
    EmptyRegion,

    #[error("derivative order {requested} exceeds the supported maximum {max}")]
    UnsupportedOrder { requested: usize, max: usize },

    #[error("source is not finite at t = {t}")]
    InvalidSource { t: f64 },

    #[error("quadrature disc of radius {radius} around ({x}, {y}) leaves the grid domain")]
    DomainExceeded { x: f64, y: f64, radius: f64 },

    #[error("ghost derivative undefined at r = {r} (< r_min = {r_min})")]
    NearOrigin { r: f64, r_min: f64 },

    #[error("need at least {needed} time levels, got {got}")]
    InsufficientTimeLevels { needed: usize, got: usize },

    #[error("outside the domain of the identity: {0}")]
    OutOfDomain(String),

    #[error("trajectory covers [0, {covered}] but [0, {needed}] is required")]
    InsufficientCoverage { covered: f64, needed: f64 },

    #[error("slab starts at t = {slab_start} but the report is at t = {report_t}")]
    NotAdjacent { report_t: f64, slab_start: f64 },

    #[error("blow-up detected at t = {t} (sup norm {sup})")]
    BlowUp {
        t: f64,
        sup: f64,
        /// (t, max |u|, max |v|) at every completed step before the abort.
        history: Vec<(f64, f64, f64)>,
    },

    #[error("configuration rejected: {0}")]
    ConfigRejected(String),

    #[error("trajectories are not on the same time mesh")]
    TimeMeshMismatch,

    #[error("contraction ratio undefined: the two pairs coincide")]
    UndefinedRatio,

    #[error("series cannot be fitted: {0}")]
    Unfittable(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
