use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("combined support is empty")]
    EmptySupport,

    #[error("scale {scale} outside lattice window [{min}, {max}]")]
    ScaleOutOfRange { scale: i32, min: i32, max: i32 },

    #[error("intervals are not nested")]
    Incomparable,

    #[error("interval carries zero mass")]
    ZeroMass,

    #[error("function and operator are defined over different measures")]
    BaseMismatch,

    #[error("support escapes the root interval")]
    SupportEscapesRoot,

    #[error("lattices must differ for a two-lattice split")]
    LatticeMismatch,

    #[error("measures share an atom at {0}")]
    CommonAtom(f64),

    #[error("interval is not a node of the stopping tree")]
    NotANode,

    #[error("no interval with positive source mass")]
    NoPositiveInterval,

    #[error("function has zero norm")]
    ZeroNorm,

    #[error("degenerate interval [{0}, {0}]")]
    DegenerateInterval(f64),

    #[error("point must lie strictly inside the unit disc")]
    OutsideDisc,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
