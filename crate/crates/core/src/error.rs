use alloc::string::String;

/// Every failure the kernels can report.
///
/// Each variant maps to a stable machine-readable code via [`Error::code`],
/// which the command line surfaces in its error records.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("probe sits on a non-smooth point: {0}")]
    NonSmoothPoint(String),
    #[error("part label {0} has no prompt mapping")]
    MissingMapping(u32),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("flood fill reached {reached} of {total} voxels; surface is not closed")]
    LeakDetected { reached: usize, total: usize },
    #[error("particle {particle} of object {object} lies outside the grid interior")]
    GridOverflow { object: u32, particle: usize },
    #[error("scene contains no particles")]
    EmptyScene,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("particle {particle} left the grid at t={time}")]
    ParticleEscape { particle: usize, time: f64 },
    #[error("{property} value {value} violates clamp [{min}, {max}]")]
    ClampViolation {
        property: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown target: {0}")]
    UnknownTarget(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "E_DOMAIN",
            Error::Shape(_) => "E_SHAPE",
            Error::InvalidConfig(_) => "E_CONFIG",
            Error::DegenerateInput(_) => "E_DEGENERATE_INPUT",
            Error::NonSmoothPoint(_) => "E_NON_SMOOTH",
            Error::MissingMapping(_) => "E_MISSING_MAPPING",
            Error::DegenerateGeometry(_) => "E_DEGENERATE_GEOMETRY",
            Error::LeakDetected { .. } => "E_LEAK",
            Error::GridOverflow { .. } => "E_GRID_OVERFLOW",
            Error::EmptyScene => "E_EMPTY_SCENE",
            Error::Numerical(_) => "E_NUMERICAL",
            Error::ParticleEscape { .. } => "E_PARTICLE_ESCAPE",
            Error::ClampViolation { .. } => "E_CLAMP",
            Error::Parse { .. } => "E_PARSE",
            Error::UnknownTarget(_) => "E_UNKNOWN_TARGET",
            Error::Context { source, .. } => source.code(),
        }
    }

    /// Wraps the error with a location such as `frame 3, substep 17`.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: alloc::boxed::Box::new(self),
        }
    }

    /// The innermost error, with any context layers stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
