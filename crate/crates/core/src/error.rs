use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Normalized contraction velocity reached the pole of the force-velocity curve.
    #[error("normalized fiber velocity {velocity} is outside the force-velocity domain (v < 1)")]
    VelocityDomain { velocity: f64 },

    #[error("fiber length {length} m is not positive")]
    NonPositiveFiberLength { length: f64 },

    #[error("simulation failed at step {step}: {source}")]
    Simulation {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid arm model: {0}")]
    InvalidModel(String),

    #[error("excitation grid mismatch: {0}")]
    GridMismatch(String),

    #[error("template library is empty")]
    EmptyLibrary,

    #[error("requested {requested} templates but the library holds {available}")]
    NotEnoughTemplates { requested: usize, available: usize },

    #[error("degenerate calibration geometry: {0}")]
    DegenerateGeometry(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("normal equations are rank deficient (ridge lambda = 0)")]
    RankDeficient,

    #[error("no calibration records to fit")]
    NoRecords,

    #[error("schema error at byte {offset}: {message}")]
    Schema { offset: usize, message: String },

    #[error(
        "arm model hash mismatch: library was generated for {expected}, current arm is {found}"
    )]
    HashMismatch { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Builds a schema error from a serde_json failure, translating its
    /// line/column position into a byte offset within `text`.
    pub(crate) fn schema(text: &str, err: &serde_json::Error) -> Self {
        Error::Schema {
            offset: byte_offset(text, err.line(), err.column()),
            message: err.to_string(),
        }
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column).min(text.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_from_line_and_column() {
        let text = "ab\ncde\nf";
        assert_eq!(byte_offset(text, 1, 2), 2);
        assert_eq!(byte_offset(text, 2, 1), 4);
        assert_eq!(byte_offset(text, 3, 1), 8);
        assert_eq!(byte_offset(text, 9, 9), text.len());
    }
}
