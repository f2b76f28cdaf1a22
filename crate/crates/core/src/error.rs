use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("semantic error in `{field}`: {message}")]
    Semantic { field: String, message: String },

    #[error("unknown {vocabulary} token `{token}`")]
    Vocabulary { vocabulary: &'static str, token: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn semantic(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Semantic {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
