//! Error types shared by the front end and the transforms.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error(transparent)]
    Semantic(#[from] SemanticError),
}

impl ParseError {
    pub(crate) fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Self {
        ParseError::Syntax {
            line,
            col,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticError {
    #[error("undeclared variable `{0}`")]
    Undeclared(String),
    #[error("variable `{0}` declared more than once")]
    DuplicateDecl(String),
    #[error("parameter `{0}` has no declaration")]
    MissingParamDecl(String),
    #[error("`{0}` has an intent but is not a routine parameter")]
    IntentOnLocal(String),
    #[error("parameter `{0}` needs an intent")]
    MissingIntent(String),
    #[error("`{0}` is a reserved word")]
    ReservedName(String),
    #[error("variable `{0}` appears in more than one clause")]
    DuplicateClause(String),
    #[error("only sum reductions are supported, found `{0}`")]
    UnsupportedReduction(String),
    #[error("non-canonical loop over `{counter}`: {reason}")]
    NonCanonicalLoop { counter: String, reason: String },
    #[error("adjoint override on `{0}`, which is not shared in the primal loop")]
    OverrideNotShared(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("invalid array extent for `{name}`: {reason}")]
    BadExtent { name: String, reason: String },
    #[error("misplaced construct: {0}")]
    Misplaced(String),
    #[error("bad clause entry `{var}`: {reason}")]
    BadClause { var: String, reason: String },
}

/// Failure of a differentiation pass.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("derivative name `{derived}` for `{primal}` collides with an existing variable")]
    NameCollision { primal: String, derived: String },
    #[error("`{0}` uses the reserved `ad_` prefix")]
    ReservedPrefix(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("generated program failed validation: {0}")]
    Invalid(#[from] SemanticError),
}
