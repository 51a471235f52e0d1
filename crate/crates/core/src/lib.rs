//! Front end, analyses and differentiation passes for a small Fortran-like
//! array language with OpenMP worksharing loops.
//!
//! The usual pipeline is [`parse`] → [`differentiate_tangent`] or
//! [`differentiate_adjoint`] → [`emit`]. Generated programs are ordinary
//! programs of the same language and can be parsed back.

pub mod adjoint;
pub mod analysis;
pub mod ast;
pub mod deriv;
pub mod emit;
pub mod error;
pub mod lexer;
pub mod names;
pub mod parser;
pub mod tangent;
pub mod validate;

pub use adjoint::{
    decide_adjoint_scoping, differentiate_adjoint, differentiate_adjoint_with, AdjointOptions,
    AdjointScope, AdjointScoping, ScopingSource,
};
pub use analysis::{build_cfg, classify_access, propagate_scoping, AccessPattern, AccessSummary};
pub use ast::*;
pub use emit::{emit, emit_expr};
pub use error::{ParseError, SemanticError, TransformError};
pub use parser::{parse, parse_expr};
pub use tangent::differentiate_tangent;
pub use validate::validate;
