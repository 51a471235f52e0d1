//! Naming of derivative variables, derived routines and generated
//! auxiliaries.

use crate::ast::Program;
use crate::error::TransformError;

/// Prefix reserved for variables introduced by the adjoint transform.
pub const AUX_PREFIX: &str = "ad_";

pub const TMP_ADJ: &str = "ad_tmpb";
pub const BRANCH: &str = "ad_branch";
pub const CHUNK_START: &str = "ad_chunkstart";
pub const CHUNK_END: &str = "ad_chunkend";
pub const NUM_CHUNKS: &str = "ad_numchunks";
pub const CHUNK_INDEX: &str = "ad_ichunk";
pub const LAST_ITER: &str = "ad_lastiter";
pub const ELEM_INDEX: &str = "ad_k";

pub fn tangent_name(v: &str) -> String {
    format!("{v}d")
}

pub fn adjoint_name(v: &str) -> String {
    format!("{v}b")
}

/// Thread-local stand-in for a `lastprivate` variable in the forward sweep.
pub fn lastprivate_copy(v: &str) -> String {
    format!("{AUX_PREFIX}lp_{v}")
}

pub fn tangent_routine(name: &str) -> String {
    format!("{name}_d")
}

pub fn adjoint_routine(name: &str) -> String {
    format!("{name}_b")
}

/// Rejects user names in the reserved namespace and derivative names that
/// would shadow an existing variable.
pub fn check_derivative_names(
    prog: &Program,
    derive: impl Fn(&str) -> String,
) -> Result<(), TransformError> {
    for d in prog.decls() {
        if d.name.starts_with(AUX_PREFIX) {
            return Err(TransformError::ReservedPrefix(d.name.clone()));
        }
    }
    for d in prog.decls().filter(|d| d.active) {
        let derived = derive(&d.name);
        if prog.decl(&derived).is_some() {
            return Err(TransformError::NameCollision {
                primal: d.name.clone(),
                derived,
            });
        }
    }
    Ok(())
}
