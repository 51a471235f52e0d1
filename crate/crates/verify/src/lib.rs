//! Verification harness for generated derivative programs.
//!
//! [`check_tangent`] compares tangents with central differences,
//! [`check_adjoint`] tests the dot-product identity and agreement with the
//! serial adjoint, and [`bench`] times the programs. The kernels live in
//! [`fixture`].

pub mod bench;
pub mod check;
pub mod fixture;
pub mod inspect;
pub mod values;

pub use bench::{bench, BenchRow};
pub use check::{check_adjoint, check_tangent, Check, Report};
pub use fixture::{Fixture, Size, Tolerance, Variant};
