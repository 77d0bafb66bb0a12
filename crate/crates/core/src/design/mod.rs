//! Term specifications and design-matrix construction.

pub mod matrix;
pub mod spline;
pub mod terms;

pub use matrix::{build_design_matrix, Design, DesignMatrix};
pub use spline::{rcs_basis, rcs_row};
pub use terms::{format_terms, parse_terms, KnotSpec, Term};
