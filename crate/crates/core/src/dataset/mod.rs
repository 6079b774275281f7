//! Tabular microdata: loading, standardization and the empirical joint
//! distribution of the quasi-identifiers.

mod joint;
mod standardize;
mod table;

pub use joint::{build_empirical_joint, ConditionalPmf, EmpiricalJoint};
pub use standardize::{standardize, Standardizer};
pub use table::{canonical_value, load_table, load_table_from_reader, Column, ColumnKind, DataTable, Schema};

/// Probability `num / den` as used by every CDF in the crate.
///
/// Forward and inverse transforms must agree bit-for-bit on bracket
/// endpoints, so all of them go through this one expression.
#[inline]
pub(crate) fn ratio(num: u64, den: u64) -> f64 {
    num as f64 / den as f64
}
