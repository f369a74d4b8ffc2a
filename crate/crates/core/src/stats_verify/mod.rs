//! Goodness-of-fit tests, the brute-force enumeration oracle and the
//! scaling-limit experiment drivers.

pub mod enumerate;
pub mod experiments;
pub mod gof;

pub use enumerate::{enumerate_joint_law, oracle_max_difference};
pub use gof::{
    bonferroni_level, chi_square_independence, chi_square_table, chi_square_two_sample, ks_one_sample, GofReport,
};
