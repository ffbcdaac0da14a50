//! Quality instruments: the brute-force join oracle, two-sample KS, and the
//! generative F-score with Wilson intervals.

mod fscore;
mod ks;
mod oracle;

pub use fscore::{
    generative_fscore, join_fscore, overlap, sample_fscore, wilson_interval, Confusion,
    GenerativeConfusion,
};
pub use ks::{c_alpha, critical_value, ks_two_sample, CdfStep, KsReport};
pub use oracle::{oracle_join, OracleJoin};
