// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod binio;
pub mod data;
pub mod error;
pub mod experiment;
pub mod inference;
pub mod models;
pub mod numkit;
pub mod oracle;
pub mod priors;
