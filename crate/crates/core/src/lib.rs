//! Learning dynamics of OLS-pricing firms in a symmetric linear-demand
//! market, plus a discrete-choice logit extension.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cone;
pub mod error;
pub mod logit;
pub mod market;
pub mod moments;
pub mod ode;
pub mod optimize;
pub mod seeds;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use market::MarketParams;
pub use moments::MomentState;
