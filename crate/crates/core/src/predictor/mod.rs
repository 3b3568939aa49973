//! Score predictors: a logistic map over the mean NCC and a small vision
//! transformer over the STM image plus the NCC matrix.

mod logistic;
mod metrics;
pub mod vit;

pub use logistic::{fit_logistic, logistic_map, LogisticFit, LogisticParams};
pub use metrics::{evaluate, Evaluation};
