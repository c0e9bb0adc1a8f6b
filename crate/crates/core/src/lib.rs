//! Bayesian inference for beta autoregressive moving-average (βARMA) models.
//!
//! The crate covers the observation model ([`model`]), the posterior and its
//! exact gradient ([`posterior`]), a NUTS sampler ([`sampler`]), posterior
//! summaries and characteristic-root diagnostics ([`analysis`]), predictive
//! forecasting ([`forecast`]), stepping-stone marginal likelihoods
//! ([`select`]) and data simulation ([`simulate`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod dual;
pub mod error;
pub mod forecast;
pub mod model;
pub mod posterior;
pub mod sampler;
pub mod select;
pub mod simulate;
pub mod special;

pub use error::{BarmaError, Result};
pub use model::{CovariateMatrix, FilterOutput, Link, ModelOrder, ObservationSeries, ParameterVector};
pub use posterior::{AlphaPrior, BarmaPosterior, ModelSpec, PriorSpec};
pub use sampler::{ChainDraws, SamplerConfig};
pub use simulate::RngStream;
