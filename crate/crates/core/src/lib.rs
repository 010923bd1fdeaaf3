//! Zero-inflated lognormal uplift modeling.
//!
//! Building blocks for ranking accounts by incremental revenue when outcomes
//! are mostly zero and heavy-tailed when positive:
//!
//! - [`distributions`]: the ZILN mixture (expected value, density, sampling)
//! - [`losses`]: focal propensity + lognormal regression + value-weighted
//!   pairwise ranking, with analytic gradients
//! - [`gated_net`]: a small treatment-gated network trained with hand-derived
//!   reverse-mode gradients
//! - [`forest`]: a bagged uplift forest split on treatment-effect
//!   heterogeneity with Bayesian-smoothed ZILN leaves
//! - [`metrics`]: uplift curves, AUUC, Qini, Lift@k, Kendall rank
//!   correlation, scoring latency
//! - [`datagen`]: a synthetic zero-inflated benchmark with exported
//!   ground-truth uplift
//! - [`cli`]: subcommands tying the above into reproducible runs

pub mod cli;
pub mod datagen;
pub mod distributions;
pub mod error;
pub mod forest;
pub mod gated_net;
pub mod losses;
pub mod metrics;
pub mod rng;

pub use error::{Error, Result};

/// Anything that scores a feature row with a predicted uplift.
pub trait UpliftScorer {
    fn predict_uplift_row(&self, x: &[f64]) -> f64;
}
