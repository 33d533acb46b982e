//! Monte Carlo laboratory for sojourn times of stationary Gaussian processes
//! above high levels over an independent random horizon.
//!
//! The crate is organised bottom-up:
//!
//! - [`covariance`] and [`scaling`]: correlation models, the level scaling
//!   `v(u)` and the normal survival function.
//! - [`gauss_sim`]: exact simulation of stationary Gaussian paths and of the
//!   drifted fBm field `W_α(s) = √2 B_α(s) − |s|^α`, plus the keyed RNG streams.
//! - [`sojourn`]: left-endpoint occupation times on grid paths.
//! - [`berman`]: Monte Carlo estimation of `B_α(x)`, the sojourn law `G_α`
//!   and the jump law `F_α`.
//! - [`heavy_tail`]: random horizons for the four tail regimes.
//! - [`asymptotics`]: closed-form and series predictions.
//! - [`experiments`]: empirical tails and their comparison with predictions.

pub mod asymptotics;
pub mod berman;
pub mod covariance;
pub mod error;
pub mod experiments;
pub mod gauss_sim;
pub mod heavy_tail;
pub mod numeric;
mod params;
pub mod scaling;
pub mod sojourn;

pub use error::{Error, Result};
