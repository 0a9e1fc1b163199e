//! Latent/revealed limit order book model.
//!
//! Latent (unobservable) liquidity diffuses and is converted into the
//! revealed (visible) book at a rate that decays with distance from the
//! price. The crate provides the stationary books (closed forms and a
//! finite-difference solver), a particle simulator of the full dynamics,
//! the stability map, metaorder impact experiments and calibration of the
//! model to order book snapshots.

pub mod analytic;
pub mod banded;
pub mod bvp;
pub mod calibration;
pub mod error;
pub mod exec;
pub mod grid;
pub mod impact;
pub mod model;
pub mod profile;
pub mod sim;
pub mod stability;

pub use error::{LobError, Result};
pub use model::{ConversionProfile, DerivedScales, ModelParams};
pub use profile::{BookProfile, Provenance};
