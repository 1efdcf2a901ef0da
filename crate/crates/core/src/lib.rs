//! Downlink simulation and resource allocation for cell-free massive MIMO
//! with beamformed downlink training.
//!
//! The crate is organized bottom-up: [`geometry`] draws networks and fading,
//! [`pilots`] assigns uplink/downlink pilot pairs, [`estimation`] models both
//! channel-estimation stages, [`rates`] evaluates achievable rates,
//! [`power`] allocates transmit power, [`user_centric`] restricts which APs
//! serve which UE, and [`harness`] runs experiments over many placements.

pub mod error;
pub mod estimation;
pub mod geometry;
pub mod harness;
pub mod pilots;
pub mod power;
pub mod rates;
pub mod rng;
pub mod user_centric;

pub use error::{Error, Result};
