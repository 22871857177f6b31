//! Numerics for classical communication over thermal-loss bosonic channels
//! with and without pre-shared two-mode squeezed vacuum.
//!
//! All information quantities are in bits. Covariance matrices use the
//! q = a + a† convention in which the vacuum covariance is the identity.

pub mod capacities;
pub mod covert;
pub mod error;
pub mod estimation;
pub mod gaussian_core;
pub mod phase_holevo;
pub mod receivers;
pub mod special_fn;

pub use error::{Error, Result};
pub use gaussian_core::ChannelParams;
