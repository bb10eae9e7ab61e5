//! Learned routine spaces for off-policy continuous control.
//!
//! An agent selects a *routine* (a vector in a learned space) instead of a
//! single action. A decoder turns the routine into a variable-length action
//! sequence, an encoder maps executed sequences back, and the critic is
//! trained on every prefix of each replayed window at once.

pub mod agents;
pub mod diff;
pub mod env;
pub mod error;
pub mod harness;
pub mod losses;
pub mod models;
pub mod replay;

pub use error::{Error, Result};
