//! Employer learning about worker ability and what it implies for the
//! returns to schooling.
//!
//! The crate is organised around four layers:
//!
//! - [`model`]: closed forms for learning weights, posteriors, wages and the
//!   private/social return split.
//! - [`simulate`]: synthetic worker panels under hidden, transparent and
//!   partially transparent instruments, plus a binary-schooling
//!   potential-outcomes variant.
//! - [`estimate`]: per-experience Wald/OLS profiles, mixing fits for the
//!   speed of learning, and the identification extensions built on them.
//! - [`analysis`]: internal rate of return and the signaling share.

pub mod analysis;
pub mod error;
pub mod estimate;
pub mod kv;
pub mod model;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
