//! Indifference fees and optimal hedging strategies for brokers who sell
//! execution contracts (linear, collar, TWAP) while trading under linear
//! permanent and temporary market impact with exponential utility.
//!
//! The crate has four layers:
//!
//! - [`market`]: parameters, contracts, terminal conditions and the grid.
//! - [`closed_form`]: Riccati-based fees and controls for linear contracts at `μ = r = 0`.
//! - [`hjb`]: the finite-difference solver, including the regulatory and TWAP variants.
//! - [`sim`]: Monte-Carlo evaluation of the solved strategies.

pub mod closed_form;
pub mod error;
pub mod hjb;
pub mod market;
pub mod sim;
pub mod surface_io;
pub mod tridiag;

pub use error::{Error, Result};
pub use market::{ContractFamily, ContractSpec, GridSpec, MarketParams};
