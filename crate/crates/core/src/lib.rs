//! Simulation and optimization toolkit for RIS-assisted OAM secure
//! communications.
//!
//! The crate builds the line-of-sight channel model between a transmitting UCA
//! (Alice), a legitimate receiving UCA (Bob), an eavesdropping UCA (Eve) and a
//! passive RIS; evaluates secrecy rates under OAM index modulation with
//! artificial noise; and maximizes the secrecy rate by alternating a
//! minorize-maximize power allocation with Riemannian conjugate gradient on the
//! complex circle manifold.

pub mod channel;
pub mod checks;
pub mod config;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod metrics;
pub mod montecarlo;
pub mod oam;
pub mod pipeline;
pub mod power;
pub mod ris;

pub use error::{Error, Result};
