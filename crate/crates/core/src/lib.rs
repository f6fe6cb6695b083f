//! Gaussian simulation of the four-mode cluster and GHZ states produced by
//! interfering squeezed beams on balanced beam splitters, together with the
//! correlation-variance analysis used to certify their full inseparability.

pub mod calibration;
pub mod criteria;
pub mod error;
pub mod family;
pub mod gaussian;
pub mod homodyne;
pub mod network;

pub use error::{Error, Result};
pub use family::Family;
