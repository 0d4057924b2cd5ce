//! Gradient codes for adversarial stragglers.
//!
//! The crate builds binary encoding matrices (fractional repetition codes,
//! cyclic BIBD incidence matrices, sampled probabilistic BIBDs and Kronecker
//! products of those), decodes partial gradient sums by least squares, and
//! measures the normalized worst-case squared error against the closed-form
//! formulas and bounds in [`bounds`].

pub mod bounds;
pub mod cli;
pub mod codes;
pub mod decoding;
pub mod error;
pub mod exact;
pub mod probbibd;
pub mod sim;
pub mod tol;
pub mod worstcase;

pub use codes::{CodeDescriptor, CodeParams, EncodingMatrix};
pub use decoding::{DecodingVector, StragglerScenario};
pub use error::{Error, Result};
pub use tol::{Caps, Tolerances};
pub use worstcase::WorstCaseResult;
