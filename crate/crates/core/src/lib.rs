//! High-dimensional round-robin differential-phase-shift QKD.
//!
//! * [`math`]: ζ, d-ary entropy and exact binomials.
//! * [`bounds`]: Eve's information bound, key rates and error thresholds.
//! * [`oracle`]: explicit collective attacks, their exact Holevo information
//!   and induced error, checked against [`bounds`].
//! * [`sim`]: Monte Carlo simulation of honest protocol rounds.
//! * [`channel`]: lossy channel and detector model, rate-vs-loss curves.

pub mod bounds;
pub mod channel;
pub mod csv;
pub mod error;
pub mod math;
pub mod oracle;
pub mod sim;

pub use error::{Error, Result};
