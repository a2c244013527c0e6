//! Complementary-filter dynamics learning.
//!
//! Signals are split into a high and a low frequency band by a designed IIR
//! filter pair. Each band is then modelled on its own time scale by a
//! recurrent network, or the learned high band is fused with a physics
//! simulator's low band through the complementary recurrence.

pub mod error;
pub mod experiment;
pub mod filters;
pub mod learn;
pub mod neural;
pub mod resample;
pub mod signal;
pub mod spectrum;
pub mod systems;

pub use error::{Error, Result};
pub use signal::Signal;
