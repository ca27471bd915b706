//! Continuous-time recurrent network dynamics
//!
//! ```text
//! h'(t) = −λ h(t) + σ(w h(t) + b + w_in x(t))
//! ```
//!
//! together with three transforms of the model:
//!
//! - temporal rescaling, [`TransformStep::Rescale`]
//! - forward-Euler discretization, [`TransformStep::Discretize`]
//! - linearization of the activation, [`TransformStep::Linearize`]
//!
//! The transforms compose, and [`verify`] checks which orderings agree at the
//! parameter level and along simulated trajectories.

// Test oracles keep every digit of their high-precision reference values.
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod analysis;
pub mod io;
pub mod model;
pub mod simulate;
pub mod transforms;
pub mod verify;

pub use model::{Activation, Form, InputSignal, Model, ModelError, ModelParams, SignalKind, TimeDomain};
pub use simulate::{TimeGrid, Trajectory};
pub use transforms::TransformStep;
