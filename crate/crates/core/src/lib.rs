//! Simulator, scoring, baseline agents and a navigator-pointer model for
//! remote embodied referring-expression tasks: an agent walks a viewpoint
//! graph following a short instruction and must then point at the object it
//! was asked about.

pub mod agents;
pub mod env;
pub mod episode;
pub mod metrics;
pub mod navptr;
pub mod neural;
pub mod error;
pub mod geometry;
pub mod par;
pub mod seed;
pub mod synth;
pub mod vocab;

pub use env::{Environment, Task};
pub use error::{EpisodeError, Error, Result};
