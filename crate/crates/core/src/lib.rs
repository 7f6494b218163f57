//! recilab: a gridworld social-dilemma laboratory where selfish "innovators"
//! co-train with "imitators" that earn intrinsic reward for matching the
//! innovators' niceness, online, within each episode.

pub mod checkpoint;
pub mod env;
pub mod error;
pub mod grid;
pub mod learner;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod reciprocity;
pub mod rng;

pub use error::{Error, Result};
