//! Decentralized multi-agent RL workbench.
//!
//! A grid-warehouse simulator where two agents deliver requested shelves and
//! return them home, actor-critic agents with a recurrent policy and learned
//! binary messages, and a communication module that predicts the next
//! observation, encodes the prediction error ("unexpectedness") with an
//! autoencoder, and broadcasts the encoding alongside the reward-driven
//! message bits. A config-driven harness trains on the base layout and
//! measures few-shot transfer to shifted layouts.

pub mod agent;
pub mod comm;
pub mod env;
pub mod harness;
pub mod mini_env;
pub mod nn;
pub mod rng;
pub mod uem;
pub mod verify;
