//! Minimal differentiable-computation core: dense f64 tensors, a reverse-mode
//! tape, linear and GRU layers, sampling heads, Adam with soft target
//! updates, a finite-difference gradient checker, and a bit-exact checkpoint
//! container.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod sample;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_FD_STEP};
pub use params::{OptimizerConfig, ParameterSet};
pub use sample::{sample_bernoulli, sample_categorical, BernoulliDraw, CategoricalDraw};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
