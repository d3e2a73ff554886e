//! Certification toolkit for pseudo-label self-training.
//!
//! * [`bounds`]: closed-form risk bounds, the bound map and sample complexity.
//! * [`datagen`]: Gaussian-mixture data and label corruption.
//! * [`learners`]: learner/model traits, a name registry and three learners.
//! * [`engine`]: the self-training loops, producing per-iteration trajectories.
//! * [`harness`]: statistical campaigns built on the above.
//! * [`cli`]: configuration schema and command implementations.

pub mod bounds;
pub mod cli;
pub mod datagen;
pub mod engine;
pub mod harness;
pub mod learners;
pub mod seed;
