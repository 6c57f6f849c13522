//! Dense vector/matrix arithmetic, nonlinearities, RMSProp, learning-rate
//! schedules, seeded RNG helpers, and finite-difference gradient checking.
//!
//! Everything here is pure over value types; instances are immutable after
//! construction and safe to share across threads.

mod activations;
mod gradcheck;
mod linalg;
mod optim;
mod rng;

pub use activations::{
    sigmoid, sigmoid_scalar, softmax, softmax_in_place, softplus, softplus_scalar, tanh,
};
pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use linalg::{snap_to_f32, BatchMat, Matrix};
pub use optim::{rmsprop_step, LrSchedule, RmsPropState};
pub use rng::{derive_seed, seeded_rng, Rng64};
