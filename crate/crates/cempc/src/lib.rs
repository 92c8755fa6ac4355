//! Learning-based sampling MPC with a barrier-certified safety filter, on a
//! simulated quadrotor in wind.
//!
//! The pieces, bottom up:
//!
//! - [`dynamics`]: quadrotor rigid-body model, RK4 integration and an
//!   Ornstein-Uhlenbeck wind process.
//! - [`igp`]: incremental Gaussian-process regression that learns the
//!   residual acceleration the nominal model misses, with constant-time
//!   add and replace updates.
//! - [`cem`]: cross-entropy-method trajectory optimization over the learned
//!   model.
//! - [`safety`]: control-barrier and control-Lyapunov constraints robustified
//!   by the learner's confidence bounds, enforced by a minimal-intervention
//!   QP.
//! - [`scenario`]: closed-loop experiments tying it all together, with step
//!   logs and metrics.
//! - [`cli`]: batch runner behind the `cempc` binary.
//!
//! The `examples/` directory demonstrates each capability in isolation;
//! start with `tracking_run`.

pub mod cem;
pub mod cli;
pub mod dynamics;
pub mod igp;
pub mod safety;
pub mod scenario;
