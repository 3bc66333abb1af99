//! Latent model-based reinforcement learning with a single variational
//! objective, together with an exact tabular verifier for the bound that
//! objective comes from.
//!
//! The crate is organized around six subsystems:
//!
//! - [`diffmath`]: dense-tensor reverse-mode autodiff, Adam, gradient
//!   clipping, and Polyak target updates. Everything downstream runs on it.
//! - [`dists`]: diagonal Gaussians (reparameterized sampling, closed-form
//!   KL), categoricals, the truncated geometric horizon distribution, and
//!   Bernoulli cross-entropy.
//! - [`agent`]: the six networks (encoder, latent model, policy, reward
//!   head, Q head, classifier) plus targets, and the five training losses.
//! - [`experience`]: replay buffer with contiguous sequence sampling, and
//!   the built-in desk-scale environments.
//! - [`oracle`]: exact enumeration of the return bound and related
//!   identities on finite MDPs with categorical encoder/model/policy.
//! - [`harness`]: the training loop, evaluation, diagnostics, bias
//!   analysis, the verification sweep, and configuration.

pub mod agent;
pub mod diffmath;
pub mod dists;
pub mod experience;
pub mod harness;
pub mod oracle;

pub use agent::{AgentConfig, AgentState};
pub use diffmath::{Adam, DiffError, Gradients, Param, Tape, Tensor};
pub use experience::{EnvSpec, ReplayBuffer, SequenceBatch, Transition};
pub use harness::RunConfig;
pub use oracle::{TabularAlm, TabularMdp};
