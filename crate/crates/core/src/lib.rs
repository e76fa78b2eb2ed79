//! Frequency-subband allocation for user-centric cell-free massive MIMO.
//!
//! The crate is organised bottom-up:
//!
//! - [`chanmodel`] synthesises deployments and frequency-selective channel
//!   frequency responses (tapped delay line, UMi path loss, shadowing).
//! - [`clustering`] picks each UE's serving APs and applies the induced
//!   block-diagonal selectors.
//! - [`phy`] computes zero-forcing precoders, SINR and spectral efficiency for
//!   a candidate [`Assignment`].
//! - [`objective`] scores assignments (total SE, Gini index, minimum Gram
//!   eigenvalue) and checks the power/QoS/assignment constraints.
//! - [`nn`] is a small dense network toolkit with exact backpropagation.
//! - [`optim`] holds the Aquila Optimizer, the DDPG agent, the hybrid of the
//!   two, and a random hyperparameter search.

pub mod chanmodel;
pub mod clustering;
mod error;
pub mod nn;
pub mod objective;
pub mod optim;
pub mod phy;
pub mod rng;

pub use chanmodel::{ChannelTensor, Deployment, DeploymentConfig, FadingParams};
pub use clustering::ClusterMap;
pub use error::{Error, Result};
pub use objective::{Evaluator, ObjectiveReport, ObjectiveWeights};
pub use phy::{Assignment, PrecodeResult};

pub use num_complex::Complex64 as C64;
