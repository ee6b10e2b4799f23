//! Certified robustness of offline reinforcement learning against data
//! poisoning, obtained from differentially-private training.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: gridworld environments, rollouts, datasets and a value-iteration
//!   oracle.
//! - [`train`]: linear Q-function models trained with the sampled Gaussian
//!   mechanism (transition-level privacy) or DP federated averaging
//!   (trajectory-level privacy), and ensembles of independently trained
//!   instances.
//! - [`accountant`]: Rényi-DP accounting for the sampled Gaussian mechanism,
//!   group privacy and conversion to approximate DP, packaged as the function
//!   families `K` used by both certificates.
//! - [`cert`]: the policy-level certificate (lower bound on expected return)
//!   and the action-level certificate (maximum tolerable poisoning radius per
//!   visited state).
//! - [`attacks`]: reward and transition poisoning used to validate
//!   certificates empirically.
//! - [`harness`]: experiment configuration, pipelines, CSV reports and SVG
//!   plots backing the `dpcert` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod attacks;
pub mod cert;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
