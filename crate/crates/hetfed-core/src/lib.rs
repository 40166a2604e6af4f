//! Core toolkit for quantifying data heterogeneity between federated-learning
//! clients and for simulating federated training under controlled partitions.
//!
//! The crate has three layers:
//!
//! * subspace profiling — truncated-SVD signatures of classes, datasets, or
//!   clients ([`signature`]), principal angles between them ([`numerics`]),
//!   and agglomerative super-clustering of the resulting proximity matrices
//!   ([`clustering`]);
//! * partition generation — IID, label-skew, Dirichlet, super-cluster-aware,
//!   and mixed-dataset client splits ([`partition`]), plus alternative
//!   heterogeneity measures such as earth mover's distance and linear CKA
//!   ([`measures`]);
//! * simulation — a deterministic federated-learning harness with seven
//!   aggregation algorithms and a fine-tune-then-evaluate protocol
//!   ([`flsim`]).
//!
//! Everything here is `no_std` + `alloc`; file formats and the CLI live in
//! the companion `hetfed` crate. All randomness flows through named
//! sub-streams derived from a single seed ([`streams`]), so identical inputs
//! reproduce identical outputs byte for byte.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod clustering;
pub mod dataset;
pub mod flsim;
pub(crate) mod fmath;
pub mod measures;
pub mod numerics;
pub mod partition;
pub mod signature;
pub mod streams;
