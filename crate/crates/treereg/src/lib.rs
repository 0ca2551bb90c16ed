//! Training neural networks under tree regularization.
//!
//! The crate trains MLP, GRU, HMM, and GRU-HMM models with a differentiable
//! penalty that drives decision boundaries toward functions a small decision
//! tree can express, including a regional variant weighted through sparsemax.
//! It also ships the supporting machinery: a small reverse-mode autodiff
//! engine, deterministic CART with reduced-error pruning, surrogate training
//! for the average-path-length penalty, synthetic benchmark generators, and a
//! sweep harness that emits AUC-vs-APL tradeoff tables and distilled trees.

pub mod autodiff;
pub mod data;
pub mod dtree;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod regularize;
pub mod surrogate;
pub mod models;

pub use autodiff::{AdamState, Matrix, NodeId, ParamVector, Tape};
pub use dtree::{DecisionTree, TreeNode};
pub use error::{Error, Result};
