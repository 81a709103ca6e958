//! Simulation engine for multimodal federated graph learning.
//!
//! The crate covers the whole pipeline: synthesizing multimodal-attributed
//! graphs ([`synth`]), sharding them across clients along the modality,
//! topology and label axes ([`partition`]), training from-scratch graph
//! backbones ([`nn`]) under federated protocols ([`federation`]), and
//! measuring effectiveness, robustness and efficiency ([`metrics`],
//! [`perturb`], [`runner`]).

pub mod error;
pub mod federation;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod runner;
pub mod partition;
pub mod perturb;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{ClientShard, Modality, MultimodalGraph, SplitMasks};
