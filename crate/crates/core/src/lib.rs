//! Distill a black-box classifier into one decision tree whose splits are
//! chosen by a sequential better-split test on oracle-labeled pseudo samples.
//!
//! The library is generic over the scalar type ([`Scalar`], implemented for
//! `f32` and `f64`). The aliases at the crate root fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod builder;
pub mod error;
pub mod eval;
pub mod io;
pub mod oracle;
pub mod region;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod schema;
pub mod splitstat;
pub mod synth;
pub mod tree;

pub use builder::{build_tree, build_tree_observed, BuildConfig, BuildObserver, LabelMode, LeafRule, SamplePolicy};
pub use error::{Error, Result};
pub use eval::{mimic_accuracy, predictive_accuracy, stability_experiment, MimicReport, StabilityReport, Tolerance};
pub use oracle::{fit_forest, ConstantOracle, ExternalOracle, ForestConfig, Oracle, OracleHandle};
pub use region::{route, Side};
pub use sampler::SamplerConfig;
pub use scalar::Scalar;
pub use schema::{ColumnKind, ColumnSpec, Schema};
pub use tree::NodeDiagnostics;

pub type Matrix = schema::Matrix<f64>;
pub type Dataset = schema::Dataset<f64>;
pub type SoftLabeledSample = schema::SoftLabeledSample<f64>;
pub type SampleBatch = schema::SampleBatch<f64>;
pub type SplitRule = region::SplitRule<f64>;
pub type Region = region::Region<f64>;
pub type Tree = tree::Tree<f64>;
pub type TreeNode = tree::TreeNode<f64>;
pub type Forest = oracle::Forest<f64>;
