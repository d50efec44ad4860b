//! Model-free multiple testing with sliced inverse regression.
//!
//! The core pipeline ([`mta::mta_procedure`]) splits the sample in two, fits
//! the per-slice SIR coefficient matrix on each half with a node-wise Lasso
//! precision estimate, combines the halves into mirror statistics
//! `M_j = <B1_j, B2_j>` and rejects `M_j > tau_q`, where `tau_q` is the
//! smallest threshold whose estimated false discovery proportion
//! `#{M_j <= -t} / #{M_j > t}` is at most `q`.
//!
//! [`baselines`] provides the marginal HSIC + Benjamini-Hochberg comparator,
//! [`simgen`] the simulation designs and replication harness, and
//! [`evalmetrics`] aggregate FDR and null-symmetry checks.

pub mod baselines;
pub mod data;
pub mod decision;
pub mod error;
pub mod evalmetrics;
pub mod mta;
pub mod precision;
pub mod rng;
pub mod simgen;
pub mod sir;

pub use data::{read_matrix_csv, Dataset};
pub use nalgebra;
pub use decision::DecisionSet;
pub use error::{MtaError, Result};
pub use mta::{mta_procedure, MirrorStatistics, MtaConfig, MtaOutcome, SplitPlan};
pub use precision::{CovarianceEstimate, LambdaRule, PrecisionEstimate};
pub use simgen::harness::{run_replications, Method, ReplicationRecord, RunOptions};
pub use simgen::{DesignSource, GroundTruth, Metrics, SigmaRule, SimConfig, Setting, SnrScale};
pub use sir::{CoefficientMatrix, SlicePartition};
