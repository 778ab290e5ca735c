//! Meta-clustering of distributed regression learners.
//!
//! Every learner keeps its rows private. The Select-Exchange-Cluster
//! pipeline groups learners by the regression function behind their data:
//!
//! 1. **Select** ([`models::select_method`]): each learner picks a method by
//!    half-half cross-validation and publishes the refit predictor with its
//!    in-sample MSE.
//! 2. **Exchange** ([`exchange::build_similarity`]): every pair evaluates the
//!    other's predictor on its own rows; the excess losses form a
//!    dissimilarity, mapped to similarities `exp(-a v)`.
//! 3. **Cluster** ([`spectral::sec_cluster`]): spectral clustering of the
//!    similarity matrix, with the number of clusters chosen by the gap
//!    statistic or a penalized k-means objective.
//!
//! [`collaborate`] uses the result for within-cluster prediction and for
//! placing new learners; [`bench`] holds the experiment runners.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod collaborate;
pub mod dataset;
pub mod error;
pub mod exchange;
pub mod models;
pub mod pipeline;
pub mod seed;
pub mod spectral;

pub use error::{Error, Result};
