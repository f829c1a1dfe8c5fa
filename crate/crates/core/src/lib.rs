//! Analytics for directed followership networks.
//!
//! The crate covers the whole measurement pipeline around users with many
//! followers:
//!
//! - [`graph`]: the follower/friend graph model and its text formats
//! - [`synthgen`]: synthetic networks with planted type-1 / type-2 users
//! - [`access`]: a rate-limited, paginated view of a ground-truth graph
//! - [`sampling`]: neighbor sampling and random-ID sampling through that view
//! - [`metrics`]: degree ratio, diagonal fraction, reciprocity, clustering
//! - [`evaluation`]: survivor functions, ROC curves and AUC
//! - [`pagerank`]: random-walk PageRank estimation and an exact oracle
//! - [`report`]: aggregate reports and their CSV / JSON layouts

pub mod access;
pub mod evaluation;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod pagerank;
pub mod report;
pub mod sampling;
pub mod synthgen;

pub use graph::{Degrees, DirectedGraph, GraphBuilder, GraphError, UserId, UserRecord};
pub use metrics::{Fraction, TypeLabel, TypeThresholds};
