//! HodgeRank for crowdsourced pairwise comparisons.
//!
//! The crate aggregates pairwise comparison data from many voters into a
//! global score by least squares on the comparison graph, splits the residual
//! into its bias, tie, curl and harmonic parts, and drives label collection
//! with two information-maximizing samplers:
//!
//! - **unsupervised**: greedy growth of the algebraic connectivity (Fiedler
//!   value) of the comparison graph, independent of the labels;
//! - **supervised**: expected information gain under the Gaussian posterior of
//!   ridge-regularized HodgeRank, maintained online with rank-one
//!   Sherman-Morrison updates.
//!
//! The topology of the clique complex (connected components and loops) is
//! tracked incrementally while comparisons stream in, and [`experiment`]
//! reproduces the simulation study on synthetic ground truth.
//!
//! ```
//! use hodgerank::graph::{ComparisonGraph, ComparisonRecord, VoterId};
//! use hodgerank::hodge::{global_score, RidgeConfig};
//!
//! let mut graph = ComparisonGraph::new(3);
//! graph.add_comparison(ComparisonRecord::new(VoterId(0), 0, 1, 1.0)).unwrap();
//! graph.add_comparison(ComparisonRecord::new(VoterId(1), 1, 2, 1.0)).unwrap();
//! let y = graph.flow();
//! let fit = global_score(&graph, &y, &RidgeConfig::min_norm()).unwrap();
//! assert!(fit.scores[0] > fit.scores[1] && fit.scores[1] > fit.scores[2]);
//! ```

pub mod error;
pub mod experiment;
pub mod glm;
pub mod graph;
pub mod hodge;
pub mod io;
pub mod linalg;
pub mod sampling;
pub mod topology;
pub mod union_find;

pub use error::{Error, Result};
