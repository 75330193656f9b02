//! Predictive features from tweet corpora.
//!
//! The crate turns an offline tweet dump into model inputs and fits models
//! on them:
//!
//! - [`corpus`]: parsing, tokenization, thematic filtering
//! - [`graph`]: user interaction graph, centralities, Walktrap communities, layout
//! - [`patterns`]: Apriori itemsets, association rules, grouped rule matrix
//! - [`features`]: keyword daily counts, normalization, lag matrices, price returns
//! - [`models`]: LASSO with block cross-validation, Metropolis-within-Gibbs regression
//! - [`trading`]: replayed market environment and Q-learning agent
//!
//! The guide in `book/` walks through each stage; its code listings are
//! compiled and run as doctests of this crate.

pub mod corpus;
pub mod day;
pub mod error;
pub mod features;
pub mod graph;
pub mod models;
pub mod patterns;
pub mod seed;
pub mod trading;

pub use day::Day;
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/graph.md")]
    mod graph {}
    #[doc = include_str!("../../../book/src/patterns.md")]
    mod patterns {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/trading.md")]
    mod trading {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
