//! Discovery of rare positive examples in an unlabeled embedding corpus,
//! starting from synthetic positive seeds.
//!
//! The pieces compose bottom-up: [`dataset`] loads corpora, [`simgraph`]
//! builds threshold graphs over them, [`seeding`] picks the starting seeds,
//! [`ibg`] and [`labelprop`] expand from those seeds while querying an
//! [`oracle`], and [`metrics`] turns the resulting [`runlog::RunLog`] into
//! precision/recall curves. [`theory`] holds the closed-form analysis of a
//! single expansion round and the Monte Carlo harness that checks it.

pub mod baseline_lr;
pub mod bench;
pub mod dataset;
pub mod ibg;
pub mod labelprop;
pub mod ledger;
pub mod metrics;
pub mod oracle;
pub mod runlog;
pub mod seeding;
pub mod simgraph;
pub mod theory;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/discovery.md")]
    mod discovery {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/theory.md")]
    mod theory {}
}
