//! Configuration, run execution, the HTTP API and the command line for
//! `raremine`.

pub mod api;
pub mod cli;
pub mod config;
pub mod runner;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/service.md")]
mod book_service {}
