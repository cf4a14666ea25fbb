//! Stochastic process discovery: ALERGIA over event logs, stochastic
//! directed action graphs, entropic relevance and a genetic search for small,
//! accurate models.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alergia;
pub mod automata;
pub mod dot;
pub mod error;
pub mod eventlog;
pub mod gaspd;
pub mod relevance;
pub mod sdag;

pub use alergia::{run_alergia, AlergiaParams};
pub use automata::{Pat, Sdfa, StochasticLanguage};
pub use error::{Error, Result};
pub use eventlog::{parse_log, parse_xes, EventLog, Trace};
pub use relevance::{entropic_relevance, RelevanceReport};
pub use sdag::{AnnotatedSdag, Sdag};
