//! Command-line front end for `nlmesel`: configuration, data files and the
//! `simulate`, `fit`, `select` and `eval-bic` workflows.

pub mod commands;
pub mod config;
pub mod io;
