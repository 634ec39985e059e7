//! Configuration-driven front end for the `mmreach` library.

pub mod app;
pub mod config;
pub mod output;
pub mod run;
