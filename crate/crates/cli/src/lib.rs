//! Command-line experiments for the kernel-regime and self-guided DIP study.

pub mod config;
pub mod error;
pub mod experiments;
pub mod problems;
pub mod svg;
pub mod runner;
