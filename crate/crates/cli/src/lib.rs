//! Command-line driver and live session service for borderforge.

pub mod commands;
pub mod service;
