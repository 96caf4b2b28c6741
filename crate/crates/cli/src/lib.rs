//! Transcript replay, the HTTP service and dataset commands behind the
//! `tokroute` binary.

pub mod config;
pub mod replay;
pub mod service;
pub mod store;
