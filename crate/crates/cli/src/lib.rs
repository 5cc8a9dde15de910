//! Front door for knowledge maps: config loading, the offline build
//! pipeline, decoder simulations and the read-only HTTP service.

pub mod config;
pub mod pipeline;
pub mod record;
pub mod service;
