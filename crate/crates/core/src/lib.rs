pub mod bim;
pub mod config;
pub mod error;
pub mod eval;
pub mod exec;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod region_sampler;
pub mod rng;
pub mod suppression;
pub mod synth;
