pub mod geometry;
pub mod io;
pub mod sparse;
pub mod spectral;
pub mod metric;
pub mod odecmp;
pub mod rng;
pub mod pinching;
pub mod equator;
pub mod stats;
pub mod report;
pub mod sweep;
pub mod cli;
