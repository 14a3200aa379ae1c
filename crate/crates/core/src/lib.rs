//! Positional graph autoencoder: graphs, Laplacian spectra, the dual-path
//! encoder, reconstruction objectives, training and linear-probe evaluation.

pub mod analysis;
pub mod corruption;
pub mod encoder;
pub mod eval;
pub mod error;
pub mod graph;
pub mod io;
pub mod model;
pub mod objectives;
pub mod spectral;
pub mod synth;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
pub use graph::{BuildOptions, BuildReport, Graph, GraphCollection, Split, TaskKind};
