//! Multidimensional artificial field embedding of hyperspectral pixels.
//!
//! Pixels are linked by a neighborhood graph in spectral space, then moved in
//! a low dimensional embedding by attraction along graph edges and repulsion
//! between all pairs until the field energy reaches a minimum.

mod error;
mod scalar;

pub mod engine;
pub mod evaluation;
pub mod field;
pub mod io;
pub mod spectral_graph;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use engine::{run, EmbeddingRun, EngineConfig, Termination, Trajectory};
pub use evaluation::{EvaluationReport, EvaluationSettings, Metric};
pub use field::{Family, FieldModel};
pub use spectral_graph::{CovarianceModel, GraphKind, NeighborhoodGraph, PixelDataset};

pub type Dataset64 = PixelDataset<f64>;
pub type Dataset32 = PixelDataset<f32>;
pub type Graph64 = NeighborhoodGraph<f64>;
pub type Graph32 = NeighborhoodGraph<f32>;
pub type FieldModel64 = FieldModel<f64>;
pub type FieldModel32 = FieldModel<f32>;
pub type Covariance64 = CovarianceModel<f64>;
pub type Covariance32 = CovarianceModel<f32>;
pub type EmbeddingRun64 = EmbeddingRun<f64>;
pub type EmbeddingRun32 = EmbeddingRun<f32>;
