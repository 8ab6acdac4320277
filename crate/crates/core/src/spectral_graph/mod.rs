//! High-dimensional neighborhood graphs built from pixel data.

mod covariance;
mod dataset;
mod graph;
mod kernel;
mod pca;

pub use covariance::{
    default_rotations, rotation_budget, sample_covariance, smt_estimate, CovarianceModel, EIGENVALUE_FLOOR,
    MAX_SMT_SWEEPS, SMT_CORRELATION_TOL,
};
pub use dataset::PixelDataset;
pub use graph::{
    bilateral_graph, default_spatial_scale, gaussian_perplexity_graph, gaussian_perplexity_graph_with_base,
    knn_sparsify_and_symmetrize, perplexity_rows, BilateralOptions, EntropyBase, GraphKind, NeighborhoodGraph,
    PerplexityRows, PERPLEXITY_MAX_ITER, PERPLEXITY_TOL, SPATIAL_WINDOW,
};
pub use kernel::{bilateral_weight, photometric_weight, spatial_weight};
pub use pca::{pca_fit, pca_reduce, PcaModel};
