//! Shape-regularized neural projection engine: a parametric 2D projection
//! trained with a variational bottleneck whose latent prior pushes clusters
//! toward chosen shapes (ellipses, rectangles, convex polygons), plus the
//! quality metrics, clustering, data handling, and plotting around it.

pub mod adam;
pub mod artifact;
pub mod cli;
pub mod cluster;
pub mod data;
pub mod error;
pub mod geom;
pub mod graph;
pub mod manifest;
pub mod metrics;
pub mod network;
pub mod plot;
pub mod rng;
pub mod sampling;
pub mod special;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
