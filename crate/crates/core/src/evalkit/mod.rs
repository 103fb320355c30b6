//! Inference and evaluation: cosine KNN, long-tail accuracy metrics, class
//! distance matrices and 2-D layouts.

pub mod knn;
pub mod layout;
pub mod metrics;

pub use knn::{knn_predict, nearest, vote, EmbeddingTable};
pub use layout::{centroid_distance_matrix, kamada_kawai_layout, stress, Layout2D, LayoutOptions};
pub use metrics::{compute_metrics, MetricsReport, DEFAULT_HEAD_THRESHOLD, DEFAULT_TAIL_THRESHOLD};

/// Default neighbor count for KNN inference.
pub const DEFAULT_K: usize = 5;
