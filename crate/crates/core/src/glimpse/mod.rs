//! Glimpse attention: a constrained sparse layer whose continuous tuples
//! lie on a `k x k` grid inside a learned bounding box.
//!
//! A source network turns an image into one box per glimpse. Every output
//! pixel of a glimpse has exactly one incoming connection, to its grid
//! point inside the box, so only the two image coordinates are sampled.

mod data;
mod grid;
mod layer;
mod model;

pub use data::{make_patterns, PatchDataset, PatchTaskConfig};
pub use grid::{bbox_to_grid, box_from_raw, grid_matrix};
pub use layer::{glimpse_eval, glimpse_forward, GlimpseSample, GlimpseSpec};
pub use model::{AttentionConfig, AttentionModel, AttentionOutput};
