//! From point clouds to aligned texture/depth images and region masks.

mod clean;
mod masks;
mod pipeline;
mod project;
mod scan;
mod synth;

pub use clean::{fill_holes, median3, remove_outliers, surface_clean, surface_clean_with, CleanParams};
pub use masks::{convex_hull, hull_distance, rasterize_masks, MaskPyramid};
pub use pipeline::{preprocess_scan, write_pgm, write_ppm, ModalityPair, Sample};
pub use project::{cell_of, normalized_coords, project_to_grid, projection_box, Projection};
pub use scan::{Expression, Landmark, Region, Scan};
pub use synth::{displacement_norm, synth_scan, SYNTH_GRID, SYNTH_HALF_WIDTH};
