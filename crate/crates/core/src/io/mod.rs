//! File formats.

pub mod netpbm;
pub mod semantic;
pub mod stixel_file;
pub mod viz;

pub use netpbm::{read_confidence, read_disparity, write_disparity_pfm, write_disparity_pgm};
pub use semantic::{read_labels, read_semantic, write_labels, write_score_volume};
pub use stixel_file::{read_stixels, write_stixels, StixelFile, StixelFileHeader};
pub use viz::write_visualization;
