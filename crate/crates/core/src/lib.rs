//! Spectral band selection for multiband deforestation scenes.
//!
//! The pipeline runs in stages, each backed by one module:
//!
//! 1. [`raster`] loads scenes (flat 16-bit bands plus a class mask).
//! 2. [`preprocess`] fits a 3-component PCA and projects a false-color image.
//! 3. [`superpixel`] segments the false-color image with SLIC.
//! 4. [`segments`] labels, filters and splits the superpixels.
//! 5. [`texture`] extracts per-band Haralick descriptors from each segment.
//! 6. [`classifier`] scores band subsets by SVM balanced accuracy.
//! 7. [`umda`] evolves band-subset genomes against that score.
//! 8. [`report`] aggregates runs into per-band selection frequencies.
//! 9. [`tiler`] cuts the winning composition into an augmented tile dataset.
//!
//! [`synth`] generates synthetic scenes with planted class signal for testing.

pub mod classifier;
pub mod error;
pub mod genome;
pub mod preprocess;
pub mod raster;
pub mod report;
pub mod segments;
pub mod superpixel;
pub mod synth;
pub mod texture;
pub mod tiler;
pub mod umda;

pub use error::{Error, Result};
pub use genome::Genome;
