//! Image-property statistics for separating real, deepfake and fully
//! synthetic face images, plus the classifier-evaluation arithmetic used to
//! compare detectors on the same three classes.

pub mod class;
pub mod eval;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod raster;
pub mod render;
pub mod report;
pub mod stats;

pub use class::ClassLabel;
