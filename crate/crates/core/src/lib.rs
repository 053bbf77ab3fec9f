//! Image orientation estimation from depth maps.
//!
//! Far scene content sits near the top of an upright photograph. The coarse
//! stage picks the image quadrant with the largest mean depth; the fine stage
//! searches rotations within ±45° of it, minimizing a cost built from the
//! vertical depth gradient and left-right depth asymmetry. Images without
//! depth fall back to a defocus-blur proxy for the coarse stage.

pub mod coarse;
pub mod defocus;
pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod pipeline;
pub mod refine;
pub mod synth;

pub use coarse::{estimate_coarse, CoarseEstimate, Region, RegionMagnitudes};
pub use defocus::{DefocusConfig, GrayImage};
pub use error::{Error, Result};
pub use grid::{canonicalize_angle, circular_distance, rotate90, rotate_arbitrary, Angle, DepthMap};
pub use pipeline::{estimate_orientation, estimate_video, EstimateInput, Mode, OrientationResult, VideoResult};
pub use refine::{fine_search, CostProfile, RefineConfig};
