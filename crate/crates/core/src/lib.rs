pub mod calibration;
pub mod error;
pub mod error_analysis;
pub mod fit;
pub mod geometry;
pub mod interface;
pub mod io;
pub mod linking;
pub mod localization;
pub mod mesh;
pub mod peaks;
pub mod presets;
pub mod pipeline;
pub mod profiles;
pub mod ramp;
pub mod refine;
pub mod score;
pub mod solver;
pub mod stages;
pub mod spectroscopy;
pub mod units;

pub use error::{Error, Result};
pub use interface::{Excitation, Interface};
