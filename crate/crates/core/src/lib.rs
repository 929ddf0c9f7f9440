//! Rough-path numerics: level-2 rough paths, sewing, controlled integration, nonlinear rough
//! drivers, rough differential equations with mixed Itô/rough noise, McKean-Vlasov particle
//! systems with common rough noise, and Fokker-Planck defect verification.

pub mod controlled;
pub mod corpus;
pub mod defect;
pub mod driver;
pub mod error;
pub mod field;
pub mod fokker_planck;
pub mod grid;
pub mod io;
pub mod measures;
pub mod path;
pub mod rde;
pub mod rng;
pub mod rough_path;
pub mod sewing;
pub mod stochastic;
pub mod transport;
pub mod variation;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use path::{Path, TwoParamIncrement};
pub use rough_path::RoughPath;
