//! Analysis and simulation workbench for the two-dimensional age of
//! information (2D-AoI) of distributed sensors observing a correlated
//! spatio-temporal process.

pub mod calculus;
pub mod channel;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod scenario;
pub mod sim;
pub mod topology;

pub use calculus::{
    ccdf_2d_min, ccdf_2d_random_aed, ccdf_2d_single, ccdf_predvar_min, ccdf_predvar_single,
    mean_from_ccdf, mean_predvar_from_ccdf, quantile_from_ccdf, CcdfFn, SensorLink,
};
pub use channel::{ChannelModel, EmpiricalCcdf};
pub use error::{Error, Result};
pub use kernel::{Kernel, LengthScale, Position, SpatialFamily, TemporalFamily};
pub use topology::{
    capacity_split, grid_layout, grid_links, star_layout, CountMode, GridChannel, GridSite,
    GridSpec, StarSpec,
};
