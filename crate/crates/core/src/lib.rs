pub mod error;
pub mod exactmat;
pub mod linalg;
pub mod mimo_sim;
pub mod papr_stats;
pub mod peak_density;
pub mod plusfact;
pub mod shaping;
pub mod stcode;

pub use error::{Error, Result};
