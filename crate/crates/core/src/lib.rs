pub mod design;
pub mod error;
pub mod forecast;
pub mod io;
pub mod inference;
pub mod lfo;
pub mod metrics;
pub mod model;
pub mod psis;
pub mod series;
pub mod simplex;
pub mod simulate;
pub mod special;
pub mod study;

pub use error::{Error, Result};
