//! Revealed-preference tools for international price comparisons: reference
//! consumer tests, sharp cost-of-living bounds, multilateral price indices,
//! their appraisal against the bounds, generalised star system parities, and
//! output and inequality aggregates.

pub mod aggregates;
pub mod appraisal;
pub mod bounds;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod gss;
pub mod indices;
pub mod io;
pub mod lp;
pub mod rpgraph;

pub use error::{Error, Result};
