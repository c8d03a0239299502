//! Simulation and verification tools for planar Poisson Boolean
//! percolation with random radii.
//!
//! A [`Configuration`] is a finite-window sample of discs. Connectivity
//! queries (crossings, arm events, renormalized fields) live in
//! [`connectivity`], circuits and necklaces around a ball in [`topology`],
//! and Monte Carlo drivers in [`estimators`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod connectivity;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod sampler;
pub mod stats;
pub mod topology;

pub use distributions::{Law, Quantity, RadiusLaw, SlicedLaw};
pub use error::{Error, Result};
pub use geometry::{Disc, Point, Rect, Window};
pub use sampler::{sample_configuration, thin, truncate, Boundary, Configuration};
pub use stats::Estimate;
