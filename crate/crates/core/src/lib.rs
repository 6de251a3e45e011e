//! Lower bounds on multipartite entanglement from Bell-experiment data.
//!
//! Given n-party correlation data `p(a|x)` and an assumed local dimension
//! per party, the toolkit certifies nondegeneracy of a Bell expression,
//! converts the observed Bell value into a bound on the largest eigenvalue
//! of the unknown shared state, estimates the best product-state overlap
//! from the raw statistics, and combines the two into rigorous lower bounds
//! on the geometric measure of entanglement and the relative entropy of
//! entanglement.
//!
//! The crate is organised around the pipeline stages:
//!
//! - [`qmat`]: dense complex linear algebra for small joint systems
//! - [`bell`]: scenarios, correlations, Bell expressions, Bell operators
//! - [`nondegen`]: nondegeneracy certificates and eigenweight bounds
//! - [`prodfit`]: best product-distribution overlap via rank-1 tensor fits
//! - [`entbounds`]: GME and REE lower bounds, end-to-end analysis
//! - [`simlab`]: ideal configurations, noise models, sweep driver
//!
//! Data-parallel inner loops (seesaw restarts, per-setting tensor fits,
//! sweep grids) run on rayon when the default `parallel` feature is
//! enabled and fall back to plain iterators without it; results are
//! bit-identical either way.

pub mod bell;
pub mod entbounds;
pub mod nondegen;
pub mod prodfit;
mod error;
pub mod exec;
pub mod qmat;
pub mod simlab;
pub(crate) mod util;

pub use error::{Error, Result};
