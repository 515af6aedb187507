//! Return-time statistics at periodic points of random subshifts.
//!
//! The crate computes the Pólya-Aeppli (geometric compound Poisson) law, the
//! fibre and marginal measures of random Bernoulli families and of Gibbs states
//! for locally constant potentials, the cluster parameter `ϑ`, and the exact or
//! sampled distribution of the number of returns to a cylinder `A_n(x)`.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`.

pub mod config;
pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod models;
pub mod polya_aeppli;
pub mod process;
pub mod runner;
pub mod returns;
pub mod rng;
pub mod scalar;
pub mod selfcheck;
pub mod symbolic;

pub use error::{Error, Result};
pub use scalar::Real;

pub type PolyaAeppli64 = polya_aeppli::PolyaAeppli<f64>;
pub type Pmf64 = polya_aeppli::Pmf<f64>;
pub type TwoElementModel64 = models::TwoElementModel<f64>;
pub type CountableModel64 = models::CountableModel<f64>;
pub type GibbsSystem64 = gibbs::GibbsSystem<f64>;
