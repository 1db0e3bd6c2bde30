//! One-sided multi-parameter hypothesis testing with a distribution-free
//! monitoring pipeline and a Monte Carlo harness.
//!
//! The crate is organized as:
//!
//! - [`rng`], [`special`], [`dist`]: seedable counter-based random streams,
//!   the incomplete gamma/beta kernels, and the distribution families built
//!   on them;
//! - [`linalg`]: small dense SPD matrix algebra (Cholesky, quadratic forms,
//!   Schur complements);
//! - [`cone`]: exact projection onto the non-positive orthant under a
//!   Mahalanobis metric and the projected statistic `T_n`;
//! - [`testing`]: the one-sided tests (least-favorable LRT, the
//!   mixture-calibrated mLR, the intersection PW test, and the
//!   union-intersection test) with orthant-probability mixture weights;
//! - [`drm`]: density ratio model estimation over clustered multi-sample
//!   data via the dual composite empirical likelihood;
//! - [`bootstrap`]: cluster bootstrap covariance estimation;
//! - [`datagen`]: clustered normal and multivariate gamma scenario
//!   generators;
//! - [`sim`]: the Monte Carlo harness and its reports.

pub mod bootstrap;
pub mod cone;
pub mod datagen;
pub mod dist;
pub mod drm;
pub mod error;
pub mod linalg;
mod optim;
pub mod rng;
pub mod sim;
pub mod special;
pub mod testing;

pub use error::{Error, Result};
pub use rng::RngStream;
