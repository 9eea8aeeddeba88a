//! Nested entropy sampling for autonomous experimental design.
//!
//! The crate covers both halves of an inference/inquiry loop:
//!
//! - [`inference`]: nested-sampling posterior over a hidden-circle model.
//! - [`design`]: predictive-entropy ranking of candidate measurements and the
//!   closed loop that measures, infers, and asks again.
//! - [`search`]: nested entropy sampling (NES), a threshold-contracting
//!   stochastic maximizer with a memoized objective.
//! - [`landscape`]: Gaussian-mixture benchmark fields and brute-force maps.
//! - [`metrics`]: compression efficiency, replicated sweeps, trend tests, and
//!   the expected-utility oracle.
//!
//! ```
//! use nested_entropy::{landscape::MixtureLandscape, search::{run_nes, NesConfig}, GridSpace};
//!
//! let grid = GridSpace::default_2d();
//! let field = MixtureLandscape::random(7, grid.clone(), 42)?;
//! let result = run_nes(&field, &grid, &NesConfig::default().with_samples(50))?;
//! assert!(result.metrics.compression_efficiency >= 1.0);
//! # Ok::<(), nested_entropy::Error>(())
//! ```

pub mod circle;
pub mod design;
pub mod error;
pub mod grid;
pub mod inference;
pub mod landscape;
pub mod metrics;
pub mod objective;
pub mod search;
pub mod walk;

pub use error::{Error, Result};
pub use grid::{Cell, GridSpace};
pub use objective::Objective;
