//! Sectional solver and analysis toolkit for the collision-induced nonlinear
//! fragmentation equation with power-law daughter distributions.
//!
//! ```text
//! ∂_t u(t, x) = ½ ∫∫ β(x, y, z) Φ(y, z) u(t, y) u(t, z) dz dy
//!               - u(t, x) ∫ Φ(x, y) u(t, y) dy
//! ```
//!
//! The crate is organised bottom-up: [`kernel`] and [`daughter`] describe the
//! physics, [`grid`] and [`scheme`] discretise it with exact mass bookkeeping,
//! [`integrate`] advances it in time, [`bounds`] evaluates the explicit
//! existence and non-existence constants, and [`diagnostics`] checks
//! simulation output against them. [`config`] and [`output`] back the
//! command-line tool.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod config;
pub mod daughter;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod integrate;
pub mod kernel;
pub mod output;
pub mod power;
pub mod quadrature;
pub mod scheme;

pub use bounds::{BoundsReport, Regime};
pub use config::SimConfig;
pub use daughter::DaughterLaw;
pub use error::{ConfigError, Error, Result};
pub use grid::{InitialCondition, SizeGrid, State};
pub use integrate::{RunOutput, Tolerances};
pub use kernel::KernelSpec;
pub use scheme::RhsWorkspace;
