//! Shared numerical kernels: adaptive quadrature, bracketing root finding,
//! a Nelder-Mead simplex minimizer, golden-section search and seeded RNG
//! streams.

mod quad;
mod rng;
mod root;
mod simplex;

pub use quad::{integrate, integrate_to_inf};
pub use rng::{rng_stream, RngStream, RNG_ALGORITHM};
pub use root::{find_root, golden_section};
pub use simplex::{minimize_simplex, SimplexOptions, SimplexResult};

use crate::error::{Error, Result};

/// Absolute/relative tolerance pair plus an iteration budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_iter: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64, max_iter: usize) -> Result<Self> {
        let tol = Tolerance { abs, rel, max_iter };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs > 0.0) || !(self.rel > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerances must be positive (abs={}, rel={})",
                self.abs, self.rel
            )));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        Ok(())
    }

    /// Quadrature default: abs 1e-10, rel 1e-8.
    pub const fn quadrature() -> Self {
        Tolerance {
            abs: 1e-10,
            rel: 1e-8,
            max_iter: 4000,
        }
    }

    /// Root-finding default.
    pub const fn root() -> Self {
        Tolerance {
            abs: 1e-12,
            rel: 1e-14,
            max_iter: 500,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::quadrature()
    }
}
