pub mod bayes;
pub mod calibrate;
pub mod contracts;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod numerics;
pub mod rho_ext;
pub mod risk;

pub use contracts::{build_ladder, Contract, LadderParams};
pub use distributions::ClaimDistribution;
pub use error::{Error, Result};
