pub mod bank;
pub mod cli;
pub mod error;
pub mod kato;
pub mod kernel;
pub mod multiplier;
pub mod nls;
pub mod oracle;
pub mod quad;
pub mod radial;
pub mod resolvent;
pub mod symbol;
pub mod verify;

#[cfg(test)]
mod invariants;

pub use error::{Error, Result};
