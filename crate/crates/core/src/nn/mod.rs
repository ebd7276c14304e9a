//! Minimal neural-network substrate: rectifier MLPs with hand-written reverse
//! passes, a squashed-Gaussian policy head, Adam and Polyak averaging.

pub mod adam;
pub mod io;
pub mod mlp;
pub mod policy;

use thiserror::Error;

pub use adam::Adam;
pub use mlp::{polyak_update, Dense, ForwardCache, Mlp};
pub use policy::{PolicyForward, PolicyNet, PolicySample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("parameter shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}
