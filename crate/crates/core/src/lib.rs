//! Numerical laboratory for privacy amplification in quantum key
//! distribution: private states and their characterisations, distillation by
//! the pretty good measurement, classical privacy amplification with linear
//! hashing, and a classical-quantum coding bound.
//!
//! Basis labels follow one convention throughout: the leftmost tensor factor
//! (and the leftmost bit of a binary string) is the most significant digit.

pub mod coding;
pub mod distill;
pub mod error;
pub mod experiment;
pub mod gf2;
pub mod infotheory;
pub mod privstate;
pub mod qmatrix;
pub mod random;
pub mod states;

pub use error::{Error, Result};
pub use gf2::BinaryMatrix;
pub use infotheory::Ensemble;
pub use qmatrix::{ComplexMatrix, C64};
pub use states::{Label, MultipartiteState, Subsystem, TwistingData};
