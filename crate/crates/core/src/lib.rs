//! Pseudo-spectral capillarity-gravity water waves on the circle, with a
//! periodic Bony-Weyl paradifferential toolkit, small-divisor analysis and a
//! model Birkhoff normal form.

pub mod dispersion;
pub mod dno;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod normalform;
pub mod symbols;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
