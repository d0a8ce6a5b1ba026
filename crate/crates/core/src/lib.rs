//! A numerical Ginzburg-Landau laboratory.

pub mod accept;
pub mod cell;
pub mod cg;
pub mod cutoff;
pub mod error;
pub mod field;
pub mod gauge;
pub mod gl;
pub mod grid;
pub mod lll;
pub mod measure;
pub mod minimize;
pub mod output;
pub mod quadrature;
pub mod sweep;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/lattice.md")]
    mod lattice {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/minimizer.md")]
    mod minimizer {}
    #[doc = include_str!("../../../book/src/cell.md")]
    mod cell {}
    #[doc = include_str!("../../../book/src/lll.md")]
    mod lll {}
    #[doc = include_str!("../../../book/src/measurements.md")]
    mod measurements {}
    #[doc = include_str!("../../../book/src/sweeps.md")]
    mod sweeps {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    mod acceptance {}
}
