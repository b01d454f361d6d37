//! Co-evolution of modular robot bodies and brains with lifetime learning.
//!
//! Bodies grow from a CPPN ([`cppn`], [`morphology`]); brains are networks of
//! coupled oscillators configured by a fixed-size weight matrix ([`brain`]).
//! Every newborn tunes its brain with RevDE ([`learner`]) on a kinematic
//! surrogate ([`sim`], [`tasks`]) before selection ([`evolution`]).
//! [`experiment`] and [`plot`] handle run directories, grids and figures.
//!
//! The guide in `book/` walks through each part; its snippets run as
//! doc-tests of this crate.

pub mod brain;
pub mod cppn;
pub mod error;
pub mod evolution;
pub mod experiment;
pub mod learner;
pub mod morphology;
pub mod plot;
pub mod sim;
pub mod tasks;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/bodies.md")]
    mod bodies {}
    #[doc = include_str!("../../../book/src/brains.md")]
    mod brains {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/tasks.md")]
    mod tasks {}
    #[doc = include_str!("../../../book/src/evolution.md")]
    mod evolution {}
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
}
