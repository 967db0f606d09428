//! Set-oriented analysis of dynamical systems on compact box domains.
//!
//! The crate discretizes a map or ODE time-T flow into a multivalued cell map
//! on a uniform grid, builds transition digraphs over the cells, and extracts
//! combinatorial versions of the classical objects of topological dynamics:
//! chain-recurrent sets, global attractors, and condensation (stream) graphs
//! with strong/weak edge classification.
//!
//! The crate is `no_std` + `alloc`; everything here is deterministic and
//! single-threaded. IO, file formats, and parallel drivers live in the
//! companion `chainscape` crate.

#![no_std]

extern crate alloc;

pub mod attractor;
pub mod dynsys;
pub mod grid;
pub mod refine;
pub mod streams;
pub mod transition;
