//! State-vector simulation of the Mach-Zehnder interferometer with which-way
//! detection, which-way entanglement and a photon-absorbing quantum eraser.
//!
//! - [`hilbert`]: composite basis bookkeeping, dense maps, projectors.
//! - [`components`]: beam splitter, mirrors, phase shifter, entangler, eraser.
//! - [`experiment`]: pipelines, exact branch enumeration, sampling, sweeps.
//! - [`dsl`]: the `.mzx` experiment description language.
//! - [`cli`]: the `mzx` command-line front end.

pub mod components;
pub mod hilbert;
pub mod experiment;
pub mod dsl;
pub mod cli;
