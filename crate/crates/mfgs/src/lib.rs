//! Single- and multi-fidelity gradient sampling for fixed-order H-infinity
//! controller synthesis on descriptor LTI systems.

pub mod error;
pub mod linalg;
pub mod lti;

pub use error::{Error, Result};
pub mod analysis;
pub mod grad;
pub mod qp;
pub mod gs;
pub mod bench;
pub mod io;
pub mod mf;
pub mod experiment;
