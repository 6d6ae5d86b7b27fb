//! Distributed job dispatching in an edge network where every dispatcher
//! acts on outdated, partially observable state.

pub mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod policy;
pub mod sim;
pub mod valuefn;

pub use error::{Error, Result};
