//! AC optimal power flow toolkit: case data, local and semidefinite solvers,
//! all-solutions power flow, and feasible-space enumeration for small networks.

pub mod casegen;
pub mod fspace;
pub mod localopt;
pub mod netmodel;
pub mod pflow;
pub mod pipeline;
pub mod sdprelax;
