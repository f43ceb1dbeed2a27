//! Shifted value iteration for undiscounted optimal control on compact
//! boxes.
//!
//! Problems are sampled onto multilinear grids ([`problem`]); [`bellman`]
//! provides the operators, [`solve`] the iteration drivers,
//! [`dissipativity`] sampled certificates and [`oracle`] a brute-force
//! reference for iterated backups.

pub mod bellman;
pub mod dissipativity;
pub mod exprlang;
pub mod oracle;
pub mod problem;
pub mod solve;
