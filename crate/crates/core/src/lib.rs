//! Lattice codes, AMD hashing and privacy amplification for detecting a
//! Byzantine relay in a Gaussian two-hop network.

pub mod gf;
pub mod amd;
pub mod lattice;
pub mod extract;
pub mod oracle;
pub mod channel;
pub mod protocol;
pub mod cli;
