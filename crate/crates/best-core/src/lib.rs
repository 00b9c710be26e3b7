//! Core of a deterministic, seedable simulator for a blockchain-backed
//! safe-driving assessment system: connected vehicles stream signed status
//! records to roadside units, a BFT-DPoS consortium chain filters and stores
//! them, and an LSTM classifier predicts a per-vehicle risk index.
//!
//! The crate is `no_std` + `alloc`; all IO, file formats, and the CLI live in
//! the companion `best-cli` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod assessment;
pub mod consensus;
pub mod crypto;
pub mod ledger;
pub mod netsim;
pub mod scenario;
pub mod telemetry;
