//! Core algorithms for a desk-scale ICS security pipeline: a permissioned,
//! tamper-evident blockchain that stores encrypted device logs as per-device
//! transaction chains, and a multi-source bidirectional-LSTM classifier that
//! flags anomalous sequence windows and attributes them to the offending
//! source.
//!
//! This crate is `no_std` + `alloc`: everything here is a pure function of
//! its inputs (plus an explicit seeded RNG where randomness is required), so
//! simulation runs, datasets, and trained models are reproducible byte for
//! byte. File formats, persistence, and the command-line driver live in the
//! companion `icsguard-cli` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod consensus;
pub mod crypto;
pub mod detector;
pub mod features;
pub mod ledger;
pub mod msdnn;
pub mod sim;
