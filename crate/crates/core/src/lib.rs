//! Dedup storage with on-ledger fee escrow and redistribution.

// Errors carry exact amounts; boxing them would only move the allocation.
#![allow(clippy::result_large_err)]

pub mod money;
pub mod economics;
pub mod crypto;
pub mod ledger;
pub mod contract;
pub mod actors;
pub mod config;
pub mod harness;
