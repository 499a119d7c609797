//! Cycle-level model of a network-processor queue-management subsystem.
//!
//! The crate simulates per-flow segment queues kept as linked lists over a
//! shared buffer pool in banked DRAM, the access schedulers that keep the
//! memory bus busy, and the command pipeline that executes queue operations —
//! plus an analytic cost model for the software it replaces.
//!
//! Top-level experiments live in [`experiment`]; with the default `parallel`
//! feature they fan independent (parameter, seed) instances out across a
//! thread pool and merge results deterministically.

pub mod costmodel;
pub mod dram;
pub mod experiment;
pub mod pipeline;
pub mod qmgr;
pub mod sched;
pub mod traffic;
