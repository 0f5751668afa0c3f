//! Slot-level simulator and queueing analytics for an uplink underlay
//! cognitive-radio cell.
//!
//! `N` secondary users (SUs) share one channel under an instantaneous
//! interference cap at the primary user (PU). Each SU keeps an
//! infinite FIFO buffer with Bernoulli packet arrivals; the base
//! station schedules at most one SU per slot and picks its transmit
//! power. The crate provides:
//!
//! - [`channel`]: per-slot i.i.d. power gains (SU→BS and SU→PU) with
//!   truncated distributions and deterministic per-SU substreams,
//! - [`queueing`]: bit-level head-of-line service with exact
//!   per-packet delay accounting,
//! - [`power`]: the interference-capped power rule
//!   `min(I_inst/g, P_max)` and the log rate map,
//! - [`analytics`]: service-time moments from the discretized rate
//!   law (partial-sum convolution) and the preemptive-resume priority
//!   delay formula,
//! - [`policy`]: the DOIC frame-based scheduler (virtual delay queues
//!   plus a c·mu priority sort) and the CSMA / CNC / static-priority
//!   baselines behind one trait,
//! - [`engine`]: the slot loop with frame segmentation, constraint
//!   auditing and statistics,
//! - [`oracle`]: independent brute-force validators (Monte Carlo
//!   moments, exhaustive enumeration, trace replay).

pub mod analytics;
pub mod channel;
pub mod config;
pub mod engine;
pub mod oracle;
pub mod policy;
pub mod power;
pub mod queueing;
pub mod rng;
