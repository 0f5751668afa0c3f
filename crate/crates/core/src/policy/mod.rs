//! Scheduling policies behind a common frame-aware interface.
//!
//! The engine drives a [`Scheduler`] through three hooks: a frame
//! opens, each busy slot asks for a [`SlotDecision`], and a completed
//! frame is reported back. At most one SU transmits per slot, and all
//! shipped policies draw their power from the same [`PowerPolicy`].

use crate::channel::ChannelDraw;
use crate::power::{rate_in, LogBase, PowerPolicy};

pub mod baselines;
pub mod doic;

pub use baselines::{csma_select, cnc_select, CncScheduler, CsmaScheduler, StaticPriorityScheduler};
pub use doic::{
    mean_rate_stability_series, select_transmitter, sort_priorities, update_auxiliary,
    update_virtual_queue, DoicParams, DoicScheduler, PriorityList, VirtualQueue,
};

/// Per-slot scheduler output: the chosen SU (or none for an idle
/// decision) with its transmit power and rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotDecision {
    pub su: Option<usize>,
    pub power: f64,
    pub rate_bits: f64,
}

impl SlotDecision {
    pub fn idle() -> Self {
        Self {
            su: None,
            power: 0.0,
            rate_bits: 0.0,
        }
    }

    /// Decision for SU `i` powered by `policy` on this slot's draw.
    pub fn transmit(i: usize, draw: &ChannelDraw, policy: &PowerPolicy, base: LogBase) -> Self {
        let power = policy.power_for(draw.g[i]);
        Self {
            su: Some(i),
            power,
            rate_bits: rate_in(power, draw.gamma[i], base),
        }
    }
}

/// What a scheduler may see of one SU's buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuView {
    pub nonempty: bool,
    /// Queue length in packets (head-of-line included).
    pub len: usize,
}

/// One completed frame: an idle period followed by a busy period, with
/// the delays of every packet that arrived during the frame (all of
/// which departed before the frame closed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub index: u64,
    pub idle_len: u64,
    pub busy_len: u64,
    /// `delays[i]` lists the delays (slots) of SU `i`'s frame arrivals.
    pub delays: Vec<Vec<u64>>,
}

/// The scheduling contract the engine drives.
pub trait Scheduler {
    /// A new frame opens (the previous one, if any, was reported).
    fn on_frame_start(&mut self, frame_index: u64);

    /// One busy slot: pick a transmitter among the non-empty buffers.
    fn on_slot(&mut self, draw: &ChannelDraw, queues: &[SuView]) -> SlotDecision;

    /// A frame closed; policies update their internal state here.
    fn on_frame_end(&mut self, record: &FrameRecord);

    /// Virtual-queue backlog, for policies that keep one.
    fn virtual_queues(&self) -> Option<&[f64]> {
        None
    }

    fn name(&self) -> &'static str;
}
