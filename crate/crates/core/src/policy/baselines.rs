//! Reference schedulers: CSMA, CNC (a MaxWeight variant) and fixed
//! static priority. All three share the interference-capped power rule
//! with the DOIC policy, so the comparison isolates the scheduling
//! decision.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelDraw;
use crate::power::{rate_in, LogBase, PowerPolicy};
use crate::rng::{substream, Domain};

use super::{FrameRecord, Scheduler, SlotDecision, SuView};

/// Uniformly random choice among the non-empty buffers. Selecting an
/// empty SU would waste the slot, so empties are excluded.
pub fn csma_select(nonempty: &[bool], rng: &mut impl Rng) -> Option<usize> {
    let candidates: Vec<usize> = nonempty
        .iter()
        .enumerate()
        .filter_map(|(i, &ne)| ne.then_some(i))
        .collect();
    match candidates.len() {
        0 => None,
        1 => Some(candidates[0]),
        k => Some(candidates[rng.random_range(0..k)]),
    }
}

/// MaxWeight choice: among non-empty SUs, the largest queue-length
/// times achievable-rate product; ties break by ascending index.
pub fn cnc_select(
    queues: &[SuView],
    draw: &ChannelDraw,
    policy: &PowerPolicy,
    base: LogBase,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, q) in queues.iter().enumerate() {
        if !q.nonempty {
            continue;
        }
        let rate = rate_in(policy.power_for(draw.g[i]), draw.gamma[i], base);
        let weight = q.len as f64 * rate;
        match best {
            Some((_, w)) if weight <= w => {}
            _ => best = Some((i, weight)),
        }
    }
    best.map(|(i, _)| i)
}

/// Channel-equal random scheduling.
pub struct CsmaScheduler {
    rng: ChaCha8Rng,
    power: PowerPolicy,
    base: LogBase,
}

impl CsmaScheduler {
    pub fn new(master_seed: u64, power: PowerPolicy, base: LogBase) -> Self {
        Self {
            rng: substream(master_seed, Domain::Policy, 0),
            power,
            base,
        }
    }
}

impl Scheduler for CsmaScheduler {
    fn on_frame_start(&mut self, _frame_index: u64) {}

    fn on_slot(&mut self, draw: &ChannelDraw, queues: &[SuView]) -> SlotDecision {
        let nonempty: Vec<bool> = queues.iter().map(|q| q.nonempty).collect();
        match csma_select(&nonempty, &mut self.rng) {
            Some(i) => SlotDecision::transmit(i, draw, &self.power, self.base),
            None => SlotDecision::idle(),
        }
    }

    fn on_frame_end(&mut self, _record: &FrameRecord) {}

    fn name(&self) -> &'static str {
        "csma"
    }
}

/// Queue-length times rate MaxWeight scheduling.
pub struct CncScheduler {
    power: PowerPolicy,
    base: LogBase,
}

impl CncScheduler {
    pub fn new(power: PowerPolicy, base: LogBase) -> Self {
        Self { power, base }
    }
}

impl Scheduler for CncScheduler {
    fn on_frame_start(&mut self, _frame_index: u64) {}

    fn on_slot(&mut self, draw: &ChannelDraw, queues: &[SuView]) -> SlotDecision {
        match cnc_select(queues, draw, &self.power, self.base) {
            Some(i) => SlotDecision::transmit(i, draw, &self.power, self.base),
            None => SlotDecision::idle(),
        }
    }

    fn on_frame_end(&mut self, _record: &FrameRecord) {}

    fn name(&self) -> &'static str {
        "cnc"
    }
}

/// Fixed priority order, highest first; used to validate the priority
/// delay formula against simulation.
pub struct StaticPriorityScheduler {
    order: Vec<usize>,
    power: PowerPolicy,
    base: LogBase,
}

impl StaticPriorityScheduler {
    pub fn new(order: Vec<usize>, power: PowerPolicy, base: LogBase) -> Self {
        let mut seen = order.clone();
        seen.sort_unstable();
        assert!(
            seen.iter().enumerate().all(|(i, &v)| i == v),
            "order must be a permutation of 0..n"
        );
        Self { order, power, base }
    }
}

impl Scheduler for StaticPriorityScheduler {
    fn on_frame_start(&mut self, _frame_index: u64) {}

    fn on_slot(&mut self, draw: &ChannelDraw, queues: &[SuView]) -> SlotDecision {
        match self.order.iter().copied().find(|&i| queues[i].nonempty) {
            Some(i) => SlotDecision::transmit(i, draw, &self.power, self.base),
            None => SlotDecision::idle(),
        }
    }

    fn on_frame_end(&mut self, _record: &FrameRecord) {}

    fn name(&self) -> &'static str {
        "static-priority"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csma_trivial_cases() {
        let mut rng = substream(1, Domain::Policy, 0);
        assert_eq!(csma_select(&[false, false], &mut rng), None);
        for _ in 0..100 {
            assert_eq!(csma_select(&[false, true, false], &mut rng), Some(1));
        }
    }

    #[test]
    fn csma_is_uniform_over_nonempty() {
        let mut rng = substream(2, Domain::Policy, 0);
        let trials = 100_000;
        let mut hits = [0u32; 2];
        for _ in 0..trials {
            match csma_select(&[true, false, true], &mut rng) {
                Some(0) => hits[0] += 1,
                Some(2) => hits[1] += 1,
                other => panic!("unexpected pick {other:?}"),
            }
        }
        let freq = hits[0] as f64 / trials as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn cnc_argmax_cases() {
        let policy = PowerPolicy::interference_capped(20.0, 100.0);
        let view = |len: usize| SuView {
            nonempty: len > 0,
            len,
        };
        // Equal rates (same gains): the longer queue wins.
        let draw = ChannelDraw {
            gamma: vec![1.0, 1.0],
            g: vec![0.1, 0.1],
        };
        assert_eq!(
            cnc_select(&[view(5), view(2)], &draw, &policy, LogBase::Two),
            Some(0)
        );
        // Equal queues: the better instantaneous rate wins.
        let draw = ChannelDraw {
            gamma: vec![0.01, 0.7],
            g: vec![0.1, 0.1],
        };
        assert_eq!(
            cnc_select(&[view(3), view(3)], &draw, &policy, LogBase::Two),
            Some(1)
        );
        // Mixed weights: 5 * 1 = 5 beats 2 * 2 = 4 (rates 1 and 2 from
        // gamma = 0.01 and 0.03 at power 100).
        let draw = ChannelDraw {
            gamma: vec![0.01, 0.03],
            g: vec![0.1, 0.1],
        };
        assert_eq!(
            cnc_select(&[view(5), view(2)], &draw, &policy, LogBase::Two),
            Some(0)
        );
        assert_eq!(
            cnc_select(&[view(0), view(0)], &draw, &policy, LogBase::Two),
            None
        );
    }

    #[test]
    fn static_priority_respects_order() {
        let policy = PowerPolicy::interference_capped(20.0, 100.0);
        let mut sched =
            StaticPriorityScheduler::new(vec![1, 0], policy, LogBase::Two);
        let draw = ChannelDraw {
            gamma: vec![1.0, 1.0],
            g: vec![0.1, 0.1],
        };
        let views = [
            SuView {
                nonempty: true,
                len: 4,
            },
            SuView {
                nonempty: true,
                len: 1,
            },
        ];
        assert_eq!(sched.on_slot(&draw, &views).su, Some(1));
    }
}
