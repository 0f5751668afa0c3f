//! The DOIC frame-based scheduler.
//!
//! Each SU carries a virtual queue `Y_i` measuring accumulated delay in
//! excess of an auxiliary per-frame target `r_i`. At the start of every
//! frame the SUs are sorted by `Y_i / E[s_i]` descending (a c·mu index
//! rule), and within the frame the highest-priority non-empty SU wins
//! each slot. At frame end the auxiliary variable flips bang-bang —
//! `r_i = d_i` when `V < Y_i * lambda_i`, else 0 — and each `Y_i`
//! absorbs the frame's per-packet delays:
//!
//! ```text
//! Y_i <- max(0, Y_i + sum_{j in frame arrivals} (W_j - r_i))
//! ```
//!
//! Keeping every `Y_i(K)/K` sinking to zero forces the time-average
//! delay of SU `i` under its bound `d_i`; the control parameter `V`
//! trades how aggressively the sum of delays is minimized against how
//! fast those ratios converge.

use crate::channel::ChannelDraw;
use crate::power::{LogBase, PowerPolicy};

use super::{FrameRecord, Scheduler, SlotDecision, SuView};

/// One SU's virtual delay queue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualQueue {
    /// Accumulated excess delay, in slot units; never negative.
    pub y: f64,
    /// This frame's auxiliary target; either 0 or the delay bound.
    pub r_current: f64,
}

/// Descending priority order over SU indices, fixed for one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityList {
    pub order: Vec<usize>,
}

/// Control parameter and the per-SU expected service times that weight
/// the priority sort.
#[derive(Debug, Clone, PartialEq)]
pub struct DoicParams {
    pub v: f64,
    /// `E[s_i]` under the reference power rule, from the rate law.
    pub expected_service: Vec<f64>,
}

/// Sorts SUs by `y_i / expected_service_i` descending; ties break by
/// ascending SU index. Scaling all `y` by a positive constant leaves
/// the permutation unchanged.
pub fn sort_priorities(y: &[f64], expected_service: &[f64]) -> PriorityList {
    assert_eq!(y.len(), expected_service.len());
    debug_assert!(expected_service.iter().all(|&s| s > 0.0));
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| {
        let ka = y[a] / expected_service[a];
        let kb = y[b] / expected_service[b];
        kb.total_cmp(&ka).then(a.cmp(&b))
    });
    PriorityList { order }
}

/// Highest-priority SU with a non-empty buffer; `None` if all empty.
pub fn select_transmitter(list: &PriorityList, nonempty: &[bool]) -> Option<usize> {
    list.order.iter().copied().find(|&i| nonempty[i])
}

/// Bang-bang auxiliary update: `d_i` when `V < y_i * lambda_i`, else 0.
/// The comparison is strict, so the boundary case yields 0.
pub fn update_auxiliary(y_i: f64, lambda_i: f64, v: f64, d_i: f64) -> f64 {
    if v < y_i * lambda_i {
        d_i
    } else {
        0.0
    }
}

/// Virtual-queue update over one closed frame: every packet that
/// arrived in the frame contributes its delay minus the auxiliary
/// target, and the result is projected at zero.
pub fn update_virtual_queue(y_i: f64, frame_delays: &[u64], r_i: f64) -> f64 {
    let excess: f64 = frame_delays
        .iter()
        .map(|&w| w as f64 - r_i)
        .sum();
    (y_i + excess).max(0.0)
}

/// Diagnostic series `Y_i(K)/K` per SU from a per-frame `Y` history;
/// each ratio sinking towards zero is the stability proxy.
pub fn mean_rate_stability_series(y_history: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if y_history.is_empty() {
        return Vec::new();
    }
    let n = y_history[0].len();
    let mut series = vec![Vec::with_capacity(y_history.len()); n];
    for (k, y) in y_history.iter().enumerate() {
        let frames = (k + 1) as f64;
        for (i, &yi) in y.iter().enumerate() {
            series[i].push(yi / frames);
        }
    }
    series
}

/// The DOIC scheduler state for one replication.
pub struct DoicScheduler {
    params: DoicParams,
    lambdas: Vec<f64>,
    delay_bounds: Vec<f64>,
    queues: Vec<VirtualQueue>,
    list: PriorityList,
    power: PowerPolicy,
    base: LogBase,
    y_cache: Vec<f64>,
}

impl DoicScheduler {
    pub fn new(
        params: DoicParams,
        lambdas: Vec<f64>,
        delay_bounds: Vec<f64>,
        power: PowerPolicy,
        base: LogBase,
    ) -> Self {
        let n = params.expected_service.len();
        assert!(params.v > 0.0);
        assert_eq!(lambdas.len(), n);
        assert_eq!(delay_bounds.len(), n);
        let queues = vec![
            VirtualQueue {
                y: 0.0,
                r_current: 0.0,
            };
            n
        ];
        // First frame: all-zero backlog, so the sort is the index order.
        let list = sort_priorities(&vec![0.0; n], &params.expected_service);
        Self {
            params,
            lambdas,
            delay_bounds,
            queues,
            list,
            power,
            base,
            y_cache: vec![0.0; n],
        }
    }

    pub fn priority_list(&self) -> &PriorityList {
        &self.list
    }

    fn y_snapshot(&self) -> Vec<f64> {
        self.queues.iter().map(|q| q.y).collect()
    }
}

impl Scheduler for DoicScheduler {
    fn on_frame_start(&mut self, _frame_index: u64) {
        let y = self.y_snapshot();
        self.list = sort_priorities(&y, &self.params.expected_service);
    }

    fn on_slot(&mut self, draw: &ChannelDraw, queues: &[SuView]) -> SlotDecision {
        let nonempty: Vec<bool> = queues.iter().map(|q| q.nonempty).collect();
        match select_transmitter(&self.list, &nonempty) {
            Some(i) => SlotDecision::transmit(i, draw, &self.power, self.base),
            None => SlotDecision::idle(),
        }
    }

    fn on_frame_end(&mut self, record: &FrameRecord) {
        for (i, q) in self.queues.iter_mut().enumerate() {
            let r = update_auxiliary(q.y, self.lambdas[i], self.params.v, self.delay_bounds[i]);
            q.r_current = r;
            q.y = update_virtual_queue(q.y, &record.delays[i], r);
            self.y_cache[i] = q.y;
        }
    }

    fn virtual_queues(&self) -> Option<&[f64]> {
        Some(&self.y_cache)
    }

    fn name(&self) -> &'static str {
        "doic"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_backlog_sorts_by_index() {
        let list = sort_priorities(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]);
        assert_eq!(list.order, vec![0, 1, 2]);
    }

    #[test]
    fn sort_uses_backlog_over_service_ratio() {
        // Ratios 10/1 = 10 and 20/4 = 5: the first SU leads.
        let list = sort_priorities(&[10.0, 20.0], &[1.0, 4.0]);
        assert_eq!(list.order, vec![0, 1]);
    }

    #[test]
    fn sort_is_scale_invariant() {
        let y = [3.0, 8.0, 1.0, 5.0];
        let es = [2.0, 3.0, 1.0, 4.0];
        let base = sort_priorities(&y, &es);
        for &c in &[0.1, 7.0, 1e6] {
            let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
            assert_eq!(sort_priorities(&scaled, &es), base);
        }
    }

    #[test]
    fn select_skips_empty_buffers() {
        let list = PriorityList {
            order: vec![2, 0, 1],
        };
        assert_eq!(select_transmitter(&list, &[true, false, true]), Some(2));
        assert_eq!(select_transmitter(&list, &[true, true, false]), Some(0));
        assert_eq!(select_transmitter(&list, &[false, false, false]), None);
        assert_eq!(select_transmitter(&list, &[false, true, false]), Some(1));
    }

    #[test]
    fn auxiliary_rule_is_strict_bang_bang() {
        // y * lambda = 150 > V = 100: target on.
        assert_eq!(update_auxiliary(300.0, 0.5, 100.0, 45.0), 45.0);
        assert_eq!(update_auxiliary(0.0, 0.5, 100.0, 45.0), 0.0);
        // Boundary V = y * lambda exactly: strict comparison, target off.
        assert_eq!(update_auxiliary(200.0, 0.5, 100.0, 45.0), 0.0);
    }

    #[test]
    fn virtual_queue_update_cases() {
        assert_eq!(update_virtual_queue(0.0, &[50], 45.0), 5.0);
        assert_eq!(update_virtual_queue(3.0, &[], 123.0), 3.0);
        // Projection at zero.
        assert_eq!(update_virtual_queue(2.0, &[10, 10], 45.0), 0.0);
    }

    #[test]
    fn stability_series_shapes() {
        assert!(mean_rate_stability_series(&[]).is_empty());
        let history = vec![vec![0.0, 4.0], vec![0.0, 4.0], vec![0.0, 4.0]];
        let series = mean_rate_stability_series(&history);
        assert_eq!(series[0], vec![0.0, 0.0, 0.0]);
        // A bounded Y gives a ratio decaying like C/K.
        assert_eq!(series[1], vec![4.0, 2.0, 4.0 / 3.0]);
    }

    #[test]
    fn priority_list_is_fixed_within_a_frame() {
        let params = DoicParams {
            v: 10.0,
            expected_service: vec![2.0, 2.0],
        };
        let mut sched = DoicScheduler::new(
            params,
            vec![0.1, 0.1],
            vec![50.0, 50.0],
            PowerPolicy::interference_capped(20.0, 100.0),
            LogBase::Two,
        );
        sched.on_frame_start(0);
        let before = sched.priority_list().clone();
        let draw = ChannelDraw {
            gamma: vec![1.0, 1.0],
            g: vec![0.1, 0.1],
        };
        let views = [
            SuView {
                nonempty: true,
                len: 1,
            },
            SuView {
                nonempty: true,
                len: 3,
            },
        ];
        for _ in 0..100 {
            let _ = sched.on_slot(&draw, &views);
            assert_eq!(sched.priority_list(), &before);
        }
        // Frame end with unequal delays reshuffles on the next start.
        sched.on_frame_end(&FrameRecord {
            index: 0,
            idle_len: 1,
            busy_len: 100,
            delays: vec![vec![], vec![30, 40]],
        });
        sched.on_frame_start(1);
        assert_eq!(sched.priority_list().order, vec![1, 0]);
    }
}
