//! Independent brute-force validators.
//!
//! Nothing here shares queue, frame or virtual-queue logic with the
//! engine: the replay checker re-implements those updates from scratch
//! on a logged trace, the Monte Carlo estimator samples packet
//! transmissions directly from the gain distributions, and the
//! enumerator walks every rate sequence of a small discrete law.

use rand::Rng;
use thiserror::Error;

use crate::analytics::{priority_delay, RateLaw, ServiceMoments, SurvivalSeries};
use crate::channel::GainDistribution;
use crate::engine::Trace;
use crate::policy::sort_priorities;
use crate::power::{rate_in, LogBase, PowerPolicy};
use crate::rng::{substream, Domain};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("enumeration supports at most 4 rate points, got {0}")]
    SupportTooLarge(usize),
    #[error("enumeration supports packets up to 20 bits, got {0}")]
    PacketTooLarge(f64),
    #[error("enumeration exceeded the node budget of {0}")]
    NodeBudget(u64),
    #[error("rate law never accumulates {0} bits")]
    NoProgress(f64),
}

const NODE_BUDGET: u64 = 10_000_000;

// ---------------------------------------------------------------------------
// Monte Carlo service moments
// ---------------------------------------------------------------------------

/// Sample moments of the packet service time with standard errors.
#[derive(Debug, Clone, Copy)]
pub struct McMoments {
    pub mean: f64,
    pub second: f64,
    pub se_mean: f64,
    pub se_second: f64,
    pub samples: u64,
}

/// Estimates `E[s]` and `E[s^2]` by simulating independent packet
/// transmissions: draw per-slot gains, apply the power policy, and
/// count slots until the cumulative rate reaches `l_bits`.
pub fn mc_service_moments(
    gamma_dist: &GainDistribution,
    g_dist: &GainDistribution,
    policy: &PowerPolicy,
    base: LogBase,
    l_bits: f64,
    samples: u64,
    seed: u64,
) -> McMoments {
    assert!(samples >= 1);
    let mut gamma_rng = substream(seed, Domain::Oracle, 0);
    let mut g_rng = substream(seed, Domain::Oracle, 1);
    let mut sum_s = 0.0;
    let mut sum_s2 = 0.0;
    let mut sum_s4 = 0.0;
    for _ in 0..samples {
        let mut carried = 0.0;
        let mut slots = 0u64;
        while carried < l_bits {
            let gamma = gamma_dist.sample(&mut gamma_rng);
            let g = g_dist.sample(&mut g_rng);
            carried += rate_in(policy.power_for(g), gamma, base);
            slots += 1;
        }
        let s = slots as f64;
        sum_s += s;
        sum_s2 += s * s;
        sum_s4 += s * s * s * s;
    }
    let n = samples as f64;
    let mean = sum_s / n;
    let second = sum_s2 / n;
    let fourth = sum_s4 / n;
    let var_s = (second - mean * mean).max(0.0);
    let var_s2 = (fourth - second * second).max(0.0);
    McMoments {
        mean,
        second,
        se_mean: (var_s / n).sqrt(),
        se_second: (var_s2 / n).sqrt(),
        samples,
    }
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration
// ---------------------------------------------------------------------------

/// Exact `(E[s], E[s^2])` by enumerating every rate sequence of a small
/// discrete law up to the stopping time.
pub fn enumerate_service_time(law: &RateLaw, l_bits: f64) -> Result<(f64, f64), OracleError> {
    if law.support().len() > 4 {
        return Err(OracleError::SupportTooLarge(law.support().len()));
    }
    if l_bits > 20.0 {
        return Err(OracleError::PacketTooLarge(l_bits));
    }
    if law.max_rate() <= 0.0 {
        return Err(OracleError::NoProgress(l_bits));
    }
    let mut nodes = 0u64;
    let mut mean = 0.0;
    let mut second = 0.0;
    walk(
        law, l_bits, 0.0, 1.0, 0, &mut nodes, &mut mean, &mut second,
    )?;
    Ok((mean, second))
}

#[allow(clippy::too_many_arguments)]
fn walk(
    law: &RateLaw,
    l_bits: f64,
    carried: f64,
    prob: f64,
    depth: u64,
    nodes: &mut u64,
    mean: &mut f64,
    second: &mut f64,
) -> Result<(), OracleError> {
    for (&r, &p) in law.support().iter().zip(law.probs()) {
        *nodes += 1;
        if *nodes > NODE_BUDGET {
            return Err(OracleError::NodeBudget(NODE_BUDGET));
        }
        let q = prob * p;
        if q == 0.0 {
            continue;
        }
        let total = carried + r;
        let slots = depth + 1;
        if total >= l_bits {
            let s = slots as f64;
            *mean += q * s;
            *second += q * s * s;
        } else {
            walk(law, l_bits, total, q, slots, nodes, mean, second)?;
        }
    }
    Ok(())
}

/// The two-index sum over slot pairs, evaluated literally: for each
/// `(t1, t2)` in `[1, L]^2` accumulate the probability that slot
/// `max(t1, t2)` is still needed. Validates the collapsed
/// `sum (2m-1) q(m)` form.
pub fn literal_second_moment(series: &SurvivalSeries, l_slots: usize) -> f64 {
    let mut total = 0.0;
    for t1 in 1..=l_slots {
        for t2 in 1..=l_slots {
            total += series.q(t1.max(t2));
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Trace replay
// ---------------------------------------------------------------------------

/// Re-simulates a full-log trace with an independent implementation of
/// the queue, frame and virtual-queue updates, and diffs every reported
/// statistic. Returns the list of mismatches (empty = pass).
pub fn replay_verify(trace: &Trace) -> Result<(), Vec<String>> {
    let mut mismatches = Vec::new();
    let cfg = &trace.config;
    let n = cfg.n;
    let l = cfg.packet_bits;

    // Independent queue state: arrival slots plus head-of-line residue.
    let mut queues: Vec<std::collections::VecDeque<u64>> =
        vec![std::collections::VecDeque::new(); n];
    let mut remaining = vec![0.0f64; n];
    let mut y = vec![0.0f64; n];
    let mut arrived = vec![0u64; n];
    let mut departed = vec![0u64; n];
    let mut delay_sum = vec![0.0f64; n];
    let mut delay_count = vec![0u64; n];
    let mut q_sum = vec![0u64; n];
    let mut q_slots = 0u64;

    let mut frame_idx = 0u64;
    let mut idle_len = 0u64;
    let mut busy_len = 0u64;
    let mut in_busy = false;
    let mut frame_delays: Vec<Vec<u64>> = vec![Vec::new(); n];
    let mut frames_closed = 0usize;

    for (t, slot) in trace.slots.iter().enumerate() {
        let t = t as u64;
        for i in 0..n {
            if slot.arrivals[i] {
                if queues[i].is_empty() {
                    remaining[i] = l;
                }
                queues[i].push_back(t);
                arrived[i] += 1;
            }
        }
        if frame_idx >= cfg.warmup_frames {
            for i in 0..n {
                q_sum[i] += queues[i].len() as u64;
            }
            q_slots += 1;
        }
        let any = queues.iter().any(|q| !q.is_empty());
        if any {
            in_busy = true;
            busy_len += 1;
        } else {
            idle_len += 1;
            if slot.su.is_some() {
                mismatches.push(format!("slot {t}: transmission during an idle slot"));
            }
        }
        if let Some(i) = slot.su {
            if queues[i].is_empty() {
                mismatches.push(format!("slot {t}: SU {i} scheduled while empty"));
                continue;
            }
            // All shipped policies use the capped power rule; re-derive
            // and compare against the log.
            let p = crate::power::optimal_power(slot.g[i], cfg.i_inst, cfg.p_max);
            if (p - slot.power).abs() > 1e-9 * cfg.p_max {
                mismatches.push(format!(
                    "slot {t}: logged power {} vs recomputed {p}",
                    slot.power
                ));
            }
            let r = rate_in(slot.power, slot.gamma[i], cfg.log_base);
            if (r - slot.rate_bits).abs() > 1e-9 * r.max(1.0) {
                mismatches.push(format!(
                    "slot {t}: logged rate {} vs recomputed {r}",
                    slot.rate_bits
                ));
            }
            if slot.power * slot.g[i] > cfg.i_inst || slot.power > cfg.p_max {
                mismatches.push(format!("slot {t}: constraint violation in log"));
            }
            let sent = slot.rate_bits.min(remaining[i]);
            remaining[i] -= sent;
            if remaining[i] <= 0.0 {
                let arr = queues[i].pop_front().expect("non-empty");
                let delay = t - arr + 1;
                departed[i] += 1;
                frame_delays[i].push(delay);
                if frame_idx >= cfg.warmup_frames {
                    delay_sum[i] += delay as f64;
                    delay_count[i] += 1;
                }
                remaining[i] = if queues[i].is_empty() { 0.0 } else { l };
            }
        }
        if in_busy && queues.iter().all(|q| q.is_empty()) {
            // Frame closes; check boundaries and recompute Y.
            if let Some(logged) = trace.frames.get(frames_closed) {
                if logged.idle_len != idle_len || logged.busy_len != busy_len {
                    mismatches.push(format!(
                        "frame {frame_idx}: boundaries ({idle_len}, {busy_len}) vs logged ({}, {})",
                        logged.idle_len, logged.busy_len
                    ));
                }
                for i in 0..n {
                    let r = if cfg.v < y[i] * cfg.lambdas[i] {
                        cfg.delay_bounds[i]
                    } else {
                        0.0
                    };
                    let excess: f64 =
                        frame_delays[i].iter().map(|&w| w as f64 - r).sum();
                    y[i] = (y[i] + excess).max(0.0);
                }
                if let Some(logged_y) = &logged.y_after {
                    for i in 0..n {
                        if (y[i] - logged_y[i]).abs() > 1e-9 {
                            mismatches.push(format!(
                                "frame {frame_idx}: Y[{i}] = {} vs logged {}",
                                y[i], logged_y[i]
                            ));
                        }
                    }
                }
            } else {
                mismatches.push(format!("frame {frame_idx}: missing from the log"));
            }
            frames_closed += 1;
            frame_idx += 1;
            idle_len = 0;
            busy_len = 0;
            in_busy = false;
            for d in &mut frame_delays {
                d.clear();
            }
        }
    }

    let report = &trace.report;
    if report.frames != frames_closed as u64 {
        mismatches.push(format!(
            "frame count {} vs replayed {frames_closed}",
            report.frames
        ));
    }
    for i in 0..n {
        let su = &report.per_su[i];
        if su.arrived != arrived[i] || su.departed != departed[i] {
            mismatches.push(format!(
                "SU {i}: counts ({}, {}) vs replayed ({}, {})",
                su.arrived, su.departed, arrived[i], departed[i]
            ));
        }
        if su.in_system != queues[i].len() as u64 {
            mismatches.push(format!("SU {i}: in-system count mismatch"));
        }
        let w = (delay_count[i] > 0).then(|| delay_sum[i] / delay_count[i] as f64);
        match (su.w_bar, w) {
            (Some(a), Some(b)) if (a - b).abs() > 1e-9 * b.max(1.0) => {
                mismatches.push(format!("SU {i}: W-bar {a} vs replayed {b}"));
            }
            (Some(_), None) | (None, Some(_)) => {
                mismatches.push(format!("SU {i}: W-bar presence mismatch"));
            }
            _ => {}
        }
        let q = (q_slots > 0).then(|| q_sum[i] as f64 / q_slots as f64);
        match (su.q_time_avg, q) {
            (Some(a), Some(b)) if (a - b).abs() > 1e-9 => {
                mismatches.push(format!("SU {i}: Q-bar {a} vs replayed {b}"));
            }
            (Some(_), None) | (None, Some(_)) => {
                mismatches.push(format!("SU {i}: Q-bar presence mismatch"));
            }
            _ => {}
        }
    }

    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(mismatches)
    }
}

// ---------------------------------------------------------------------------
// Exhaustive priority comparison
// ---------------------------------------------------------------------------

/// Outcome of comparing the c·mu sort against every permutation.
#[derive(Debug, Clone)]
pub struct CmuCheck {
    pub cmu_order: Vec<usize>,
    pub cmu_cost: f64,
    pub best_order: Vec<usize>,
    pub best_cost: f64,
    /// True when the c·mu order attains the minimum cost (within 1e-9
    /// relative).
    pub cmu_is_optimal: bool,
}

/// Evaluates the backlog-weighted delay cost
/// `sum_j y[pi_j] * lambda[pi_j] * W_{pi_j}(pi)` of the c·mu order
/// against an exhaustive search over all `n!` priority lists
/// (`n <= 4`). Unstable or infeasible permutations are skipped.
/// Discrepancies are reported, not asserted.
pub fn cmu_priority_check(y: &[f64], moments: &[ServiceMoments]) -> Option<CmuCheck> {
    let n = y.len();
    assert!(n <= 4, "exhaustive check limited to 4 SUs");
    let expected: Vec<f64> = moments.iter().map(|m| m.mean_slots).collect();
    let cmu_order = sort_priorities(y, &expected).order;

    let cost = |order: &[usize]| -> Option<f64> {
        let ordered: Vec<ServiceMoments> = order.iter().map(|&i| moments[i]).collect();
        let mut total = 0.0;
        for (j, &i) in order.iter().enumerate() {
            let w = priority_delay(&ordered, j).ok()?;
            total += y[i] * moments[i].lambda() * w;
        }
        Some(total)
    };

    let cmu_cost = cost(&cmu_order)?;
    let mut best_order = cmu_order.clone();
    let mut best_cost = cmu_cost;
    let mut order: Vec<usize> = (0..n).collect();
    permutations(&mut order, 0, &mut |perm| {
        if let Some(c) = cost(perm) {
            if c < best_cost {
                best_cost = c;
                best_order = perm.to_vec();
            }
        }
    });
    Some(CmuCheck {
        cmu_is_optimal: cmu_cost <= best_cost * (1.0 + 1e-9) + 1e-12,
        cmu_order,
        cmu_cost,
        best_order,
        best_cost,
    })
}

fn permutations(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, visit);
        items.swap(k, i);
    }
}

// ---------------------------------------------------------------------------

/// Picks a uniformly random feasible power and checks it against the
/// cap rule; helper for dominance-style randomized tests.
pub fn random_feasible_power(g: f64, i_inst: f64, p_max: f64, rng: &mut impl Rng) -> f64 {
    loop {
        let p: f64 = rng.random_range(0.0..p_max);
        if p * g <= i_inst {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::survival_series;
    use crate::config::SimConfig;
    use crate::engine::run_traced;

    fn law(points: &[(f64, f64)]) -> RateLaw {
        RateLaw::from_points(points).unwrap()
    }

    #[test]
    fn mc_is_exact_for_deterministic_rates() {
        // Constant gains: g = 0.2 caps power at 100, gamma = 2.55 gives
        // rate 8; L = 24 needs exactly 3 slots.
        let gamma = GainDistribution::constant(2.55).unwrap();
        let g = GainDistribution::constant(0.2).unwrap();
        let policy = PowerPolicy::interference_capped(20.0, 100.0);
        let mc = mc_service_moments(&gamma, &g, &policy, LogBase::Two, 24.0, 10_000, 5);
        assert_eq!(mc.mean, 3.0);
        assert_eq!(mc.second, 9.0);
        assert_eq!(mc.se_mean, 0.0);
        assert_eq!(mc.se_second, 0.0);
    }

    #[test]
    fn enumeration_hand_cases() {
        let (m, s2) = enumerate_service_time(&law(&[(1.0, 1.0)]), 5.0).unwrap();
        assert_eq!((m, s2), (5.0, 25.0));
        // L = 2 over {1, 2}: s = 1 w.p. 1/2, s = 2 w.p. 1/2.
        let (m, s2) = enumerate_service_time(&law(&[(1.0, 0.5), (2.0, 0.5)]), 2.0).unwrap();
        assert!((m - 1.5).abs() < 1e-12);
        assert!((s2 - 2.5).abs() < 1e-12);
        // L = 3 over {1, 2}: s = 2 w.p. 3/4, s = 3 w.p. 1/4.
        let (m, s2) = enumerate_service_time(&law(&[(1.0, 0.5), (2.0, 0.5)]), 3.0).unwrap();
        assert!((m - 2.25).abs() < 1e-12);
        assert!((s2 - 5.25).abs() < 1e-12);
    }

    #[test]
    fn enumeration_guards() {
        let too_many = law(&[(1.0, 0.2), (1.5, 0.2), (2.0, 0.2), (2.5, 0.2), (3.0, 0.2)]);
        assert!(matches!(
            enumerate_service_time(&too_many, 5.0),
            Err(OracleError::SupportTooLarge(5))
        ));
        assert!(matches!(
            enumerate_service_time(&law(&[(1.0, 1.0)]), 25.0),
            Err(OracleError::PacketTooLarge(_))
        ));
        // Four closely spaced points at L = 20 blow the node budget.
        let dense = law(&[(1.0, 0.25), (1.01, 0.25), (1.02, 0.25), (1.03, 0.25)]);
        assert!(matches!(
            enumerate_service_time(&dense, 20.0),
            Err(OracleError::NodeBudget(_))
        ));
    }

    #[test]
    fn mc_agrees_with_enumeration_for_two_point_law() {
        // gamma in {0.01, 0.03} at power 100 gives rates {1, 2}; L = 3.
        let gamma =
            GainDistribution::discrete_table(vec![(0.01, 0.5), (0.03, 0.5)]).unwrap();
        let g = GainDistribution::constant(0.1).unwrap();
        let policy = PowerPolicy::interference_capped(20.0, 100.0);
        let mc = mc_service_moments(&gamma, &g, &policy, LogBase::Two, 3.0, 100_000, 9);
        assert!((mc.mean - 2.25).abs() < 4.0 * mc.se_mean);
        assert!((mc.second - 5.25).abs() < 4.0 * mc.se_second);
    }

    #[test]
    fn literal_double_sum_matches_collapsed() {
        let two = law(&[(1.0, 0.5), (2.0, 0.5)]);
        for l in 2..=20usize {
            let series = survival_series(&two, l as f64, None).unwrap();
            let literal = literal_second_moment(&series, l);
            assert!((literal - series.second_moment()).abs() < 1e-12);
        }
    }

    #[test]
    fn replay_passes_on_a_small_deterministic_trace() {
        let mut cfg = SimConfig::base(2);
        cfg.lambdas = vec![0.02, 0.05];
        cfg.horizon_slots = 100;
        cfg.warmup_frames = 0;
        cfg.seed = 31;
        let trace = run_traced(&cfg).unwrap();
        assert_eq!(replay_verify(&trace), Ok(()));
    }

    #[test]
    fn replay_detects_a_tiny_y_perturbation() {
        let mut cfg = SimConfig::base(2);
        cfg.lambdas = vec![0.005, 0.01];
        cfg.horizon_slots = 20_000;
        cfg.warmup_frames = 0;
        cfg.seed = 32;
        let mut trace = run_traced(&cfg).unwrap();
        let victim = trace
            .frames
            .iter_mut()
            .rev()
            .find_map(|f| f.y_after.as_mut())
            .expect("doic logs virtual queues");
        victim[0] += 1e-6;
        let err = replay_verify(&trace).unwrap_err();
        assert!(err.iter().any(|m| m.contains("Y[0]")), "{err:?}");
    }

    #[test]
    fn cmu_check_runs_and_reports() {
        let m = |mean: f64, lambda: f64| ServiceMoments {
            mean_slots: mean,
            second_moment_slots2: mean * mean * 1.3,
            rho: lambda * mean,
        };
        let moments = [m(10.0, 0.02), m(20.0, 0.01), m(15.0, 0.015)];
        let check = cmu_priority_check(&[30.0, 10.0, 20.0], &moments).unwrap();
        assert!(check.best_cost <= check.cmu_cost * (1.0 + 1e-12));
        assert_eq!(check.cmu_order.len(), 3);
    }
}
