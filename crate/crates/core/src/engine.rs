//! The slot-by-slot simulation loop.
//!
//! Each slot: draw channels, apply arrivals, classify the slot (idle
//! iff every buffer is empty after arrivals), let the scheduler pick a
//! transmitter, audit the decision against the interference and power
//! constraints, serve, and account statistics.
//!
//! Time is segmented into frames: one idle period (possibly empty)
//! followed by one busy period that ends when the system drains. A
//! frame closes at the end of the busy slot that leaves all buffers
//! empty, so every packet arriving within a frame also departs within
//! it — which is what makes the per-frame virtual-queue update well
//! defined. The trailing incomplete frame at the horizon contributes
//! its departed packets to the delay statistics but triggers no
//! virtual-queue update.

use thiserror::Error;

use crate::analytics::{mean_service_time, rate_law, AnalyticsError};
use crate::channel::{ChannelDraw, ChannelSampler};
use crate::config::{ConfigError, PolicyKind, SimConfig};
use crate::policy::{
    CncScheduler, CsmaScheduler, DoicParams, DoicScheduler, FrameRecord, Scheduler, SlotDecision,
    StaticPriorityScheduler, SuView,
};
use crate::queueing::{packet_delay, SuState};
use crate::rng::{substream, Domain};

/// `Y_i(K)/K` level below which a virtual queue counts as settled.
pub const STABILITY_THRESHOLD: f64 = 0.05;

/// Hard multiplier on the horizon when `min_frames` extends a run.
const EXTENSION_CAP: u64 = 20;

/// Decimated stability series capacity.
const SERIES_CAPACITY: usize = 2048;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("analytics failed: {0}")]
    Analytics(#[from] AnalyticsError),
    #[error("audit failure at slot {slot}: {detail}")]
    Audit { slot: u64, detail: String },
}

/// Verdict of the per-slot constraint audit. The engine re-checks every
/// decision independently of how the policy produced it, so custom
/// policies are policed too.
pub fn audit_slot(decision: &SlotDecision, draw: &ChannelDraw, i_inst: f64, p_max: f64) -> bool {
    match decision.su {
        None => decision.power == 0.0,
        Some(i) => {
            i < draw.g.len() && decision.power <= p_max && decision.power * draw.g[i] <= i_inst
        }
    }
}

/// Per-SU outcome of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SuReport {
    pub arrived: u64,
    pub departed: u64,
    pub in_system: u64,
    /// Departures inside the measurement window (post-warmup frames).
    pub measured: u64,
    /// Time-average delay of measured packets, in slots.
    pub w_bar: Option<f64>,
    /// Time-average queue length over the measurement window, sampled
    /// after arrivals and before service.
    pub q_time_avg: Option<f64>,
}

/// Everything a run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub policy: PolicyKind,
    pub slots: u64,
    pub frames: u64,
    pub per_su: Vec<SuReport>,
    /// Sum of per-SU average delays; `None` when any SU has no
    /// measured packets.
    pub sum_w_bar: Option<f64>,
    /// Final `Y_i(K)/K` per SU, when the policy keeps virtual queues.
    pub y_over_k_final: Option<Vec<f64>>,
    /// Decimated `(K, max_i Y_i(K)/K)` series.
    pub stability_series: Vec<(u64, f64)>,
    /// First frame index after which `max_i Y_i(K)/K` stayed below
    /// [`STABILITY_THRESHOLD`] for the rest of the run; `None` if it
    /// never settled or the policy has no virtual queues.
    pub frames_to_stability: Option<u64>,
    pub audit_checks: u64,
    /// True when a queue exceeded the cap and the run stopped early.
    pub truncated_unstable: bool,
}

impl SimReport {
    pub fn w_bar(&self, i: usize) -> Option<f64> {
        self.per_su[i].w_bar
    }
}

/// Per-slot record for trace replay.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotLog {
    pub gamma: Vec<f64>,
    pub g: Vec<f64>,
    pub arrivals: Vec<bool>,
    pub su: Option<usize>,
    pub power: f64,
    pub rate_bits: f64,
}

/// Per-frame record for trace replay.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLog {
    pub index: u64,
    pub idle_len: u64,
    pub busy_len: u64,
    /// Virtual queues right after this frame's update, if the policy
    /// keeps them.
    pub y_after: Option<Vec<f64>>,
}

/// A full per-slot log of one run, sufficient to recompute every queue
/// trajectory, delay, frame boundary and virtual-queue update.
#[derive(Debug, Clone)]
pub struct Trace {
    pub config: SimConfig,
    pub slots: Vec<SlotLog>,
    pub frames: Vec<FrameLog>,
    pub report: SimReport,
}

/// Precomputed per-config inputs, reusable across replications of the
/// same sweep point.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// `E[s_i]` under the reference power rule (`L / E[R_i]`), used as
    /// the DOIC sort weight.
    pub expected_service: Vec<f64>,
}

pub fn prepare(config: &SimConfig) -> Result<Prepared, EngineError> {
    config.validate()?;
    let policy = config.power_policy();
    let mut expected_service = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let law = rate_law(
            &config.gamma[i],
            &config.g[i],
            &policy,
            config.grid_size,
            config.log_base,
        );
        expected_service.push(mean_service_time(&law, config.packet_bits)?);
    }
    Ok(Prepared { expected_service })
}

/// Runs one replication.
pub fn run(config: &SimConfig) -> Result<SimReport, EngineError> {
    let prepared = prepare(config)?;
    Ok(run_prepared(config, &prepared, false)?.0)
}

/// Runs one replication with full per-slot logging.
pub fn run_traced(config: &SimConfig) -> Result<Trace, EngineError> {
    let prepared = prepare(config)?;
    let (report, trace) = run_prepared(config, &prepared, true)?;
    let mut trace = trace.expect("trace requested");
    trace.report = report;
    Ok(trace)
}

fn build_scheduler(config: &SimConfig, prepared: &Prepared) -> Box<dyn Scheduler> {
    let power = config.power_policy();
    match config.policy {
        PolicyKind::Doic => Box::new(DoicScheduler::new(
            DoicParams {
                v: config.v,
                expected_service: prepared.expected_service.clone(),
            },
            config.lambdas.clone(),
            config.delay_bounds.clone(),
            power,
            config.log_base,
        )),
        PolicyKind::Csma => Box::new(CsmaScheduler::new(config.seed, power, config.log_base)),
        PolicyKind::Cnc => Box::new(CncScheduler::new(power, config.log_base)),
        PolicyKind::StaticPriority => Box::new(StaticPriorityScheduler::new(
            config
                .static_order
                .clone()
                .unwrap_or_else(|| (0..config.n).collect()),
            power,
            config.log_base,
        )),
    }
}

struct FrameAccum {
    index: u64,
    idle_len: u64,
    busy_len: u64,
    delays: Vec<Vec<u64>>,
}

impl FrameAccum {
    fn new(index: u64, n: usize) -> Self {
        Self {
            index,
            idle_len: 0,
            busy_len: 0,
            delays: vec![Vec::new(); n],
        }
    }

    fn finish(self) -> FrameRecord {
        FrameRecord {
            index: self.index,
            idle_len: self.idle_len,
            busy_len: self.busy_len,
            delays: self.delays,
        }
    }
}

/// Decimated stability-series recorder: keeps at most
/// [`SERIES_CAPACITY`] points by doubling its stride when full.
struct SeriesRecorder {
    points: Vec<(u64, f64)>,
    stride: u64,
}

impl SeriesRecorder {
    fn new() -> Self {
        Self {
            points: Vec::new(),
            stride: 1,
        }
    }

    fn push(&mut self, k: u64, value: f64) {
        if k % self.stride != 0 {
            return;
        }
        self.points.push((k, value));
        if self.points.len() >= SERIES_CAPACITY {
            self.stride *= 2;
            let stride = self.stride;
            self.points.retain(|&(k, _)| k % stride == 0);
        }
    }
}

pub fn run_prepared(
    config: &SimConfig,
    prepared: &Prepared,
    traced: bool,
) -> Result<(SimReport, Option<Trace>), EngineError> {
    config.validate()?;
    let n = config.n;
    let mut sampler = ChannelSampler::new(config.channel_model(), config.seed);
    let mut arrival_rngs: Vec<_> = (0..n)
        .map(|i| substream(config.seed, Domain::Arrival, i as u64))
        .collect();
    let mut scheduler = build_scheduler(config, prepared);
    let mut sus: Vec<SuState> = (0..n)
        .map(|i| {
            SuState::new(
                config.lambdas[i],
                config.delay_bounds[i],
                config.packet_bits,
            )
        })
        .collect();

    let mut slot_logs = Vec::new();
    let mut frame_logs = Vec::new();

    let mut frame = FrameAccum::new(0, n);
    let mut in_busy = false;
    scheduler.on_frame_start(0);

    let mut frames_completed: u64 = 0;
    let mut delay_sums = vec![0.0f64; n];
    let mut measured = vec![0u64; n];
    let mut q_sums = vec![0u64; n];
    let mut q_slots: u64 = 0;
    let mut audit_checks: u64 = 0;
    let mut truncated_unstable = false;
    let mut series = SeriesRecorder::new();
    let mut last_violation: Option<u64> = None;
    let mut final_y: Option<Vec<f64>> = None;

    let hard_cap = config.horizon_slots.saturating_mul(EXTENSION_CAP);
    let mut slots_run: u64 = 0;
    let mut t: u64 = 0;
    loop {
        if t >= config.horizon_slots && frames_completed >= config.min_frames {
            break;
        }
        if t >= hard_cap {
            break;
        }

        let draw = sampler.sample_slot();
        let mut arrivals = vec![false; n];
        for (i, su) in sus.iter_mut().enumerate() {
            arrivals[i] = su.arrive(t, &mut arrival_rngs[i]) == 1;
        }

        let in_window = frame.index >= config.warmup_frames;
        if in_window {
            for (i, su) in sus.iter().enumerate() {
                q_sums[i] += su.len() as u64;
            }
            q_slots += 1;
        }

        let any_nonempty = sus.iter().any(|su| !su.is_empty());
        let mut decision = SlotDecision::idle();
        if any_nonempty {
            in_busy = true;
            frame.busy_len += 1;
            let views: Vec<SuView> = sus
                .iter()
                .map(|su| SuView {
                    nonempty: !su.is_empty(),
                    len: su.len(),
                })
                .collect();
            decision = scheduler.on_slot(&draw, &views);
            audit_checks += 1;
            if !audit_slot(&decision, &draw, config.i_inst, config.p_max) {
                return Err(EngineError::Audit {
                    slot: t,
                    detail: format!("decision {decision:?} violates the slot constraints"),
                });
            }
            if let Some(i) = decision.su {
                if sus[i].is_empty() {
                    return Err(EngineError::Audit {
                        slot: t,
                        detail: format!("scheduler picked empty SU {i}"),
                    });
                }
                let departed = sus[i]
                    .serve_bits(decision.rate_bits, t)
                    .expect("non-empty checked");
                if let Some(pkt) = departed {
                    let delay = packet_delay(&pkt).expect("departed");
                    frame.delays[i].push(delay);
                    if in_window {
                        delay_sums[i] += delay as f64;
                        measured[i] += 1;
                    }
                }
            }
        } else {
            debug_assert!(!in_busy, "idle slot cannot follow busy slots mid-frame");
            frame.idle_len += 1;
        }

        if traced {
            slot_logs.push(SlotLog {
                gamma: draw.gamma.clone(),
                g: draw.g.clone(),
                arrivals: arrivals.clone(),
                su: decision.su,
                power: decision.power,
                rate_bits: decision.rate_bits,
            });
        }

        // Conservation: arrivals = departures + backlog, per SU.
        debug_assert!(sus
            .iter()
            .all(|su| su.arrived() == su.departed() + su.len() as u64));

        if in_busy && sus.iter().all(|su| su.is_empty()) {
            // The system drained: the busy period (and frame) ends here.
            let record = frame.finish();
            scheduler.on_frame_end(&record);
            frames_completed += 1;
            if let Some(y) = scheduler.virtual_queues() {
                let k = frames_completed as f64;
                let max_ratio = y.iter().fold(0.0f64, |acc, &v| acc.max(v / k));
                if max_ratio >= STABILITY_THRESHOLD {
                    last_violation = Some(frames_completed);
                }
                series.push(frames_completed, max_ratio);
                final_y = Some(y.iter().map(|&v| v / k).collect());
            }
            if traced {
                frame_logs.push(FrameLog {
                    index: record.index,
                    idle_len: record.idle_len,
                    busy_len: record.busy_len,
                    y_after: scheduler.virtual_queues().map(<[f64]>::to_vec),
                });
            }
            frame = FrameAccum::new(frames_completed, n);
            in_busy = false;
            scheduler.on_frame_start(frames_completed);
        }

        t += 1;
        slots_run = t;

        if sus.iter().any(|su| su.len() > config.queue_cap) {
            truncated_unstable = true;
            break;
        }
    }

    let per_su: Vec<SuReport> = (0..n)
        .map(|i| SuReport {
            arrived: sus[i].arrived(),
            departed: sus[i].departed(),
            in_system: sus[i].len() as u64,
            measured: measured[i],
            w_bar: (measured[i] > 0).then(|| delay_sums[i] / measured[i] as f64),
            q_time_avg: (q_slots > 0).then(|| q_sums[i] as f64 / q_slots as f64),
        })
        .collect();
    let sum_w_bar = per_su
        .iter()
        .map(|su| su.w_bar)
        .collect::<Option<Vec<f64>>>()
        .map(|ws| ws.iter().sum());
    let frames_to_stability = if final_y.is_some() && !truncated_unstable {
        match last_violation {
            None => Some(1),
            Some(k) if k < frames_completed => Some(k + 1),
            Some(_) => None,
        }
    } else {
        None
    };

    let report = SimReport {
        policy: config.policy,
        slots: slots_run,
        frames: frames_completed,
        per_su,
        sum_w_bar,
        y_over_k_final: final_y,
        stability_series: series.points,
        frames_to_stability,
        audit_checks,
        truncated_unstable,
    };
    let trace = traced.then(|| Trace {
        config: config.clone(),
        slots: slot_logs,
        frames: frame_logs,
        report: SimReport {
            // Placeholder; run_traced substitutes the real report.
            policy: config.policy,
            slots: 0,
            frames: 0,
            per_su: Vec::new(),
            sum_w_bar: None,
            y_over_k_final: None,
            stability_series: Vec::new(),
            frames_to_stability: None,
            audit_checks: 0,
            truncated_unstable: false,
        },
    });
    Ok((report, trace))
}

/// Per-SU average delays and their sum over a set of departed-packet
/// delay lists. Packets still in the system are excluded.
pub fn delay_statistics(delays_per_su: &[Vec<u64>]) -> (Vec<Option<f64>>, Option<f64>) {
    let per_su: Vec<Option<f64>> = delays_per_su
        .iter()
        .map(|d| {
            (!d.is_empty()).then(|| d.iter().sum::<u64>() as f64 / d.len() as f64)
        })
        .collect();
    let sum = per_su
        .iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .map(|ws| ws.iter().sum());
    (per_su, sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::GainDistribution;

    #[test]
    fn audit_cases() {
        let draw = ChannelDraw {
            gamma: vec![1.0],
            g: vec![0.3],
        };
        assert!(audit_slot(&SlotDecision::idle(), &draw, 20.0, 100.0));
        // 100 * 0.3 = 30 > 20: interference violation.
        let bad = SlotDecision {
            su: Some(0),
            power: 100.0,
            rate_bits: 5.0,
        };
        assert!(!audit_slot(&bad, &draw, 20.0, 100.0));
        let policy = crate::power::PowerPolicy::interference_capped(20.0, 100.0);
        let good = SlotDecision::transmit(0, &draw, &policy, crate::power::LogBase::Two);
        assert!(audit_slot(&good, &draw, 20.0, 100.0));
    }

    #[test]
    fn delay_statistics_basics() {
        let (per_su, sum) = delay_statistics(&[vec![3, 5], vec![7]]);
        assert_eq!(per_su, vec![Some(4.0), Some(7.0)]);
        assert_eq!(sum, Some(11.0));
        let (per_su, sum) = delay_statistics(&[vec![], vec![7]]);
        assert_eq!(per_su[0], None);
        assert_eq!(sum, None);
    }

    #[test]
    fn zero_arrivals_run_is_one_long_idle_period() {
        let mut cfg = SimConfig::base(2);
        cfg.lambdas = vec![0.0, 0.0];
        cfg.horizon_slots = 5000;
        cfg.warmup_frames = 0;
        let report = run(&cfg).unwrap();
        assert_eq!(report.frames, 0);
        assert_eq!(report.sum_w_bar, None);
        for su in &report.per_su {
            assert_eq!(su.arrived, 0);
            assert_eq!(su.w_bar, None);
        }
    }

    #[test]
    fn single_slot_service_keeps_every_delay_at_one() {
        // Rate exactly L every slot: log2(1 + 100 * 2.55) = log2(256) = 8
        // bits against 8-bit packets; no queueing is possible.
        let mut cfg = SimConfig::base(1);
        cfg.lambdas = vec![0.5];
        cfg.packet_bits = 8.0;
        cfg.gamma = vec![GainDistribution::constant(2.55).unwrap()];
        cfg.g = vec![GainDistribution::constant(0.2).unwrap()];
        cfg.horizon_slots = 20_000;
        cfg.warmup_frames = 0;
        let report = run(&cfg).unwrap();
        let w = report.w_bar(0).unwrap();
        assert_eq!(w, 1.0);
        assert!(report.per_su[0].measured > 8000);
    }

    #[test]
    fn identical_seed_and_config_reproduce_the_report() {
        let mut cfg = SimConfig::base(3);
        cfg.lambdas = vec![0.02, 0.04, 0.06];
        cfg.horizon_slots = 50_000;
        cfg.seed = 77;
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frames_partition_the_run() {
        // One slot per packet (rate = L = 8 bits), combined load 0.6:
        // the system drains often and refills fast, so zero-length idle
        // periods occur.
        let mut cfg = SimConfig::base(2);
        cfg.lambdas = vec![0.3, 0.3];
        cfg.packet_bits = 8.0;
        cfg.gamma = vec![GainDistribution::constant(2.55).unwrap(); 2];
        cfg.g = vec![GainDistribution::constant(0.2).unwrap(); 2];
        cfg.horizon_slots = 30_000;
        cfg.warmup_frames = 0;
        let trace = run_traced(&cfg).unwrap();
        let covered: u64 = trace
            .frames
            .iter()
            .map(|f| f.idle_len + f.busy_len)
            .sum();
        assert!(covered <= trace.report.slots);
        // The remainder is the trailing incomplete frame.
        assert!(trace.report.slots - covered <= trace.report.slots);
        // Heavy traffic produces frames that skip the idle period.
        assert!(trace.frames.iter().any(|f| f.idle_len == 0));
        assert!(trace.frames.iter().all(|f| f.busy_len >= 1));
    }

    #[test]
    fn min_frames_extends_past_the_horizon() {
        let mut cfg = SimConfig::base(1);
        cfg.lambdas = vec![0.01];
        cfg.horizon_slots = 2000;
        cfg.min_frames = 50;
        cfg.warmup_frames = 0;
        let report = run(&cfg).unwrap();
        assert!(report.frames >= 50);
        assert!(report.slots > 2000);
    }

    #[test]
    fn unstable_queue_trips_the_cap() {
        let mut cfg = SimConfig::base(1);
        cfg.lambdas = vec![0.9];
        // One bit per slot at best against 100-bit packets: hopeless.
        cfg.gamma = vec![GainDistribution::constant(0.01).unwrap()];
        cfg.g = vec![GainDistribution::constant(0.2).unwrap()];
        cfg.queue_cap = 500;
        cfg.horizon_slots = 10_000_000;
        let report = run(&cfg).unwrap();
        assert!(report.truncated_unstable);
        assert!(report.slots < 10_000_000);
    }

    #[test]
    fn every_policy_passes_the_audit_on_a_common_config() {
        for kind in PolicyKind::ALL {
            let mut cfg = SimConfig::base(3);
            cfg.lambdas = vec![0.01, 0.02, 0.03];
            cfg.policy = kind;
            cfg.horizon_slots = 20_000;
            let report = run(&cfg).unwrap();
            assert!(report.audit_checks > 0, "{kind:?} never audited");
        }
    }
}
