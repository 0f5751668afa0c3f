//! Full description of one simulation run.

use thiserror::Error;

use crate::channel::{ChannelModel, GainDistribution};
use crate::power::{LogBase, PowerPolicy};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("need at least one SU")]
    NoSus,
    #[error("{field} must have one entry per SU ({expected}), got {got}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("arrival rate {0} outside [0, 1)")]
    BadArrivalRate(f64),
    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("horizon must be at least 1 slot")]
    ZeroHorizon,
    #[error("grid size must be at least 2, got {0}")]
    BadGrid(usize),
    #[error("static priority order must be a permutation of 0..n")]
    BadStaticOrder,
}

/// Which scheduler runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Doic,
    Csma,
    Cnc,
    StaticPriority,
}

impl PolicyKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "doic" => Some(PolicyKind::Doic),
            "csma" => Some(PolicyKind::Csma),
            "cnc" => Some(PolicyKind::Cnc),
            "static-priority" => Some(PolicyKind::StaticPriority),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Doic => "doic",
            PolicyKind::Csma => "csma",
            PolicyKind::Cnc => "cnc",
            PolicyKind::StaticPriority => "static-priority",
        }
    }

    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Doic,
        PolicyKind::Csma,
        PolicyKind::Cnc,
        PolicyKind::StaticPriority,
    ];
}

/// One experiment replication, fully specified. Identical configs with
/// identical seeds reproduce bit-identical runs.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n: usize,
    /// Per-SU arrival probabilities (packets/slot), each in `[0, 1)`.
    pub lambdas: Vec<f64>,
    /// Per-SU average-delay bounds `d_i`, in slots.
    pub delay_bounds: Vec<f64>,
    /// Per-SU gain distribution towards the BS.
    pub gamma: Vec<GainDistribution>,
    /// Per-SU gain distribution towards the PU.
    pub g: Vec<GainDistribution>,
    /// Instantaneous interference cap at the PU.
    pub i_inst: f64,
    /// Peak transmit power.
    pub p_max: f64,
    /// Control parameter trading delay against convergence speed.
    pub v: f64,
    /// Packet size `L` in bits.
    pub packet_bits: f64,
    pub horizon_slots: u64,
    /// Keep running past the horizon until this many frames complete
    /// (0 disables). Capped at 20x the horizon.
    pub min_frames: u64,
    /// Frames excluded from reported delay and queue statistics.
    pub warmup_frames: u64,
    pub seed: u64,
    pub policy: PolicyKind,
    /// Priority order for [`PolicyKind::StaticPriority`]; identity when
    /// absent.
    pub static_order: Option<Vec<usize>>,
    pub log_base: LogBase,
    /// Quadrature cells / lattice bins for the rate law.
    pub grid_size: usize,
    /// Queue length that flags the run as unstable and stops it.
    pub queue_cap: usize,
}

impl SimConfig {
    /// A minimal valid config for `n` identical SUs; callers adjust
    /// fields from here.
    pub fn base(n: usize) -> Self {
        Self {
            n,
            lambdas: vec![0.05; n],
            delay_bounds: vec![100.0; n],
            gamma: vec![GainDistribution::TruncatedExp {
                mean: 1.0,
                max: 10.0,
            }; n],
            g: vec![GainDistribution::TruncatedExp {
                mean: 0.1,
                max: 1.0,
            }; n],
            i_inst: 20.0,
            p_max: 100.0,
            v: 100.0,
            packet_bits: 100.0,
            horizon_slots: 100_000,
            min_frames: 0,
            warmup_frames: 100,
            seed: 1,
            policy: PolicyKind::Doic,
            static_order: None,
            log_base: LogBase::Two,
            grid_size: crate::analytics::DEFAULT_GRID,
            queue_cap: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::NoSus);
        }
        let check_len = |field: &'static str, got: usize| {
            if got != self.n {
                Err(ConfigError::LengthMismatch {
                    field,
                    expected: self.n,
                    got,
                })
            } else {
                Ok(())
            }
        };
        check_len("lambdas", self.lambdas.len())?;
        check_len("delay_bounds", self.delay_bounds.len())?;
        check_len("gamma", self.gamma.len())?;
        check_len("g", self.g.len())?;
        for &l in &self.lambdas {
            if !(0.0..1.0).contains(&l) {
                return Err(ConfigError::BadArrivalRate(l));
            }
        }
        let positive = |field: &'static str, value: f64| {
            if value > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::NonPositive { field, value })
            }
        };
        for &d in &self.delay_bounds {
            positive("delay_bounds", d)?;
        }
        positive("i_inst", self.i_inst)?;
        positive("p_max", self.p_max)?;
        positive("v", self.v)?;
        positive("packet_bits", self.packet_bits)?;
        if self.horizon_slots == 0 {
            return Err(ConfigError::ZeroHorizon);
        }
        if self.grid_size < 2 {
            return Err(ConfigError::BadGrid(self.grid_size));
        }
        if let Some(order) = &self.static_order {
            let mut seen = order.clone();
            seen.sort_unstable();
            if seen.len() != self.n || seen.iter().enumerate().any(|(i, &v)| i != v) {
                return Err(ConfigError::BadStaticOrder);
            }
        }
        Ok(())
    }

    pub fn power_policy(&self) -> PowerPolicy {
        PowerPolicy::interference_capped(self.i_inst, self.p_max)
    }

    pub fn channel_model(&self) -> ChannelModel {
        ChannelModel::new(self.gamma.clone(), self.g.clone())
    }
}
