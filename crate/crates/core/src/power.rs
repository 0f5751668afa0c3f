//! Transmit power control and the rate map.
//!
//! The reference rule gives the scheduled SU the largest feasible
//! power: `min(I_inst / g, P_max)`, where `g` is this slot's gain
//! towards the PU. It is the pointwise maximum of the per-slot
//! feasible set, so any feasible alternative transmits at most as
//! fast. A transmission at power `p` over gain `gamma` carries
//! `log(1 + p * gamma)` bits per slot; base 2 by default.

/// Logarithm base of the rate map. Base 2 means rates are in bits per
/// slot, consistent with packet sizes in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Two,
    Natural,
}

impl LogBase {
    #[inline]
    fn log1p(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.ln_1p() / std::f64::consts::LN_2,
            LogBase::Natural => x.ln_1p(),
        }
    }
}

/// Largest power that respects both the interference cap and the power
/// cap, given this slot's gain `g` towards the PU.
///
/// The result is nudged down by ulps if needed so that `p * g <= i_inst`
/// holds exactly in f64 arithmetic; the engine audits the product.
#[inline]
pub fn optimal_power(g: f64, i_inst: f64, p_max: f64) -> f64 {
    debug_assert!(g > 0.0 && i_inst > 0.0 && p_max > 0.0);
    let mut p = (i_inst / g).min(p_max);
    while p * g > i_inst {
        p = f64::next_down(p);
    }
    p
}

/// Bits per slot carried at power `p` over gain `gamma`.
#[inline]
pub fn rate(p: f64, gamma: f64) -> f64 {
    rate_in(p, gamma, LogBase::Two)
}

/// Rate with an explicit logarithm base.
#[inline]
pub fn rate_in(p: f64, gamma: f64, base: LogBase) -> f64 {
    debug_assert!(p >= 0.0 && gamma > 0.0);
    base.log1p(p * gamma)
}

/// Peak rate: no transmission can exceed `log(1 + P_max * gamma_max)`.
#[inline]
pub fn max_rate(p_max: f64, gamma_max: f64, base: LogBase) -> f64 {
    base.log1p(p_max * gamma_max)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PowerKind {
    /// The reference rule `min(I_inst/g, P_max)`.
    InterferenceCapped,
    /// Fixed level, clamped to the feasible set for the observed `g`.
    Constant { level: f64 },
    /// Piecewise-constant in `g`: the first entry with `g <= g_upper`
    /// applies; clamped to the feasible set.
    CustomTable { entries: Vec<(f64, f64)> },
}

/// A power-control policy. Whatever the kind, every returned power `p`
/// satisfies `0 <= p <= p_max` and `p * g <= i_inst` for the `g` it was
/// computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerPolicy {
    pub kind: PowerKind,
    pub p_max: f64,
    pub i_inst: f64,
}

impl PowerPolicy {
    pub fn interference_capped(i_inst: f64, p_max: f64) -> Self {
        Self {
            kind: PowerKind::InterferenceCapped,
            p_max,
            i_inst,
        }
    }

    pub fn constant(level: f64, i_inst: f64, p_max: f64) -> Self {
        Self {
            kind: PowerKind::Constant { level },
            p_max,
            i_inst,
        }
    }

    /// Transmit power for this slot's PU-link gain.
    pub fn power_for(&self, g: f64) -> f64 {
        let cap = optimal_power(g, self.i_inst, self.p_max);
        match &self.kind {
            PowerKind::InterferenceCapped => cap,
            PowerKind::Constant { level } => level.min(cap),
            PowerKind::CustomTable { entries } => {
                let level = entries
                    .iter()
                    .find(|&&(g_upper, _)| g <= g_upper)
                    .or(entries.last())
                    .map_or(0.0, |&(_, p)| p);
                level.min(cap)
            }
        }
    }
}
