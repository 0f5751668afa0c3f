//! Closed-form and numerical queueing analytics.
//!
//! Everything here is driven by the discrete law of the per-slot rate
//! `R = log(1 + P(g) * gamma)` induced by the two gain distributions
//! and a power policy:
//!
//! - [`rate_law`] discretizes that law by quantile quadrature,
//! - [`SurvivalSeries`] computes `q_m = Pr[first m-1 slots carry fewer
//!   than L bits]` by iterated lattice convolution; a packet needs slot
//!   `m` exactly when that event holds, so `E[s] = sum q_m` and
//!   `E[s^2] = sum (2m-1) q_m`,
//! - [`mean_service_time`] is the headline closed form `L / E[R]`,
//!   exact as `L/R_max` grows,
//! - [`priority_delay`] evaluates the preemptive-resume priority
//!   formula for the mean time in system of each class.
//!
//! On integer-valued rate supports the survival predicate
//! `S_{m-1} < L` coincides with `S_{m-1} <= L-1`, and the convolution
//! is exact; continuous laws are carried on a uniform lattice with
//! mean-preserving mass splitting.

use thiserror::Error;

use crate::channel::GainDistribution;
use crate::power::{max_rate, rate_in, LogBase, PowerPolicy};

/// Default number of quadrature cells / lattice bins.
pub const DEFAULT_GRID: usize = 512;

/// Tail probability below which the survival series is truncated.
pub const TAIL_TOL: f64 = 1e-9;

/// Hard cap on lattice cells: spacing is coarsened before exceeding it.
const MAX_CELLS: usize = 1 << 22;

/// Hard cap on the auto-extended survival horizon.
const MAX_STEPS: usize = 4_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("rate law is invalid: {0}")]
    BadLaw(String),
    #[error("rate law has zero mean (point mass at rate 0)")]
    ZeroMeanRate,
    #[error("survival tail {tail:.3e} still above tolerance at horizon {horizon}")]
    TailTooHeavy { horizon: usize, tail: f64 },
    #[error("priority class {class} is unstable (cumulative load >= 1)")]
    Unstable { class: usize },
}

// ---------------------------------------------------------------------------
// Rate law
// ---------------------------------------------------------------------------

/// Discrete law of the per-slot rate: sorted support plus probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct RateLaw {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl RateLaw {
    /// Builds a law from `(rate, probability)` points. Points closer
    /// than a relative 1e-12 are merged; probabilities must sum to 1
    /// within 1e-9.
    pub fn from_points(points: &[(f64, f64)]) -> Result<Self, AnalyticsError> {
        if points.is_empty() {
            return Err(AnalyticsError::BadLaw("empty support".into()));
        }
        for &(r, p) in points {
            if !(r.is_finite() && p.is_finite()) || r < 0.0 || p < 0.0 {
                return Err(AnalyticsError::BadLaw(format!("bad point ({r}, {p})")));
            }
        }
        let mut pts: Vec<(f64, f64)> = points.iter().copied().filter(|&(_, p)| p > 0.0).collect();
        if pts.is_empty() {
            return Err(AnalyticsError::BadLaw("all probabilities are zero".into()));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let scale = pts.last().map_or(1.0, |&(r, _)| r.max(1.0));
        let mut support = Vec::with_capacity(pts.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pts.len());
        for (r, p) in pts {
            match support.last() {
                Some(&last) if r - last <= 1e-12 * scale => {
                    *probs.last_mut().expect("parallel vectors") += p;
                }
                _ => {
                    support.push(r);
                    probs.push(p);
                }
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AnalyticsError::BadLaw(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { support, probs })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Expected rate `E[R]`.
    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(r, p)| r * p)
            .sum()
    }

    pub fn max_rate(&self) -> f64 {
        *self.support.last().expect("non-empty")
    }

    /// Pointwise-scaled law (every support rate multiplied by `factor`).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            support: self.support.iter().map(|r| r * factor).collect(),
            probs: self.probs.clone(),
        }
    }
}

/// Equal-probability quadrature cells of a gain distribution, each
/// represented by its conditional mean. Discrete distributions return
/// their exact support; the bool marks exactness.
fn quantile_cells(dist: &GainDistribution, cells: usize) -> (Vec<(f64, f64)>, bool) {
    match dist {
        GainDistribution::Constant { value } => (vec![(*value, 1.0)], true),
        GainDistribution::DiscreteTable { points } => (points.clone(), true),
        GainDistribution::TruncatedExp { mean, max } => {
            let mu = *mean;
            let cap = *max;
            let z = 1.0 - (-cap / mu).exp();
            // Quantile of the truncated law: F^{-1}(u) = -mu ln(1 - u z).
            let quantile = |u: f64| -mu * (-u * z).ln_1p();
            let mut out = Vec::with_capacity(cells);
            let p = 1.0 / cells as f64;
            for j in 0..cells {
                let a = quantile(j as f64 / cells as f64);
                let b = if j + 1 == cells {
                    cap
                } else {
                    quantile((j + 1) as f64 / cells as f64)
                };
                // Conditional mean of Exp(mu) on (a, b].
                let ea = (-a / mu).exp();
                let eb = (-b / mu).exp();
                let rep = if ea - eb > 1e-300 {
                    mu + (a * ea - b * eb) / (ea - eb)
                } else {
                    0.5 * (a + b)
                };
                out.push((rep, p));
            }
            (out, false)
        }
    }
}

/// Discretizes the law of `R = log(1 + P(g) * gamma)` over independent
/// `gamma` and `g`.
///
/// If both gain distributions are finitely supported the product law is
/// exact; otherwise each is cut into `grid_size` equal-probability
/// cells and the resulting point cloud is binned onto a uniform lattice
/// of `grid_size` points spanning `[0, R_max]` with mean-preserving
/// mass splitting.
pub fn rate_law(
    gamma_dist: &GainDistribution,
    g_dist: &GainDistribution,
    policy: &PowerPolicy,
    grid_size: usize,
    base: LogBase,
) -> RateLaw {
    assert!(grid_size >= 2, "grid_size must be at least 2");
    let (gamma_cells, gamma_exact) = quantile_cells(gamma_dist, grid_size);
    let (g_cells, g_exact) = quantile_cells(g_dist, grid_size);

    let mut points: Vec<(f64, f64)> = Vec::new();
    if gamma_exact && g_exact && gamma_cells.len() * g_cells.len() <= 4096 {
        for &(g, pg) in &g_cells {
            let power = policy.power_for(g);
            for &(gamma, pgamma) in &gamma_cells {
                points.push((rate_in(power, gamma, base), pg * pgamma));
            }
        }
        return RateLaw::from_points(&points).expect("exact product law");
    }

    let r_max = max_rate(policy.p_max, gamma_dist.max_gain(), base);
    let delta = r_max / (grid_size - 1) as f64;
    let mut mass = vec![0.0; grid_size];
    for &(g, pg) in &g_cells {
        let power = policy.power_for(g);
        for &(gamma, pgamma) in &gamma_cells {
            let r = rate_in(power, gamma, base);
            let x = (r / delta).min((grid_size - 1) as f64);
            let k = x.floor() as usize;
            let frac = x - k as f64;
            let p = pg * pgamma;
            if k + 1 < grid_size {
                mass[k] += p * (1.0 - frac);
                mass[k + 1] += p * frac;
            } else {
                mass[k] += p;
            }
        }
    }
    for (k, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            points.push((k as f64 * delta, m));
        }
    }
    RateLaw::from_points(&points).expect("binned law")
}

// ---------------------------------------------------------------------------
// Service-time moments
// ---------------------------------------------------------------------------

/// Survival probabilities of the packet transmission time:
/// `q(m) = Pr[slot m is still needed] = Pr[S_{m-1} < L]`, for
/// `m = 1..=horizon`, where `S_k` is the sum of `k` i.i.d. per-slot
/// rates.
#[derive(Debug, Clone)]
pub struct SurvivalSeries {
    q: Vec<f64>,
}

impl SurvivalSeries {
    /// `Pr[service needs at least m slots]`; `q(1) = 1`.
    pub fn q(&self, m: usize) -> f64 {
        if m == 0 {
            1.0
        } else {
            self.q.get(m - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn horizon(&self) -> usize {
        self.q.len()
    }

    /// Exact mean service time `E[s] = sum_m q(m)`.
    pub fn mean(&self) -> f64 {
        self.q.iter().sum()
    }

    /// Exact second moment `E[s^2] = sum_m (2m - 1) q(m)`: the collapsed
    /// form of the double sum over slot pairs `(t1, t2)`, of which
    /// `2m - 1` share `max(t1, t2) = m`.
    pub fn second_moment(&self) -> f64 {
        self.q
            .iter()
            .enumerate()
            .map(|(idx, q)| (2 * (idx + 1) - 1) as f64 * q)
            .sum()
    }
}

/// Nearest-remainder Euclid on floats; returns a common divisor of `a`
/// and `b` up to `tol`.
fn approx_gcd(mut a: f64, mut b: f64, tol: f64) -> f64 {
    if a < b {
        std::mem::swap(&mut a, &mut b);
    }
    while b > tol {
        let r = (a - b * (a / b).round()).abs();
        a = b;
        b = r;
    }
    a
}

/// Lattice spacing that represents every support point exactly, if one
/// exists with an acceptable cell count for this `l_bits`.
fn exact_spacing(support: &[f64], l_bits: f64) -> Option<f64> {
    let positive: Vec<f64> = support.iter().copied().filter(|&r| r > 0.0).collect();
    let largest = positive.last().copied()?;
    let tol = 1e-9 * largest.max(1.0);
    let mut g = positive[0];
    for &v in &positive[1..] {
        g = approx_gcd(g, v, tol);
    }
    if g <= tol || l_bits / g > MAX_CELLS as f64 {
        return None;
    }
    for &v in &positive {
        let k = (v / g).round();
        if (v - k * g).abs() > tol {
            return None;
        }
    }
    Some(g)
}

/// Computes the survival series of the packet transmission time under
/// i.i.d. per-slot rates drawn from `law`, for a packet of `l_bits`.
///
/// `horizon` caps the series length; `None` extends automatically until
/// the tail drops below [`TAIL_TOL`]. Errors if the tail is still above
/// the tolerance at the cap.
pub fn survival_series(
    law: &RateLaw,
    l_bits: f64,
    horizon: Option<usize>,
) -> Result<SurvivalSeries, AnalyticsError> {
    assert!(l_bits > 0.0);
    if law.mean() <= 0.0 {
        return Err(AnalyticsError::ZeroMeanRate);
    }

    // Lattice: exact if the support admits a common spacing, else a
    // uniform grid with mean-preserving mass splitting.
    let delta = exact_spacing(law.support(), l_bits).unwrap_or_else(|| {
        let d = law.max_rate() / (DEFAULT_GRID - 1) as f64;
        d.max(l_bits / MAX_CELLS as f64)
    });

    // Kernel: the single-slot law pushed onto the lattice as
    // (offset, weight) pairs, sorted by offset.
    let mut kernel: Vec<(usize, f64)> = Vec::with_capacity(law.support().len() + 1);
    for (&r, &p) in law.support().iter().zip(law.probs()) {
        let x = r / delta;
        let k = x.floor() as usize;
        let frac = x - k as f64;
        if frac < 1e-9 {
            push_kernel(&mut kernel, k, p);
        } else if frac > 1.0 - 1e-9 {
            push_kernel(&mut kernel, k + 1, p);
        } else {
            push_kernel(&mut kernel, k, p * (1.0 - frac));
            push_kernel(&mut kernel, k + 1, p * frac);
        }
    }

    // Surviving lattice cells: values strictly below l_bits.
    let i_max = {
        let mut i = (l_bits / delta).ceil() as usize;
        while i > 0 && (i as f64) * delta >= l_bits * (1.0 - 1e-12) {
            i -= 1;
        }
        i
    };

    let cap = horizon.unwrap_or(MAX_STEPS);
    let mut v = vec![0.0f64; i_max + 1];
    let mut w = vec![0.0f64; i_max + 1];
    v[0] = 1.0;
    let (mut lo, mut hi) = (0usize, 0usize);
    let min_off = kernel.first().map_or(0, |&(k, _)| k);
    let max_off = kernel.last().map_or(0, |&(k, _)| k);
    let mut q = Vec::new();
    let mut mass = 1.0f64;
    for _m in 1..=cap {
        q.push(mass);
        if mass <= TAIL_TOL {
            return Ok(SurvivalSeries { q });
        }
        let dst_lo = (lo + min_off).min(i_max);
        let dst_hi = (hi + max_off).min(i_max);
        w[dst_lo..=dst_hi].iter_mut().for_each(|x| *x = 0.0);
        for &(off, weight) in &kernel {
            if lo + off > i_max {
                break;
            }
            let d_hi = (hi + off).min(i_max);
            let s_hi = d_hi - off;
            for (dst, src) in w[lo + off..=d_hi].iter_mut().zip(&v[lo..=s_hi]) {
                *dst += src * weight;
            }
        }
        std::mem::swap(&mut v, &mut w);
        lo = dst_lo;
        hi = dst_hi;
        while lo < hi && v[lo] == 0.0 {
            lo += 1;
        }
        mass = v[lo..=hi].iter().sum();
    }
    if mass > TAIL_TOL {
        return Err(AnalyticsError::TailTooHeavy {
            horizon: cap,
            tail: mass,
        });
    }
    Ok(SurvivalSeries { q })
}

fn push_kernel(kernel: &mut Vec<(usize, f64)>, off: usize, weight: f64) {
    if weight <= 0.0 {
        return;
    }
    match kernel.iter_mut().find(|(k, _)| *k == off) {
        Some((_, w)) => *w += weight,
        None => {
            kernel.push((off, weight));
            kernel.sort_by_key(|&(k, _)| k);
        }
    }
}

/// The headline closed form `E[s] = L / E[R]`.
///
/// This is the large-packet limit of the exact renewal mean: it ignores
/// the partial slot spent finishing the last bits, so it understates
/// the exact mean by up to one slot. The gap stays within 5% once
/// `L >= 20 * R_max`; [`ServiceMoments`] carries the exact value.
pub fn mean_service_time(law: &RateLaw, l_bits: f64) -> Result<f64, AnalyticsError> {
    let mean_rate = law.mean();
    if mean_rate <= 0.0 {
        return Err(AnalyticsError::ZeroMeanRate);
    }
    Ok(l_bits / mean_rate)
}

/// Second moment of the service time, `sum_m (2m - 1) q(m)`.
pub fn second_moment_service_time(
    law: &RateLaw,
    l_bits: f64,
    horizon: Option<usize>,
) -> Result<f64, AnalyticsError> {
    Ok(survival_series(law, l_bits, horizon)?.second_moment())
}

/// Service-time moments of one class, plus its offered load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceMoments {
    /// Exact mean service time `E[s]`, in slots.
    pub mean_slots: f64,
    /// Exact second moment `E[s^2]`, in slots^2.
    pub second_moment_slots2: f64,
    /// Offered load `rho = lambda * E[s]`.
    pub rho: f64,
}

impl ServiceMoments {
    /// Computes both moments from the rate law via the survival series.
    pub fn from_law(
        law: &RateLaw,
        l_bits: f64,
        lambda: f64,
        horizon: Option<usize>,
    ) -> Result<Self, AnalyticsError> {
        let series = survival_series(law, l_bits, horizon)?;
        let mean = series.mean();
        let second = series.second_moment();
        debug_assert!(second >= mean * mean - 1e-9 * second.max(1.0));
        debug_assert!(mean >= l_bits / law.max_rate() - 1e-9);
        Ok(Self {
            mean_slots: mean,
            second_moment_slots2: second,
            rho: lambda * mean,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.rho / self.mean_slots
    }
}

/// Mean time in system of priority class `j` (0 = highest) under
/// preemptive-resume priority service:
///
/// ```text
/// W_j = E[s_j] / (1 - rho_<j)
///     + (sum_{l<=j} lambda_l E[s_l^2] / 2) / ((1 - rho_<j)(1 - rho_<j - rho_j))
/// ```
///
/// where `rho_<j` is the cumulative load of the classes above `j`
/// (zero for the top class); the second denominator factor equals
/// `1 - rho_<=j`. Errors when any denominator is non-positive.
pub fn priority_delay(moments: &[ServiceMoments], j: usize) -> Result<f64, AnalyticsError> {
    assert!(j < moments.len());
    let rho_above: f64 = moments[..j].iter().map(|m| m.rho).sum();
    let denom1 = 1.0 - rho_above;
    let denom2 = 1.0 - rho_above - moments[j].rho;
    if denom1 <= 0.0 || denom2 <= 0.0 {
        return Err(AnalyticsError::Unstable { class: j });
    }
    let residual: f64 = moments[..=j]
        .iter()
        .map(|m| m.lambda() * m.second_moment_slots2)
        .sum::<f64>()
        / 2.0;
    Ok(moments[j].mean_slots / denom1 + residual / (denom1 * denom2))
}
