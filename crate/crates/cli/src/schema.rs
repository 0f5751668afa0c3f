//! Experiment configuration files.
//!
//! Plain TOML, one file per experiment. Units are stated per key:
//! delays and horizons in slots, packet size in bits, gains and powers
//! in linear (dimensionless) units.
//!
//! ```toml
//! n = 5
//! lambda_base = 0.002           # packets/slot; SU i arrives at i * lambda_base
//! delay_bounds = [100.0, 100.0, 100.0, 100.0, 45.0]   # slots
//! i_inst = 20.0                 # interference cap (linear)
//! p_max = 100.0                 # peak power (linear)
//! v = 100.0                     # control parameter
//! packet_bits = 100.0
//! horizon_slots = 1000000
//! warmup_frames = 100
//! seed = 1
//! policy = "doic"               # doic | csma | cnc | static-priority
//!
//! [[gamma]]                     # one entry broadcasts to all SUs
//! kind = "truncated-exp"        # truncated-exp | constant | discrete-table
//! mean = 1.0
//! max = 10.0                    # optional; defaults to 10 * mean
//!
//! [[g]]
//! kind = "truncated-exp"
//! mean = 0.1
//!
//! [sweep]
//! variable = "lambda"           # lambda | v | d5
//! values = []                   # empty lambda sweep: derived from rho_targets
//! rho_targets = [0.1, 0.3, 0.5, 0.7]
//! replications = 5
//! ```

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use crsched::channel::GainDistribution;
use crsched::config::{PolicyKind, SimConfig};
use crsched::power::LogBase;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSpec {
    pub n: usize,
    /// Base rate for the heterogeneous rule `lambda_i = i * lambda_base`.
    pub lambda_base: Option<f64>,
    /// Explicit per-SU rates; mutually exclusive with `lambda_base`.
    pub lambdas: Option<Vec<f64>>,
    pub delay_bounds: Vec<f64>,
    pub i_inst: f64,
    pub p_max: f64,
    pub v: f64,
    pub packet_bits: f64,
    pub horizon_slots: u64,
    #[serde(default)]
    pub min_frames: u64,
    #[serde(default = "default_warmup")]
    pub warmup_frames: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_policy")]
    pub policy: String,
    pub static_order: Option<Vec<usize>>,
    #[serde(default = "default_log_base")]
    pub log_base: String,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default = "default_queue_cap")]
    pub queue_cap: usize,
    pub gamma: Vec<DistSpec>,
    pub g: Vec<DistSpec>,
    pub sweep: Option<SweepSpec>,
}

fn default_warmup() -> u64 {
    100
}
fn default_seed() -> u64 {
    1
}
fn default_policy() -> String {
    "doic".into()
}
fn default_log_base() -> String {
    "two".into()
}
fn default_grid() -> usize {
    crsched::analytics::DEFAULT_GRID
}
fn default_queue_cap() -> usize {
    1_000_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistSpec {
    pub kind: String,
    pub mean: Option<f64>,
    pub max: Option<f64>,
    pub points: Option<Vec<(f64, f64)>>,
}

impl DistSpec {
    pub fn build(&self) -> Result<GainDistribution> {
        match self.kind.as_str() {
            "truncated-exp" => {
                let mean = self.mean.ok_or_else(|| anyhow!("truncated-exp needs `mean`"))?;
                let max = self.max.unwrap_or(10.0 * mean);
                Ok(GainDistribution::truncated_exp(mean, max)?)
            }
            "constant" => {
                let mean = self.mean.ok_or_else(|| anyhow!("constant needs `mean`"))?;
                Ok(GainDistribution::constant(mean)?)
            }
            "discrete-table" => {
                let points = self
                    .points
                    .clone()
                    .ok_or_else(|| anyhow!("discrete-table needs `points`"))?;
                Ok(GainDistribution::discrete_table(points)?)
            }
            other => bail!("unknown gain kind `{other}` (truncated-exp | constant | discrete-table)"),
        }
    }
}

/// What a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// The base rate of `lambda_i = i * lambda_base`.
    Lambda,
    /// The control parameter.
    V,
    /// The last SU's delay bound.
    D5,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::Lambda => "lambda",
            SweepVariable::V => "v",
            SweepVariable::D5 => "d5",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: String,
    #[serde(default)]
    pub values: Vec<f64>,
    /// Used when `variable = "lambda"` and `values` is empty: base
    /// rates are derived so the total load hits each target.
    #[serde(default)]
    pub rho_targets: Vec<f64>,
    #[serde(default = "default_reps")]
    pub replications: u64,
}

fn default_reps() -> u64 {
    1
}

/// A parsed experiment: the base run plus an optional sweep.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub base: SimConfig,
    /// Present iff the file declared a sweep.
    pub sweep: Option<(SweepVariable, Vec<f64>, Vec<f64>, u64)>,
    /// The `lambda_base` the file used, if the heterogeneous rule was
    /// chosen (needed to re-scale lambda sweeps).
    pub lambda_base: Option<f64>,
}

pub fn parse_str(text: &str) -> Result<Experiment> {
    let spec: FileSpec = toml::from_str(text).context("config parse error")?;
    build(&spec)
}

pub fn load(path: &std::path::Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_str(&text).with_context(|| format!("in config {}", path.display()))
}

fn broadcast(dists: &[DistSpec], n: usize, what: &str) -> Result<Vec<GainDistribution>> {
    let built: Vec<GainDistribution> = dists
        .iter()
        .map(DistSpec::build)
        .collect::<Result<_>>()?;
    match built.len() {
        1 => Ok(vec![built[0].clone(); n]),
        k if k == n => Ok(built),
        k => bail!("`{what}` needs 1 or {n} entries, got {k}"),
    }
}

/// Rates under the heterogeneous rule `lambda_i = i * base`.
pub fn heterogeneous_lambdas(base: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 * base).collect()
}

fn build(spec: &FileSpec) -> Result<Experiment> {
    let n = spec.n;
    let (lambdas, lambda_base) = match (&spec.lambdas, spec.lambda_base) {
        (Some(_), Some(_)) => bail!("give `lambdas` or `lambda_base`, not both"),
        (Some(l), None) => (l.clone(), None),
        (None, Some(b)) => (heterogeneous_lambdas(b, n), Some(b)),
        (None, None) => bail!("one of `lambdas` or `lambda_base` is required"),
    };
    let policy = PolicyKind::parse(&spec.policy)
        .ok_or_else(|| anyhow!("unknown policy `{}`", spec.policy))?;
    let log_base = match spec.log_base.as_str() {
        "two" => LogBase::Two,
        "natural" => LogBase::Natural,
        other => bail!("unknown log_base `{other}` (two | natural)"),
    };
    let config = SimConfig {
        n,
        lambdas,
        delay_bounds: spec.delay_bounds.clone(),
        gamma: broadcast(&spec.gamma, n, "gamma")?,
        g: broadcast(&spec.g, n, "g")?,
        i_inst: spec.i_inst,
        p_max: spec.p_max,
        v: spec.v,
        packet_bits: spec.packet_bits,
        horizon_slots: spec.horizon_slots,
        min_frames: spec.min_frames,
        warmup_frames: spec.warmup_frames,
        seed: spec.seed,
        policy,
        static_order: spec.static_order.clone(),
        log_base,
        grid_size: spec.grid_size,
        queue_cap: spec.queue_cap,
    };
    config.validate()?;
    let sweep = match &spec.sweep {
        None => None,
        Some(s) => {
            let variable = match s.variable.as_str() {
                "lambda" => SweepVariable::Lambda,
                "v" => SweepVariable::V,
                "d5" => SweepVariable::D5,
                other => bail!("unknown sweep variable `{other}` (lambda | v | d5)"),
            };
            if variable == SweepVariable::Lambda && lambda_base.is_none() {
                bail!("lambda sweeps need the `lambda_base` form of the arrival rates");
            }
            if s.values.is_empty()
                && (variable != SweepVariable::Lambda || s.rho_targets.is_empty())
            {
                bail!("sweep needs `values` (or `rho_targets` for lambda sweeps)");
            }
            Some((variable, s.values.clone(), s.rho_targets.clone(), s.replications.max(1)))
        }
    };
    Ok(Experiment {
        base: config,
        sweep,
        lambda_base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
n = 2
lambda_base = 0.01
delay_bounds = [100.0, 45.0]
i_inst = 20.0
p_max = 100.0
v = 100.0
packet_bits = 100.0
horizon_slots = 10000

[[gamma]]
kind = "truncated-exp"
mean = 1.0

[[g]]
kind = "truncated-exp"
mean = 0.1
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let exp = parse_str(MINIMAL).unwrap();
        assert_eq!(exp.base.n, 2);
        assert_eq!(exp.base.lambdas, vec![0.01, 0.02]);
        assert_eq!(exp.base.warmup_frames, 100);
        assert_eq!(exp.base.policy, PolicyKind::Doic);
        assert_eq!(exp.base.gamma.len(), 2);
        assert!(exp.sweep.is_none());
    }

    #[test]
    fn parse_errors_carry_context() {
        let bad = MINIMAL.replace("policy = \"doic\"", "").replace("n = 2", "n = 2\npolicy = \"bogus\"");
        let err = parse_str(&bad).unwrap_err();
        assert!(format!("{err:#}").contains("bogus"));
        // Unknown keys are rejected with a span.
        let unknown = format!("{MINIMAL}\nnot_a_key = 1\n");
        let err = parse_str(&unknown).unwrap_err();
        assert!(format!("{err:#}").contains("not_a_key"));
    }

    #[test]
    fn lambda_sweep_requires_base_form() {
        let explicit = MINIMAL.replace(
            "lambda_base = 0.01",
            "lambdas = [0.01, 0.02]",
        ) + "\n[sweep]\nvariable = \"lambda\"\nvalues = [0.01]\n";
        let err = parse_str(&explicit).unwrap_err();
        assert!(format!("{err:#}").contains("lambda_base"));
    }
}
