use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timing::TimingConfig;

/// Engine settings. Files use one `key = value` pair per line with `#`
/// comments; timing keys carry a `timing.` prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub seed: u64,
    /// Worker threads for field solves; 0 uses the global pool.
    pub threads: usize,
    /// Bins per axis; 0 picks the default for the design size.
    pub bins: usize,
    /// L4 exit threshold on the LUTL and FF fields.
    pub overflow_threshold: f64,
    /// Total L5 iteration budget.
    pub max_iterations: usize,
    /// Gradient steps per L5 block.
    pub l5_iterations: usize,
    /// Slope of the smoothing schedule `4 * 10^(k*ov - 1)`.
    pub gamma_k: f64,
    /// Initial density-to-wirelength gradient ratio.
    pub zeta: f64,
    /// Ratio used when multipliers are reset after a phase change.
    pub lambda_reset: f64,
    /// Initial multiplier step, relative to the initial multipliers.
    pub mu_init: f64,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub tau: f64,
    /// Multiplier cap numerator.
    pub lambda_cap: f64,
    /// Second-order ALM weight.
    pub alm_beta: f64,
    pub iota: f64,
    pub epsilon: f64,
    pub timing_alpha: f64,
    /// Reweight nets from timing analysis between L1 rounds.
    pub timing_weighting: bool,
    pub timing_rounds: usize,
    /// Minimum L5 iterations after each reweighting.
    pub timing_min_iterations: usize,
    pub timing_window: usize,
    /// Relative TNS improvement below which L1 stops.
    pub timing_tolerance: f64,
    pub clock_planning: bool,
    pub clock_rounds: usize,
    pub plan_node_cap: usize,
    pub routability_rounds: usize,
    /// Pin-density target as a multiple of the average.
    pub pin_density_factor: f64,
    pub dynamic_precondition: bool,
    /// Divide gradients by `max(1, den)`; off multiplies by `max(1, 1/den)`.
    pub jacobi_precondition: bool,
    pub chain_alignment: bool,
    /// Initial spread of movable instances around the layout centre, as a
    /// fraction of the layout size.
    pub init_spread: f64,
    pub timing: TimingConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            seed: 1,
            threads: 0,
            bins: 0,
            overflow_threshold: 0.10,
            max_iterations: 3000,
            l5_iterations: 1,
            gamma_k: 20.0 / 9.0,
            zeta: 8e-5,
            lambda_reset: 0.1,
            mu_init: 1e-2,
            mu_lo: 1.05,
            mu_hi: 1.06,
            tau: 1e3,
            lambda_cap: 1e3,
            alm_beta: 1.0,
            iota: 1e-4,
            epsilon: 1e-2,
            timing_alpha: 1.0,
            timing_weighting: true,
            timing_rounds: 4,
            timing_min_iterations: 100,
            timing_window: 2,
            timing_tolerance: 0.005,
            clock_planning: true,
            clock_rounds: 3,
            plan_node_cap: 200,
            routability_rounds: 1,
            pin_density_factor: 2.0,
            dynamic_precondition: true,
            jacobi_precondition: true,
            chain_alignment: true,
            init_spread: 0.05,
            timing: TimingConfig::default(),
        }
    }
}

impl EngineConfig {
    /// Parses `key = value` lines over the defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = EngineConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", idx + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
        }
        Ok(cfg)
    }

    /// Overrides one setting; nested keys use a dot (`timing.period_ps`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parsed: toml::Table = toml::from_str(&format!("v = {value}"))
            .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))?;
        let value = parsed["v"].clone();
        let mut table = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let (slot, leaf) = match key.split_once('.') {
            Some((outer, inner)) => match table.get_mut(outer) {
                Some(toml::Value::Table(t)) => (t, inner),
                _ => return Err(Error::Config(format!("unknown key `{key}`"))),
            },
            None => (&mut table, key),
        };
        let Some(old) = slot.get(leaf) else {
            return Err(Error::Config(format!("unknown key `{key}`")));
        };
        // integers are accepted where floats are expected
        let value = match (old, value) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        slot.insert(leaf.to_string(), value);
        *self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("`{key}`: {}", e.message())))?;
        Ok(())
    }

    /// Applies `PREFIX<KEY>` environment overrides, where `KEY` is the
    /// upper-cased key with dots replaced by double underscores.
    pub fn apply_env(&mut self, prefix: &str, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let mut overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|k| (k.to_ascii_lowercase().replace("__", "."), v)))
            .collect();
        overrides.sort();
        for (k, v) in overrides {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let table = toml::Table::try_from(self).expect("config serializes");
        let mut out = String::new();
        for (k, v) in &table {
            match v {
                toml::Value::Table(inner) => {
                    for (ik, iv) in inner {
                        out.push_str(&format!("{k}.{ik} = {iv}\n"));
                    }
                }
                v => out.push_str(&format!("{k} = {v}\n")),
            }
        }
        out
    }
}
