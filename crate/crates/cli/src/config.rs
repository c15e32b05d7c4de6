//! Experiment configurations, read from JSON and overridable from the command line.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use cdfbandit::markets::{EtcMode, DEFAULT_ETC_SCALE};
use cdfbandit::{DistributionSpec, LearnMode, MarketSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Invalid or unreadable configuration. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Theoretical,
    Practical,
}

/// A distribution or market given inline or as a path relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Source<T> {
    fn resolve(
        &self,
        base: &Path,
        parse: impl Fn(&str) -> cdfbandit::Result<T>,
    ) -> anyhow::Result<T> {
        match self {
            Source::Inline(v) => Ok(v.clone()),
            Source::Path(p) => {
                let path = base.join(p);
                let text = fs::read_to_string(&path)
                    .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
                parse(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
            }
        }
    }
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_delta() -> f64 {
    0.1
}

fn default_success_rate() -> f64 {
    0.9
}

fn default_mode() -> ModeName {
    ModeName::Practical
}

fn default_resolutions() -> Vec<u32> {
    vec![8, 16, 32]
}

fn default_benchmark() -> u32 {
    64
}

fn default_scale() -> f64 {
    DEFAULT_ETC_SCALE
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnCdfConfig {
    pub distribution: Source<DistributionSpec>,
    pub eps: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub resolution: u32,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    #[serde(default)]
    pub eps_prime: Option<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub query_cap: Option<u64>,
    /// Sup-grid error at or below which a seed counts as a success.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default = "default_success_rate")]
    pub min_success_rate: f64,
    #[serde(default = "default_true")]
    pub dump_families: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnCdfDensityConfig {
    pub distribution: Source<DistributionSpec>,
    pub eps: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Density bound; defaults to the one declared by the distribution.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Resolution of the evaluation grid; defaults to twice the learner's.
    #[serde(default)]
    pub eval_resolution: Option<u32>,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    #[serde(default)]
    pub eps_prime: Option<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub query_cap: Option<u64>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default = "default_success_rate")]
    pub min_success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub distribution: Source<DistributionSpec>,
    /// Internal accuracy of the representative-family learner.
    pub eps_prime: f64,
    /// Accuracy of the per-point baseline; defaults to `eps_prime`.
    #[serde(default)]
    pub naive_eps: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_resolutions")]
    pub resolutions: Vec<u32>,
    /// Full samples for the empirical CDF; defaults to `ceil(ln(2/delta)) + ceil(1/eps^2)`.
    #[serde(default)]
    pub dkw_samples: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub query_cap: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketPricingConfig {
    pub market: Source<MarketSpec>,
    pub eps: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    /// Internal accuracy in practical mode; defaults to `eps / 3`.
    #[serde(default)]
    pub eps_prime: Option<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub query_cap: Option<u64>,
    /// Grid of the exact brute-force optimum.
    #[serde(default = "default_benchmark")]
    pub benchmark_resolution: u32,
    /// Allowed shortfall from the optimum; defaults to `eps`.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default = "default_success_rate")]
    pub min_success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketRegretConfig {
    pub market: Source<MarketSpec>,
    pub horizons: Vec<u64>,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    /// Practical internal accuracy is `scale * T^{-1/4}`.
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_true")]
    pub write_traces: bool,
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub mode: Option<ModeName>,
    pub eps_prime: Option<f64>,
    pub query_cap: Option<u64>,
}

pub fn parse_seed_list(text: &str) -> anyhow::Result<Vec<u64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u64>()
                .map_err(|e| config_err(format!("bad seed {s:?}: {e}")))
        })
        .collect()
}

pub fn load<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn base_dir(config_path: Option<&Path>) -> PathBuf {
    config_path
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

fn check_seeds(seeds: &[u64]) -> anyhow::Result<()> {
    if seeds.is_empty() {
        return Err(config_err("at least one seed is required"));
    }
    Ok(())
}

fn check_rate(rate: f64) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(config_err(format!(
            "min_success_rate {rate} must lie in [0,1]"
        )));
    }
    Ok(())
}

fn learn_mode(mode: ModeName, eps_prime: Option<f64>) -> anyhow::Result<LearnMode> {
    match (mode, eps_prime) {
        (ModeName::Theoretical, _) => Ok(LearnMode::Theoretical),
        (ModeName::Practical, Some(eps_prime)) => Ok(LearnMode::Practical { eps_prime }),
        (ModeName::Practical, None) => Err(config_err("practical mode needs eps_prime")),
    }
}

impl LearnCdfConfig {
    pub fn apply(&mut self, o: &Overrides) {
        apply_common(
            o,
            &mut self.seeds,
            Some(&mut self.mode),
            Some(&mut self.eps_prime),
            Some(&mut self.query_cap),
        );
    }

    pub fn learn_mode(&self) -> anyhow::Result<LearnMode> {
        learn_mode(self.mode, self.eps_prime)
    }

    pub fn resolve(&self, config_path: Option<&Path>) -> anyhow::Result<DistributionSpec> {
        check_seeds(&self.seeds)?;
        check_rate(self.min_success_rate)?;
        self.learn_mode()?;
        self.distribution
            .resolve(&base_dir(config_path), DistributionSpec::from_json)
    }
}

impl LearnCdfDensityConfig {
    pub fn apply(&mut self, o: &Overrides) {
        apply_common(
            o,
            &mut self.seeds,
            Some(&mut self.mode),
            Some(&mut self.eps_prime),
            Some(&mut self.query_cap),
        );
    }

    pub fn learn_mode(&self) -> anyhow::Result<LearnMode> {
        learn_mode(self.mode, self.eps_prime)
    }

    pub fn resolve(&self, config_path: Option<&Path>) -> anyhow::Result<DistributionSpec> {
        check_seeds(&self.seeds)?;
        check_rate(self.min_success_rate)?;
        self.learn_mode()?;
        self.distribution
            .resolve(&base_dir(config_path), DistributionSpec::from_json)
    }
}

impl CompareConfig {
    pub fn apply(&mut self, o: &Overrides) {
        apply_common(o, &mut self.seeds, None, None, Some(&mut self.query_cap));
        if let Some(e) = o.eps_prime {
            self.eps_prime = e;
        }
    }

    pub fn resolve(&self, config_path: Option<&Path>) -> anyhow::Result<DistributionSpec> {
        check_seeds(&self.seeds)?;
        if self.resolutions.is_empty() {
            return Err(config_err("at least one resolution is required"));
        }
        self.distribution
            .resolve(&base_dir(config_path), DistributionSpec::from_json)
    }
}

impl MarketPricingConfig {
    pub fn apply(&mut self, o: &Overrides) {
        apply_common(
            o,
            &mut self.seeds,
            Some(&mut self.mode),
            Some(&mut self.eps_prime),
            Some(&mut self.query_cap),
        );
    }

    pub fn learn_mode(&self) -> anyhow::Result<LearnMode> {
        learn_mode(self.mode, Some(self.eps_prime.unwrap_or(self.eps / 3.0)))
    }

    pub fn resolve(&self, config_path: Option<&Path>) -> anyhow::Result<MarketSpec> {
        check_seeds(&self.seeds)?;
        check_rate(self.min_success_rate)?;
        self.market
            .resolve(&base_dir(config_path), MarketSpec::from_json)
    }
}

impl MarketRegretConfig {
    pub fn apply(&mut self, o: &Overrides) -> anyhow::Result<()> {
        if o.eps_prime.is_some() || o.query_cap.is_some() {
            return Err(config_err(
                "market-regret sets its own accuracy and budget; use `scale` and `horizons` in the config",
            ));
        }
        apply_common(o, &mut self.seeds, Some(&mut self.mode), None, None);
        Ok(())
    }

    pub fn etc_mode(&self) -> EtcMode {
        match self.mode {
            ModeName::Theoretical => EtcMode::Theoretical,
            ModeName::Practical => EtcMode::Practical { scale: self.scale },
        }
    }

    pub fn resolve(&self, config_path: Option<&Path>) -> anyhow::Result<MarketSpec> {
        check_seeds(&self.seeds)?;
        if self.horizons.is_empty() {
            return Err(config_err("at least one horizon is required"));
        }
        self.market
            .resolve(&base_dir(config_path), MarketSpec::from_json)
    }
}

fn apply_common(
    o: &Overrides,
    seeds: &mut Vec<u64>,
    mode: Option<&mut ModeName>,
    eps_prime: Option<&mut Option<f64>>,
    query_cap: Option<&mut Option<u64>>,
) {
    if let Some(s) = &o.seeds {
        seeds.clone_from(s);
    }
    if let (Some(m), Some(slot)) = (o.mode, mode) {
        *slot = m;
    }
    if let (Some(e), Some(slot)) = (o.eps_prime, eps_prime) {
        *slot = Some(e);
    }
    if let (Some(c), Some(slot)) = (o.query_cap, query_cap) {
        *slot = Some(c);
    }
}
