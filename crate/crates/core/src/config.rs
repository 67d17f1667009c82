//! Experiment configuration: a TOML file with one section per module.
//! Unknown keys are rejected so typos fail loudly instead of silently
//! running with defaults.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::valuation::ValuationParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Full market pipeline on generated data.
    Market,
    /// The built-in four-device demonstration game.
    DemoGame,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Number of data groups; also the number of type levels K.
    pub groups: usize,
    pub devices_per_group: usize,
    pub samples_per_device: usize,
    pub feature_dim: usize,
    /// Pairwise signal correlation between devices of the same group.
    pub within_group_correlation: f64,
    /// Cross-group correlation decays by this factor per unit of group
    /// distance (applied on top of the within-group level).
    pub group_correlation_decay: f64,
    /// Per-group privacy preference centers, length = `groups`.
    pub xi_levels: Vec<f64>,
    /// Uniform jitter applied around each center.
    pub xi_jitter: f64,
    /// Sample counts of the two sellers in the value-depression scenario.
    pub depression_sample_counts: Vec<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            kind: ScenarioKind::Market,
            groups: 2,
            devices_per_group: 5,
            samples_per_device: 60,
            feature_dim: 2,
            within_group_correlation: 0.0,
            group_correlation_decay: 0.5,
            xi_levels: vec![0.08, 0.52],
            xi_jitter: 0.01,
            depression_sample_counts: vec![5, 2],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub train_steps: usize,
    pub learning_rate: f64,
    /// Monte Carlo draws for the marginal-contribution estimate.
    pub mc_draws: usize,
    /// Mini-batch bound B in the contribution estimate.
    pub batch_size: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            train_steps: 120,
            learning_rate: 0.1,
            mc_draws: 16,
            batch_size: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValuationConfig {
    pub gamma: f64,
    pub a0: f64,
    pub b: f64,
    pub noise_mu: f64,
    pub noise_sigma: f64,
    /// Leakage factor per trading round for the depression series.
    pub leakage_rounds: Vec<f64>,
    pub price_min: f64,
    pub price_max: f64,
    pub price_steps: usize,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        ValuationConfig {
            gamma: 1.0,
            a0: 0.2,
            b: 0.1,
            noise_mu: 0.5,
            noise_sigma: 1.0,
            leakage_rounds: vec![0.0, 0.15, 0.5, 0.9],
            price_min: 1.0,
            price_max: 10.0,
            price_steps: 19,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeakageConfig {
    /// Convergence tolerance of the sequential correlation estimate.
    pub tolerance: f64,
    /// Zero out estimated correlations below the statistical noise floor
    /// `3/sqrt(rounds)` before deriving influence.
    pub denoise: bool,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        LeakageConfig {
            tolerance: 5e-4,
            denoise: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketSectionConfig {
    /// Market budget per device; the total budget scales with M.
    pub budget_per_device: f64,
    /// Sensitivity of the market to a device's exposed value in the
    /// non-cooperative baseline.
    pub delta: f64,
    pub rho_max: f64,
    pub coalition_cost_bound: f64,
    /// Scalar opportunity-cost threshold, broadcast to every device.
    pub phi_threshold: f64,
    pub unit_comm_cost: f64,
    pub comm_rounds: usize,
    pub max_iters: usize,
}

impl Default for MarketSectionConfig {
    fn default() -> Self {
        MarketSectionConfig {
            budget_per_device: 1.1,
            delta: 0.5,
            rho_max: 1_000.0,
            coalition_cost_bound: 1_000.0,
            phi_threshold: 1_000.0,
            unit_comm_cost: 0.004,
            comm_rounds: 1,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub learner: LearnerConfig,
    pub valuation: ValuationConfig,
    pub leakage: LeakageConfig,
    pub market: MarketSectionConfig,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn num_devices(&self) -> usize {
        self.scenario.groups * self.scenario.devices_per_group
    }

    pub fn valuation_params(&self) -> ValuationParams {
        ValuationParams {
            gamma: self.valuation.gamma,
            a0: self.valuation.a0,
            noise_mu: self.valuation.noise_mu,
            noise_sigma: self.valuation.noise_sigma,
            b: self.valuation.b,
            g: 0.0,
        }
    }

    /// The linear price grid for valuation sweeps.
    pub fn price_grid(&self) -> Vec<f64> {
        let v = &self.valuation;
        if v.price_steps <= 1 {
            return vec![v.price_min];
        }
        let step = (v.price_max - v.price_min) / (v.price_steps - 1) as f64;
        (0..v.price_steps)
            .map(|i| v.price_min + step * i as f64)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if s.kind == ScenarioKind::Market {
            if s.groups == 0 || s.devices_per_group == 0 {
                return Err(Error::Config("groups and devices_per_group must be >= 1".into()));
            }
            if s.samples_per_device == 0 {
                return Err(Error::Config("samples_per_device must be >= 1".into()));
            }
            if s.feature_dim == 0 {
                return Err(Error::Config("feature_dim must be >= 1".into()));
            }
            if s.xi_levels.len() != s.groups {
                return Err(Error::Config(format!(
                    "xi_levels must list one center per group ({} != {})",
                    s.xi_levels.len(),
                    s.groups
                )));
            }
            if s.xi_levels.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::Config("xi_levels entries must be in [0, 1]".into()));
            }
            if !(0.0..1.0).contains(&s.within_group_correlation.abs()) {
                return Err(Error::Config(
                    "within_group_correlation must have magnitude < 1".into(),
                ));
            }
            if !(0.0..=1.0).contains(&s.group_correlation_decay) {
                return Err(Error::Config(
                    "group_correlation_decay must be in [0, 1]".into(),
                ));
            }
            if s.xi_jitter < 0.0 {
                return Err(Error::Config("xi_jitter must be >= 0".into()));
            }
        }
        if s.depression_sample_counts.len() < 2 || s.depression_sample_counts.iter().any(|&n| n == 0)
        {
            return Err(Error::Config(
                "depression_sample_counts needs >= 2 positive counts".into(),
            ));
        }

        let l = &self.learner;
        if l.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if l.mc_draws == 0 || l.batch_size == 0 {
            return Err(Error::Config("mc_draws and batch_size must be >= 1".into()));
        }

        self.valuation_params()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let v = &self.valuation;
        if v.price_min < 0.0 || v.price_max < v.price_min || v.price_steps == 0 {
            return Err(Error::Config("invalid price grid".into()));
        }
        if v.leakage_rounds.iter().any(|&g| !(0.0..=1.0).contains(&g)) {
            return Err(Error::Config("leakage_rounds entries must be in [0, 1]".into()));
        }

        if self.leakage.tolerance <= 0.0 {
            return Err(Error::Config("leakage tolerance must be > 0".into()));
        }

        let m = &self.market;
        if m.budget_per_device < 0.0
            || m.delta < 0.0
            || m.rho_max < 0.0
            || m.coalition_cost_bound < 0.0
            || m.phi_threshold < 0.0
            || m.unit_comm_cost < 0.0
        {
            return Err(Error::Config("market scalars must be non-negative".into()));
        }
        if m.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}
