//! Experiment configuration: a TOML document in which every field is optional.
//!
//! | field | default |
//! |---|---|
//! | `environment` | `"sirs"` |
//! | `seed` | `0` |
//! | `algorithm.kind` | `"at_ucb"` |
//! | `algorithm.n` / `algorithm.n_prime` | `100` / `20` |
//! | `algorithm.delta` | `0.1` |
//! | `algorithm.cost_c` | `0` |
//! | `experiment.repeats` | `10` |
//! | `experiment.paired_seeds` | `true` |
//! | `measure.m` | `500` |
//! | `pilot.samples` | `2000` |
//! | `sirs.k`, `sirs.n_per_community`, `sirs.dt`, `sirs.t_end` | `10`, `100`, `0.5`, `50` |
//! | `sirs.group_sizes` | `[3, 3, 2, 2]` |
//! | `sirs.abstract_n_per_community`, `sirs.abstract_dt` | `50`, `2` |
//! | `sirs.reward_scale` | `0.01` |

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::algorithms::DeltaSetting;
use crate::error::{CamabError, Result};
use crate::metrics::{AffineMap, GaussianSpec};
use crate::sirs::{default_beta, GroupingMap, SirsCamab, SirsParams, DEFAULT_REWARD_SCALE};
use crate::theory::{reference_spec, SyntheticCamabSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    #[default]
    Sirs,
    Synthetic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    #[default]
    AtUcb,
    Ucb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentKind,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub algorithm: AlgorithmConfig,
    pub experiment: RepeatConfig,
    pub measure: MeasureConfig,
    pub pilot: PilotConfig,
    pub sirs: SirsConfig,
    pub synthetic: SyntheticConfig,
    pub verify: VerifyConfig,
    pub simulate: SimulateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            environment: EnvironmentKind::Sirs,
            seed: 0,
            output: None,
            algorithm: AlgorithmConfig::default(),
            experiment: RepeatConfig::default(),
            measure: MeasureConfig::default(),
            pilot: PilotConfig::default(),
            sirs: SirsConfig::default(),
            synthetic: SyntheticConfig::default(),
            verify: VerifyConfig::default(),
            simulate: SimulateConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    pub n: u64,
    pub n_prime: u64,
    pub delta: DeltaSetting,
    /// Threshold for `run`; when absent the measured `epsilon(alpha)` is used.
    pub epsilon: Option<f64>,
    /// Grid for `sweep`; when absent, 8 geometric points over
    /// `[eps/8, 4 eps]` around the measured `epsilon(alpha)`.
    pub epsilon_grid: Option<Vec<f64>>,
    pub cost_c: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            kind: AlgorithmKind::AtUcb,
            n: 100,
            n_prime: 20,
            delta: DeltaSetting::Fixed(0.1),
            epsilon: None,
            epsilon_grid: None,
            cost_c: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepeatConfig {
    pub repeats: usize,
    /// UCB and AT-UCB share base-phase reward draws within a repeat.
    pub paired_seeds: bool,
}

impl Default for RepeatConfig {
    fn default() -> Self {
        RepeatConfig {
            repeats: 10,
            paired_seeds: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    /// Samples per arm for each error estimate.
    pub m: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig { m: 500 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotConfig {
    /// Samples per arm used to estimate true means.
    pub samples: usize,
    /// Derived from the master seed when absent.
    pub seed: Option<u64>,
    /// Directory for cached pilot means; in-process only when absent.
    pub cache_dir: Option<PathBuf>,
}

impl Default for PilotConfig {
    fn default() -> Self {
        PilotConfig {
            samples: 2000,
            seed: None,
            cache_dir: None,
        }
    }
}

/// A rate given once for all communities or once per community.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rates {
    Uniform(f64),
    PerCommunity(Vec<f64>),
}

impl Rates {
    fn expand(&self, k: usize, field: &str) -> Result<Vec<f64>> {
        match self {
            Rates::Uniform(r) => Ok(vec![*r; k]),
            Rates::PerCommunity(v) if v.len() == k => Ok(v.clone()),
            Rates::PerCommunity(v) => Err(CamabError::config(
                field,
                format!("expected {k} values, got {}", v.len()),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SirsConfig {
    pub k: usize,
    pub n_per_community: u32,
    pub dt: f64,
    pub t_end: f64,
    /// [`default_beta`] when absent.
    pub beta: Option<Vec<f64>>,
    pub gamma: Rates,
    pub zeta: Rates,
    pub lockdown_window: [f64; 2],
    pub init_fracs: [f64; 3],
    pub group_sizes: Vec<usize>,
    pub abstract_n_per_community: u32,
    pub abstract_dt: f64,
    /// Overrides for the abstract rates, one value per group.
    pub abstract_beta: Option<Vec<f64>>,
    pub abstract_gamma: Option<Vec<f64>>,
    pub abstract_zeta: Option<Vec<f64>>,
    pub reward_scale: f64,
    /// Defaults to `reward_scale` times the population-time alignment factor.
    pub abstract_reward_scale: Option<f64>,
}

impl Default for SirsConfig {
    fn default() -> Self {
        let base = SirsParams::base_default();
        SirsConfig {
            k: base.k,
            n_per_community: base.n_per_community,
            dt: base.dt,
            t_end: base.t_end,
            beta: None,
            gamma: Rates::Uniform(base.gamma[0]),
            zeta: Rates::Uniform(base.zeta[0]),
            lockdown_window: [base.lockdown_window.0, base.lockdown_window.1],
            init_fracs: [base.init_fracs.0, base.init_fracs.1, base.init_fracs.2],
            group_sizes: vec![3, 3, 2, 2],
            abstract_n_per_community: 50,
            abstract_dt: 2.0,
            abstract_beta: None,
            abstract_gamma: None,
            abstract_zeta: None,
            reward_scale: DEFAULT_REWARD_SCALE,
            abstract_reward_scale: None,
        }
    }
}

impl SirsConfig {
    pub fn base_params(&self) -> Result<SirsParams> {
        let beta = match &self.beta {
            Some(b) => Rates::PerCommunity(b.clone()).expand(self.k, "sirs.beta")?,
            None => default_beta(self.k),
        };
        let params = SirsParams {
            k: self.k,
            n_per_community: self.n_per_community,
            dt: self.dt,
            t_end: self.t_end,
            beta,
            gamma: self.gamma.expand(self.k, "sirs.gamma")?,
            zeta: self.zeta.expand(self.k, "sirs.zeta")?,
            lockdown_window: (self.lockdown_window[0], self.lockdown_window[1]),
            init_fracs: (self.init_fracs[0], self.init_fracs[1], self.init_fracs[2]),
        };
        params.validate("sirs")?;
        Ok(params)
    }

    pub fn grouping(&self) -> Result<GroupingMap> {
        let total: usize = self.group_sizes.iter().sum();
        if total != self.k {
            return Err(CamabError::config(
                "sirs.group_sizes",
                format!("sizes sum to {total}, expected k = {}", self.k),
            ));
        }
        GroupingMap::contiguous(&self.group_sizes)
            .map_err(|e| CamabError::config("sirs.group_sizes", e.to_string()))
    }

    pub fn build(&self) -> Result<SirsCamab> {
        let base = self.base_params()?;
        let grouping = self.grouping()?;
        let mut abs = SirsParams::abstracted(&base, &grouping, self.abstract_n_per_community, self.abstract_dt)
            .map_err(|e| match e {
                CamabError::Config { field, message } => {
                    CamabError::config(field.replace("sirs.abstract.", "sirs.abstract_"), message)
                }
                other => other,
            })?;
        let groups = grouping.abstract_count();
        let overrides = [
            (&self.abstract_beta, &mut abs.beta, "sirs.abstract_beta"),
            (&self.abstract_gamma, &mut abs.gamma, "sirs.abstract_gamma"),
            (&self.abstract_zeta, &mut abs.zeta, "sirs.abstract_zeta"),
        ];
        for (given, target, field) in overrides {
            if let Some(v) = given {
                *target = Rates::PerCommunity(v.clone()).expand(groups, field)?;
            }
        }
        abs.validate("sirs.abstract")?;
        let model = SirsCamab::new(base, abs, grouping, self.reward_scale)?;
        match self.abstract_reward_scale {
            Some(s) => model.with_abstract_scale(s),
            None => Ok(model),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub base: Vec<GaussianSpec>,
    #[serde(rename = "abstract")]
    pub abstract_arms: Vec<GaussianSpec>,
    pub omega: Vec<usize>,
    pub tau: AffineMap,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let spec = reference_spec();
        SyntheticConfig {
            base: spec.base_arms,
            abstract_arms: spec.abstract_arms,
            omega: spec.omega.targets().to_vec(),
            tau: spec.tau,
        }
    }
}

impl SyntheticConfig {
    pub fn build(&self) -> Result<SyntheticCamabSpec> {
        if self.omega.len() != self.base.len() {
            return Err(CamabError::config(
                "synthetic.omega",
                format!("{} entries for {} base arms", self.omega.len(), self.base.len()),
            ));
        }
        if let Some(i) = self.omega.iter().position(|&t| t >= self.abstract_arms.len()) {
            return Err(CamabError::config(
                format!("synthetic.omega[{i}]"),
                format!("{} is not an abstract arm", self.omega[i]),
            ));
        }
        let arms = [("synthetic.base", &self.base), ("synthetic.abstract", &self.abstract_arms)];
        for (field, list) in arms {
            if list.is_empty() {
                return Err(CamabError::config(field, "needs at least one arm"));
            }
            if let Some(i) = list.iter().position(|g| !g.mean.is_finite() || !(g.std >= 0.0) || !g.std.is_finite()) {
                return Err(CamabError::config(format!("{field}[{i}]"), "mean must be finite and std >= 0"));
            }
        }
        if !self.tau.scale.is_finite() || !self.tau.shift.is_finite() {
            return Err(CamabError::config("synthetic.tau", "must be finite"));
        }
        SyntheticCamabSpec::new(self.base.clone(), self.abstract_arms.clone(), self.omega.clone(), self.tau)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random specs for the per-arm mean and gap bounds and the sandwich check.
    pub specs: usize,
    pub lemma3_specs: usize,
    pub lemma3_n: u64,
    /// Fixed abstract budget for the exponential-sum rows; the per-spec minimum when
    /// absent.
    pub lemma3_n_prime: Option<u64>,
    /// Multiplier on `epsilon(alpha)` in the sandwich check; 1 is the theorem.
    pub epsilon_scale: f64,
    pub mc_runs: usize,
    pub mc_n: u64,
    pub mc_n_prime: Option<u64>,
    pub mc_cost_c: f64,
    pub mc_delta: DeltaSetting,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            specs: 100,
            lemma3_specs: 50,
            lemma3_n: 100,
            lemma3_n_prime: None,
            epsilon_scale: 1.0,
            mc_runs: 200,
            mc_n: 1000,
            mc_n_prime: None,
            mc_cost_c: 0.01,
            mc_delta: DeltaSetting::OneOverNSquared,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Base,
    Abstract,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelKind,
    /// Community to lock down; none when absent.
    pub action: Option<usize>,
}

fn check(ok: bool, field: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CamabError::config(field, message))
    }
}

impl ExperimentConfig {
    pub fn abstract_arm_count(&self) -> Result<usize> {
        Ok(match self.environment {
            EnvironmentKind::Sirs => self.sirs.group_sizes.len(),
            EnvironmentKind::Synthetic => self.synthetic.abstract_arms.len(),
        })
    }

    pub fn base_arm_count(&self) -> usize {
        match self.environment {
            EnvironmentKind::Sirs => self.sirs.k,
            EnvironmentKind::Synthetic => self.synthetic.base.len(),
        }
    }

    /// Checks every field the selected environment and commands refer to.
    pub fn validate(&self) -> Result<()> {
        match self.environment {
            EnvironmentKind::Sirs => {
                self.sirs.build()?;
            }
            EnvironmentKind::Synthetic => {
                self.synthetic.build()?;
            }
        }
        let a = &self.algorithm;
        check(a.n > 0, "algorithm.n", "must be positive")?;
        let k_abs = self.abstract_arm_count()?;
        check(
            a.n_prime >= k_abs as u64,
            "algorithm.n_prime",
            format!("must be at least the {k_abs} abstract arms"),
        )?;
        a.delta
            .validate()
            .map_err(|e| CamabError::config("algorithm.delta", e.to_string()))?;
        if let Some(eps) = a.epsilon {
            check(eps >= 0.0, "algorithm.epsilon", "must be >= 0")?;
        }
        if let Some(grid) = &a.epsilon_grid {
            check(!grid.is_empty(), "algorithm.epsilon_grid", "must not be empty")?;
            for (i, &eps) in grid.iter().enumerate() {
                check(eps >= 0.0, &format!("algorithm.epsilon_grid[{i}]"), "must be >= 0")?;
            }
        }
        check(a.cost_c >= 0.0 && a.cost_c.is_finite(), "algorithm.cost_c", "must be finite and >= 0")?;
        check(self.experiment.repeats > 0, "experiment.repeats", "must be positive")?;
        check(self.measure.m >= 2, "measure.m", "must be at least 2")?;
        check(self.pilot.samples > 0, "pilot.samples", "must be positive")?;

        let v = &self.verify;
        check(v.specs > 0, "verify.specs", "must be positive")?;
        check(v.lemma3_n > 0, "verify.lemma3_n", "must be positive")?;
        check(v.epsilon_scale >= 0.0 && v.epsilon_scale.is_finite(), "verify.epsilon_scale", "must be finite and >= 0")?;
        check(v.mc_runs > 0, "verify.mc_runs", "must be positive")?;
        check(v.mc_n > 0, "verify.mc_n", "must be positive")?;
        check(v.mc_cost_c >= 0.0 && v.mc_cost_c.is_finite(), "verify.mc_cost_c", "must be finite and >= 0")?;
        v.mc_delta
            .validate()
            .map_err(|e| CamabError::config("verify.mc_delta", e.to_string()))?;

        if let Some(action) = self.simulate.action {
            let k = match (self.environment, self.simulate.model) {
                (EnvironmentKind::Sirs, ModelKind::Abstract) => self.sirs.group_sizes.len(),
                _ => self.sirs.k,
            };
            check(action < k, "simulate.action", format!("must be below {k}"))?;
        }
        Ok(())
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text)
        .map_err(|e| CamabError::config("<document>", e.to_string().trim().to_string()))?;
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        CamabError::config(field, e.into_inner().to_string().trim().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
