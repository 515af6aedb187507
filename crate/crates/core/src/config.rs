//! JSON experiment configuration.
//!
//! A config has the sections `model`, `point`, `schedule`, `engines`, `seeds` and
//! `budget`. Unknown keys anywhere are rejected.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, LinearRule, System};
use crate::gibbs::{GibbsSystem, Potential};
use crate::models::{CountableModel, TwoElementModel, DEFAULT_ALPHABET_CUTOFF};
use crate::returns::{Engine, DEFAULT_R_MAX};
use crate::symbolic::{PeriodicPoint, Symbol, TransitionMatrix, Word};

pub const DEFAULT_BUDGET_STATES: u64 = 1 << 36;
pub const DEFAULT_TRIALS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    TwoElement { alpha: f64, beta: f64, driving_p: f64 },
    Countable { epsilon: f64, alphabet_cutoff: Option<Symbol> },
    /// Gibbs state of a locally constant potential on a subshift of finite type.
    Gibbs { transitions: Vec<Vec<u8>>, depth: usize, values: Vec<PotentialEntry> },
    /// Bernoulli measure seen as a Gibbs state.
    Bernoulli { weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialEntry {
    pub word: WordSpec,
    pub value: f64,
}

/// A word written either as text (`"0101"`, `"0,1,12"`) or as an array of symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WordSpec {
    Text(String),
    Symbols(Vec<Symbol>),
}

impl WordSpec {
    pub fn to_word(&self) -> Result<Word> {
        match self {
            WordSpec::Text(s) => s.parse(),
            WordSpec::Symbols(v) => Word::new(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub t: f64,
    pub n_list: Vec<usize>,
    #[serde(default = "default_u_list")]
    pub u_list: Vec<usize>,
    #[serde(default = "default_r_max")]
    pub r_max: usize,
    #[serde(default = "default_delta")]
    pub delta: LinearRule,
    #[serde(default = "default_big_m")]
    pub big_m: LinearRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSpec {
    pub enabled: Vec<Engine>,
    #[serde(default = "default_trials")]
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    pub master: u64,
    #[serde(default = "default_environments")]
    pub environments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    #[serde(default = "default_budget")]
    pub states: u64,
}

impl Default for BudgetSpec {
    fn default() -> Self {
        BudgetSpec { states: DEFAULT_BUDGET_STATES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub point: WordSpec,
    pub schedule: Option<ScheduleSpec>,
    pub engines: Option<EngineSpec>,
    pub seeds: Option<SeedSpec>,
    #[serde(default)]
    pub budget: BudgetSpec,
}

fn default_u_list() -> Vec<usize> {
    vec![0, 1, 2]
}
fn default_r_max() -> usize {
    DEFAULT_R_MAX
}
fn default_delta() -> LinearRule {
    LinearRule::IDENTITY
}
fn default_big_m() -> LinearRule {
    LinearRule::HALF
}
fn default_trials() -> u64 {
    DEFAULT_TRIALS
}
fn default_environments() -> usize {
    1
}
fn default_budget() -> u64 {
    DEFAULT_BUDGET_STATES
}

impl ModelSpec {
    pub fn build(&self) -> Result<System<f64>> {
        Ok(match self {
            ModelSpec::TwoElement { alpha, beta, driving_p } => {
                System::TwoElement(TwoElementModel::new(*alpha, *beta, *driving_p)?)
            }
            ModelSpec::Countable { epsilon, alphabet_cutoff } => {
                System::Countable(CountableModel::new(*epsilon, alphabet_cutoff.unwrap_or(DEFAULT_ALPHABET_CUTOFF))?)
            }
            ModelSpec::Gibbs { transitions, depth, values } => {
                let tm = TransitionMatrix::from_rows(transitions.clone())?;
                let mut map = HashMap::new();
                for e in values {
                    let w = e.word.to_word()?;
                    if map.insert(w.symbols().to_vec(), e.value).is_some() {
                        return Err(Error::Config(format!("potential value for {w} given twice")));
                    }
                }
                System::Gibbs(GibbsSystem::new(Potential::new(*depth, map, &tm)?, tm)?)
            }
            ModelSpec::Bernoulli { weights } => System::Gibbs(GibbsSystem::bernoulli(weights)?),
        })
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and parses `path`; errors name the file together with line and column.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::from_json(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok((cfg, bytes))
    }

    pub fn periodic_point(&self) -> Result<PeriodicPoint> {
        Ok(PeriodicPoint::new(self.point.to_word()?))
    }

    /// Full experiment description; `seed` and `budget` override the file.
    pub fn experiment(&self, seed: Option<u64>, budget: Option<u64>) -> Result<ExperimentConfig<f64>> {
        let schedule = self.schedule.as_ref().ok_or_else(|| Error::Config("missing section `schedule`".into()))?;
        let engines = self.engines.as_ref().ok_or_else(|| Error::Config("missing section `engines`".into()))?;
        let seeds = self.seeds.as_ref().ok_or_else(|| Error::Config("missing section `seeds`".into()))?;
        let cfg = ExperimentConfig {
            system: self.model.build()?,
            point: self.periodic_point()?,
            t: schedule.t,
            n_list: schedule.n_list.clone(),
            u_list: schedule.u_list.clone(),
            environments: seeds.environments,
            trials: engines.trials,
            master_seed: seed.unwrap_or(seeds.master),
            delta_rule: schedule.delta,
            m_rule: schedule.big_m,
            engines: engines.enabled.clone(),
            r_max: schedule.r_max,
            budget: budget.unwrap_or(self.budget.states) as u128,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
