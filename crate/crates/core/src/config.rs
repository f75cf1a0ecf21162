//! Run configuration, loaded from JSON. Every field has a default so a config
//! file only needs the values it changes.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{HeuristicWeights, LlmConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Baseline,
    /// Language model over HTTP.
    Llm,
    /// Language-model pipeline answered by the offline heuristic mock.
    MockHeuristic,
}

impl Strategy {
    pub fn uses_llm_pipeline(self) -> bool {
        !matches!(self, Strategy::Baseline)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Baseline => "baseline",
            Strategy::Llm => "llm",
            Strategy::MockHeuristic => "mock-heuristic",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Strategy::Baseline),
            "llm" => Ok(Strategy::Llm),
            "mock-heuristic" => Ok(Strategy::MockHeuristic),
            other => Err(format!(
                "unknown method {other:?} (expected baseline, llm or mock-heuristic)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_robots: usize,
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub seed: u64,
    pub method: Strategy,
    /// ASCII world file. Relative paths resolve against the config file.
    pub env_path: PathBuf,
    pub d_join: f64,
    pub llm: LlmConfig,
    pub heuristic: HeuristicWeights,
    pub snapshot_every: Option<usize>,
    pub out_dir: PathBuf,
    pub general_leave_rule: bool,
    /// Verify team, battery and motion invariants after every step.
    pub check_invariants: bool,
    /// Issue one step's model requests from parallel threads.
    pub concurrent_selection: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_robots: 15,
            total_steps: 300,
            warmup_steps: 20,
            seed: 0,
            method: Strategy::Baseline,
            env_path: PathBuf::from("world.txt"),
            d_join: 2.0,
            llm: LlmConfig::default(),
            heuristic: HeuristicWeights::default(),
            snapshot_every: None,
            out_dir: PathBuf::from("out"),
            general_leave_rule: false,
            check_invariants: true,
            concurrent_selection: true,
        }
    }
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: SimConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })?;
        if cfg.env_path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.env_path = dir.join(&cfg.env_path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_robots == 0 {
            return Err(Error::Config("n_robots must be at least 1".into()));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps ({}) exceeds total_steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.d_join.is_nan() || self.d_join < 0.0 {
            return Err(Error::Config("d_join must be non-negative".into()));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::Config("snapshot_every must be positive".into()));
        }
        if self.method == Strategy::Llm {
            self.llm
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}
