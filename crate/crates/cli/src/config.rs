//! The JSON run configuration.

use std::path::{Path, PathBuf};

use dhg::train::{GradientKind, Schedule, TrainConfig};
use dhg::{MeasureId, Preset};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, IoContext};
use crate::probes::{Probe, ProbeSpec};

const REQUIRED: [&str; 6] = ["problem", "gradient_kind", "d", "width", "iterations", "batch"];

fn default_modes() -> usize {
    250
}

fn default_one() -> f64 {
    1.0
}

fn default_log_every() -> u64 {
    1000
}

fn default_eval_batch() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    /// Samples for ME/RMSE/RE and the residual norm.
    #[serde(default = "EvalSettings::default_k")]
    pub k: usize,
    /// Samples for the derivative norms.
    #[serde(default = "EvalSettings::default_derivative_k")]
    pub derivative_k: usize,
    #[serde(default)]
    pub seed: u64,
    /// Monte Carlo paths for finite-difference probe values of stochastic Burgers.
    #[serde(default = "EvalSettings::default_fd_paths")]
    pub fd_paths: usize,
}

impl EvalSettings {
    fn default_k() -> usize {
        1_000_000
    }

    fn default_derivative_k() -> usize {
        10_000
    }

    fn default_fd_paths() -> usize {
        100
    }
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            k: Self::default_k(),
            derivative_k: Self::default_derivative_k(),
            seed: 0,
            fd_paths: Self::default_fd_paths(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Preset,
    #[serde(default)]
    pub hjb: bool,
    pub gradient_kind: GradientKind,
    pub d: usize,
    /// Actor output modes; defaults to `d`.
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default = "default_modes")]
    pub modes: usize,
    pub width: usize,
    #[serde(default)]
    pub actor_width: Option<usize>,
    pub batch: usize,
    pub iterations: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub critic_schedule: Option<Schedule>,
    #[serde(default)]
    pub actor_schedule: Option<Schedule>,
    #[serde(default)]
    pub measure: Option<MeasureId>,
    #[serde(default = "default_one")]
    pub gamma: f64,
    #[serde(default = "default_one")]
    pub lambda: f64,
    #[serde(default)]
    pub probes: Vec<ProbeSpec>,
    #[serde(default)]
    pub checkpoint_every: u64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default = "default_eval_batch")]
    pub eval_batch: usize,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Parses and validates; errors name the offending key.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| CliError::config("<root>", "the configuration must be a JSON object"))?;
        if let Some(missing) = REQUIRED.iter().find(|k| !obj.contains_key(**k)) {
            return Err(CliError::config(*missing, "missing required key"));
        }
        let config: RunConfig = serde_json::from_value(value.clone()).map_err(|e| {
            let msg = e.to_string();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field") || msg.starts_with("unknown variant"))
                .unwrap_or("<config>")
                .to_string();
            let key = if msg.starts_with("unknown variant") {
                REQUIRED
                    .iter()
                    .chain(["measure"].iter())
                    .find(|k| obj.get(**k).and_then(|v| v.as_str()) == Some(key.as_str()))
                    .map(|k| k.to_string())
                    .unwrap_or(key)
            } else {
                key
            };
            CliError::config(key, msg)
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<(Self, String)> {
        let text = std::fs::read_to_string(path).at(path)?;
        Ok((Self::from_json(&text)?, text))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.train_config().validate()?;
        for probe in &self.probes {
            Probe::parse(probe, self.modes)?;
        }
        if self.eval.k == 0 {
            return Err(CliError::config("eval.k", "must be positive"));
        }
        if self.hjb && self.problem.is_burgers() {
            return Err(CliError::config("hjb", "only the heat problems have an HJB form"));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let base = TrainConfig::new(self.problem, self.gradient_kind, self.d, self.width, self.modes);
        TrainConfig {
            hjb: self.hjb,
            iterations: self.iterations,
            batch: self.batch,
            actor_modes: self.p.unwrap_or(self.d),
            actor_width: self.actor_width.unwrap_or(self.width),
            critic_schedule: self.critic_schedule.unwrap_or(base.critic_schedule),
            actor_schedule: self.actor_schedule.unwrap_or(base.actor_schedule),
            seed: self.seed,
            measure: self.measure.unwrap_or(base.measure),
            gamma: self.gamma,
            lambda: self.lambda,
            checkpoint_every: self.checkpoint_every,
            log_every: self.log_every,
            eval_batch: self.eval_batch,
            ..base
        }
    }

    pub fn probes(&self) -> CliResult<Vec<Probe>> {
        self.probes.iter().map(|p| Probe::parse(p, self.modes)).collect()
    }

    /// `--out`, then `DHG_OUT`, then the config's `out`, then `runs/<problem>`.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os("DHG_OUT") {
            return PathBuf::from(p);
        }
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(self.problem.name()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
