//! Run settings: command-line flags layered over a flat TOML file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use polar_core::agent::{RunConfig, DEFAULT_MAX_STEPS, DEFAULT_SUCCESS_RADIUS_M};
use polar_core::encoder::{EncoderConfig, EncoderMode, DEFAULT_TIMEOUT_MS};
use polar_core::distill::DistillerMode;
use polar_core::eval::{EvalMode, EvalOptions, ScenarioKind, DEFAULT_FILLER_COUNT};
use polar_core::exec::Execution;
use polar_core::memory::{GraphConfig, DEFAULT_THETA_DEDUP, DEFAULT_THETA_OBJ};
use polar_core::retrieval::DEFAULT_K;

pub const SEED_ENV: &str = "POLAR_SEED";
pub const DEFAULT_N: usize = 50;
pub const DEFAULT_N_ROOMS: usize = 6;
pub const DEFAULT_RAW_SAMPLE: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Builtin,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    Oracle,
    Remote,
}

fn parse_kind(s: &str) -> Result<ScenarioKind, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<EvalMode, String> {
    s.parse()
}

/// Every setting is optional here so a flag, the config file and the
/// defaults can be layered. Field names double as TOML keys.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Root seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Room count for `world gen`.
    #[arg(long, global = true)]
    pub n_rooms: Option<usize>,
    /// Scenario kinds, comma separated.
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_kind)]
    pub kinds: Option<Vec<ScenarioKind>>,
    /// Specs per kind.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub filler_count: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub encoder: Option<Backend>,
    #[arg(long, global = true)]
    pub encoder_endpoint: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub planner: Option<PlannerKind>,
    #[arg(long, global = true)]
    pub planner_endpoint: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub distiller: Option<Backend>,
    #[arg(long, global = true)]
    pub distiller_endpoint: Option<String>,
    /// Timeout for every remote call.
    #[arg(long, global = true)]
    pub timeout_ms: Option<u64>,
    /// Retrieval depth.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub theta_dedup: Option<f64>,
    #[arg(long, global = true)]
    pub theta_obj: Option<f64>,
    /// Evaluation modes, comma separated.
    #[arg(long, global = true, alias = "mode", value_delimiter = ',', value_parser = parse_mode)]
    pub modes: Option<Vec<EvalMode>>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub max_steps: Option<u32>,
    #[arg(long, global = true)]
    pub success_radius_m: Option<f64>,
    /// Logs shown to the raw-interaction baseline.
    #[arg(long, global = true)]
    pub raw_sample: Option<usize>,
    /// Run every stage on one thread.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub sequential: Option<bool>,
}

macro_rules! layer {
    ($hi:expr, $lo:expr, $($field:ident),+) => {
        Settings { $($field: $hi.$field.or($lo.$field)),+ }
    };
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        // One line keeps the error on a single stderr line.
        toml::from_str(&text).map_err(|e| {
            anyhow::anyhow!("config {}: {}", path.display(), e.message().replace('\n', " "))
        })
    }

    /// Fields set in `self` win over `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        layer!(
            self, lower, seed, n_rooms, kinds, n, filler_count, encoder, encoder_endpoint, planner,
            planner_endpoint, distiller, distiller_endpoint, timeout_ms, k, theta_dedup, theta_obj, modes,
            out_dir, max_steps, success_radius_m, raw_sample, sequential
        )
    }

    pub fn resolve(self, env_seed: Option<&str>) -> Result<Resolved> {
        let seed = match (self.seed, env_seed) {
            (Some(s), _) => s,
            (None, Some(v)) => v
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"))?,
            (None, None) => 0,
        };
        let timeout_ms = self.timeout_ms.unwrap_or(DEFAULT_TIMEOUT_MS);
        let endpoint = |name: &str, value: Option<String>| -> Result<String> {
            match value {
                Some(v) if !v.is_empty() => Ok(v),
                _ => bail!("remote {name} needs --{name}-endpoint"),
            }
        };
        let encoder = match self.encoder.unwrap_or(Backend::Builtin) {
            Backend::Builtin => EncoderConfig::default(),
            Backend::Remote => EncoderConfig {
                mode: EncoderMode::Remote {
                    endpoint: endpoint("encoder", self.encoder_endpoint)?,
                    timeout_ms,
                },
                ..EncoderConfig::default()
            },
        };
        let distiller = match self.distiller.unwrap_or(Backend::Builtin) {
            Backend::Builtin => DistillerMode::Builtin,
            Backend::Remote => DistillerMode::Remote {
                endpoint: endpoint("distiller", self.distiller_endpoint)?,
                timeout_ms,
            },
        };
        let planner = match self.planner.unwrap_or(PlannerKind::Oracle) {
            PlannerKind::Oracle => None,
            PlannerKind::Remote => Some(endpoint("planner", self.planner_endpoint)?),
        };
        let mut kinds = self.kinds.unwrap_or_else(|| ScenarioKind::ALL.to_vec());
        kinds.sort();
        kinds.dedup();
        let mut modes = self.modes.unwrap_or_else(|| EvalMode::ALL.to_vec());
        modes.dedup();
        let resolved = Resolved {
            seed,
            n_rooms: self.n_rooms.unwrap_or(DEFAULT_N_ROOMS),
            kinds,
            n: self.n.unwrap_or(DEFAULT_N),
            filler_count: self.filler_count.unwrap_or(DEFAULT_FILLER_COUNT),
            encoder,
            distiller,
            planner_endpoint: planner,
            timeout_ms,
            graph: GraphConfig {
                theta_dedup: self.theta_dedup.unwrap_or(DEFAULT_THETA_DEDUP),
                theta_obj: self.theta_obj.unwrap_or(DEFAULT_THETA_OBJ),
            },
            modes,
            out_dir: self.out_dir.unwrap_or_else(|| PathBuf::from("polar-out")),
            run: RunConfig {
                max_steps: self.max_steps.unwrap_or(DEFAULT_MAX_STEPS),
                success_radius_m: self.success_radius_m.unwrap_or(DEFAULT_SUCCESS_RADIUS_M),
                k: self.k.unwrap_or(DEFAULT_K),
                seed,
            },
            raw_sample: self.raw_sample.unwrap_or(DEFAULT_RAW_SAMPLE),
            execution: if self.sequential.unwrap_or(false) {
                Execution::Sequential
            } else {
                Execution::Parallel
            },
        };
        resolved.check()?;
        Ok(resolved)
    }
}

/// Settings after layering and defaults.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub seed: u64,
    pub n_rooms: usize,
    pub kinds: Vec<ScenarioKind>,
    pub n: usize,
    pub filler_count: usize,
    pub encoder: EncoderConfig,
    pub distiller: DistillerMode,
    pub planner_endpoint: Option<String>,
    pub timeout_ms: u64,
    pub graph: GraphConfig,
    pub modes: Vec<EvalMode>,
    pub out_dir: PathBuf,
    pub run: RunConfig,
    pub raw_sample: usize,
    pub execution: Execution,
}

impl Resolved {
    fn check(&self) -> Result<()> {
        let unit = |name: &str, v: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                bail!("{name} must be in [0, 1], got {v}");
            }
            Ok(())
        };
        unit("theta_dedup", self.graph.theta_dedup)?;
        unit("theta_obj", self.graph.theta_obj)?;
        if self.kinds.is_empty() {
            bail!("no scenario kinds selected");
        }
        if self.modes.is_empty() {
            bail!("no evaluation modes selected");
        }
        self.run.validate()?;
        Ok(())
    }

    pub fn eval_options(&self, only_retrieval_hits: bool) -> EvalOptions {
        EvalOptions {
            run: self.run,
            raw_sample: self.raw_sample,
            only_retrieval_hits,
            execution: self.execution,
        }
    }
}
