//! Run configuration: a strict TOML document plus dotted-path overrides.
//!
//! Unknown keys are rejected at every level. Each subcommand pulls only the
//! sections it needs; missing required fields are reported by name.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use mfos_core::market::MarketParams;
use mfos_core::nce2::ProfitFunction;
use mfos_core::sim::{Problem, SimConfig};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: Option<MarketSection>,
    pub profit: Option<ProfitSection>,
    pub sim: Option<SimSection>,
    pub inverse: Option<InverseSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub alpha: f64,
    pub sigma: f64,
    pub beta: f64,
    pub x0: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub l1: f64,
    #[serde(default = "one")]
    pub l2: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfitSection {
    pub kind: String,
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub c1: f64,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n_agents: Option<usize>,
    pub n_reps: usize,
    pub seed: u64,
    pub deviation_grid: Option<Vec<f64>>,
    /// Number of points for the auto-generated deviation grid.
    pub deviation_points: Option<usize>,
    /// Population sizes for the gap sweep.
    pub n_sweep: Option<Vec<usize>>,
    #[serde(default = "problem_one")]
    pub problem: String,
    /// Path-simulation horizon cap for the extraction game.
    pub t_max: Option<f64>,
}

fn problem_one() -> String {
    "I".to_owned()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseSection {
    pub mu0: Option<f64>,
    pub kappa0: Option<f64>,
    pub t0: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub utility: Option<String>,
    pub rho: Option<f64>,
    /// Sample file for the maximum-likelihood fit.
    pub samples: Option<PathBuf>,
    pub k_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub format: OutputFormat,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Table,
}

impl RunConfig {
    /// Load the TOML file (or start empty), apply `--set key.path=value`
    /// overrides, and deserialize strictly.
    pub fn load(path: Option<&PathBuf>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("cannot read config {}: {e}", p.display())))?;
                text.parse()
                    .map_err(|e| CliError::config(format!("config parse error in {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for pair in overrides {
            apply_override(&mut table, pair)?;
        }
        table
            .try_into()
            .map_err(|e| CliError::config(format!("config validation failed: {e}")))
    }

    pub fn require_market(&self) -> Result<&MarketSection, CliError> {
        self.market.as_ref().ok_or_else(|| CliError::config("missing [market] section"))
    }

    /// Market parameters for commands that only need the rates.
    pub fn market_rates(&self) -> Result<MarketParams, CliError> {
        let m = self.require_market()?;
        MarketParams::new(m.alpha, m.sigma, m.beta, m.x0.unwrap_or(1.0), m.k.unwrap_or(1.0), m.theta, m.l1, m.l2)
            .map_err(CliError::from_config_err)
    }

    /// Full market parameters; `x0` and `K` must be present.
    pub fn market_full(&self) -> Result<MarketParams, CliError> {
        let m = self.require_market()?;
        let x0 = m.x0.ok_or_else(|| CliError::config("missing field `market.x0`"))?;
        let k = m.k.ok_or_else(|| CliError::config("missing field `market.K`"))?;
        MarketParams::new(m.alpha, m.sigma, m.beta, x0, k, m.theta, m.l1, m.l2)
            .map_err(CliError::from_config_err)
    }

    pub fn profit(&self) -> Result<ProfitFunction, CliError> {
        let p = self.profit.as_ref().ok_or_else(|| CliError::config("missing [profit] section"))?;
        match p.kind.as_str() {
            "affine" => Ok(ProfitFunction::Affine { c0: p.c0, c1: p.c1 }),
            "power" => {
                let gamma =
                    p.gamma.ok_or_else(|| CliError::config("missing field `profit.gamma` for kind = \"power\""))?;
                Ok(ProfitFunction::Power { c1: p.c1, gamma })
            }
            other => Err(CliError::config(format!("unknown profit kind `{other}` (expected affine|power)"))),
        }
    }

    pub fn sim_section(&self) -> Result<&SimSection, CliError> {
        self.sim.as_ref().ok_or_else(|| CliError::config("missing [sim] section"))
    }

    /// Assemble the simulation config for a single population size.
    pub fn sim_config(&self, deviation_grid: Vec<f64>) -> Result<SimConfig, CliError> {
        let s = self.sim_section()?;
        let n_agents =
            s.n_agents.ok_or_else(|| CliError::config("missing field `sim.n_agents`"))?;
        Ok(SimConfig {
            n_agents,
            n_reps: s.n_reps,
            seed: s.seed,
            deviation_grid,
            problem: self.problem()?,
        })
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        match self.sim_section()?.problem.as_str() {
            "I" | "i" | "1" => Ok(Problem::I),
            "II" | "ii" | "2" => Ok(Problem::II),
            other => Err(CliError::config(format!("unknown problem `{other}` (expected I|II)"))),
        }
    }

    pub fn inverse_section(&self) -> Result<&InverseSection, CliError> {
        self.inverse.as_ref().ok_or_else(|| CliError::config("missing [inverse] section"))
    }
}

/// Apply one `key.path=value` override onto the raw TOML table.
fn apply_override(table: &mut toml::Table, pair: &str) -> Result<(), CliError> {
    let (path, raw) = pair
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{pair}` must look like key.path=value")))?;
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .map(|t| t["v"].clone())
        .or_else(|_| format!("v = \"{raw}\"").parse::<toml::Table>().map(|t| t["v"].clone()))
        .map_err(|e| CliError::config(format!("cannot parse override value `{raw}`: {e}")))?;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::config(format!("invalid override path `{path}`")));
    }
    let mut current = table;
    for seg in &segments[..segments.len() - 1] {
        current = current
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("override path `{path}` crosses a non-table value")))?;
    }
    current.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

/// Read a sample file: one positive decimal per line, `#` comments allowed.
pub fn read_samples(path: &std::path::Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::design(format!("cannot read sample file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            CliError::design(format!("{}:{}: not a decimal: `{line}`", path.display(), idx + 1))
        })?;
        if v <= 0.0 || v.is_nan() || v.is_infinite() {
            return Err(CliError::design(format!(
                "{}:{}: samples must be positive and finite, got {v}",
                path.display(),
                idx + 1
            )));
        }
        out.push(v);
    }
    Ok(out)
}
