use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::common::TimeGrid;
use crate::error::{io, Error, Result};
use crate::filter::FilterMode;
use crate::montecarlo::{Experiment, McConfig};
use crate::problems::{AdvertisingParams, BrownianParams, PortfolioParams, Problem, StochAdvertisingParams};
use crate::sde::resolve_events;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Advertising,
    StochAdvertising,
    Portfolio,
    Brownian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Single,
    MonteCarlo,
}

/// Where a resolved value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// Taken from the published experiments.
    #[serde(rename = "paper")]
    Published,
    ImplementerDefault,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t0: Option<f64>,
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
}

/// Configuration file as written by the user. Every field except `problem`
/// may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    #[serde(default)]
    pub mode: Option<RunMode>,
    #[serde(default)]
    pub params: Option<Map<String, Value>>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub filter: Option<FilterMode>,
    /// Shorthand for `params.eta`.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub n_trials: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub store_every: Option<u64>,
    #[serde(default)]
    pub settle_fraction: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

/// Command-line overrides; these win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n_trials: Option<u64>,
    pub seed: Option<u64>,
    pub filter: Option<FilterMode>,
    pub output_dir: Option<String>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedGrid {
    pub t0: f64,
    pub t_final: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub problem: Problem,
    pub mode: RunMode,
    pub grid: ResolvedGrid,
    pub filter: FilterMode,
    pub seed: u64,
    pub n_trials: u64,
    pub threads: usize,
    pub store_every: u64,
    pub settle_fraction: f64,
    pub output_dir: String,
    pub provenance: BTreeMap<String, Source>,
}

impl ResolvedConfig {
    pub fn experiment(&self) -> Result<Experiment> {
        let grid = TimeGrid::new(self.grid.t0, self.grid.t_final, self.grid.dt)?;
        Experiment::new(self.problem, grid, self.filter)
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig {
            n_trials: self.n_trials,
            base_seed: self.seed,
            threads: self.threads,
            store_every: self.store_every,
            settle_fraction: self.settle_fraction,
        }
    }
}

fn published_fields(kind: ProblemKind) -> &'static [&'static str] {
    match kind {
        ProblemKind::Advertising => &["x0", "x_max", "eta"],
        ProblemKind::StochAdvertising => &["x0", "x_max", "eta"],
        ProblemKind::Portfolio => &[
            "eps_b",
            "eps_r",
            "sigma_po",
            "horizon",
            "x_min",
            "x0",
            "withdrawal_time",
            "withdrawal_factor",
            "eta",
        ],
        ProblemKind::Brownian => &[],
    }
}

fn default_params(kind: ProblemKind) -> Value {
    let v = match kind {
        ProblemKind::Advertising => serde_json::to_value(AdvertisingParams::default()),
        ProblemKind::StochAdvertising => serde_json::to_value(StochAdvertisingParams::default()),
        ProblemKind::Portfolio => serde_json::to_value(PortfolioParams::default()),
        ProblemKind::Brownian => serde_json::to_value(BrownianParams::default()),
    };
    v.expect("parameter structs serialize")
}

fn default_grid(kind: ProblemKind, problem: &Problem) -> (ResolvedGrid, Source) {
    match (kind, problem) {
        (ProblemKind::Portfolio, Problem::Portfolio(p)) => {
            (ResolvedGrid { t0: 0.0, t_final: p.horizon, dt: 0.1 }, Source::Published)
        }
        (ProblemKind::Advertising, _) => {
            (ResolvedGrid { t0: 0.0, t_final: 30.0, dt: 0.01 }, Source::ImplementerDefault)
        }
        (ProblemKind::StochAdvertising, _) => {
            (ResolvedGrid { t0: 0.0, t_final: 5.0, dt: 0.01 }, Source::ImplementerDefault)
        }
        _ => (ResolvedGrid { t0: 0.0, t_final: 1.0, dt: 0.01 }, Source::ImplementerDefault),
    }
}

fn parse_params<T: serde::de::DeserializeOwned>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Config(format!("params: {e}")))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        Self::from_json(&text)
    }

    /// Apply defaults and overrides (flags > file > defaults) and validate.
    pub fn resolve(&self, ov: &Overrides) -> Result<ResolvedConfig> {
        let kind = self.problem;
        let mut prov = BTreeMap::new();

        let user_params = self.params.clone().unwrap_or_default();
        let mut merged = match default_params(kind) {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        for key in merged.keys() {
            let src = if published_fields(kind).contains(&key.as_str()) {
                Source::Published
            } else {
                Source::ImplementerDefault
            };
            prov.insert(format!("params.{key}"), src);
        }
        for (k, v) in user_params {
            if !merged.contains_key(&k) {
                return Err(Error::Config(format!("params: unknown field `{k}` for problem {kind:?}")));
            }
            prov.insert(format!("params.{k}"), Source::User);
            merged.insert(k, v);
        }
        if let Some(eta) = self.eta {
            if kind == ProblemKind::Brownian || merged.contains_key("eta") {
                merged.insert("eta".into(), Value::from(eta));
                prov.insert("params.eta".into(), Source::User);
            }
        }
        let merged = Value::Object(merged);
        let problem = match kind {
            ProblemKind::Advertising => Problem::Advertising(parse_params(merged)?),
            ProblemKind::StochAdvertising => Problem::StochAdvertising(parse_params(merged)?),
            ProblemKind::Portfolio => Problem::Portfolio(parse_params(merged)?),
            ProblemKind::Brownian => Problem::Brownian(parse_params(merged)?),
        };
        problem.validate().map_err(|e| Error::Config(e.to_string()))?;

        let (dg, grid_src) = default_grid(kind, &problem);
        let g = self.grid.unwrap_or_default();
        let grid = ResolvedGrid {
            t0: g.t0.unwrap_or(dg.t0),
            t_final: g.t_final.unwrap_or(dg.t_final),
            dt: g.dt.unwrap_or(dg.dt),
        };
        prov.insert("grid.t0".into(), if g.t0.is_some() { Source::User } else { grid_src });
        prov.insert("grid.t_final".into(), if g.t_final.is_some() { Source::User } else { grid_src });
        prov.insert("grid.dt".into(), if g.dt.is_some() { Source::User } else { grid_src });
        let tg = TimeGrid::new(grid.t0, grid.t_final, grid.dt).map_err(|e| Error::Config(e.to_string()))?;
        if let Problem::Portfolio(p) = &problem {
            if (grid.t_final - p.horizon).abs() > 1e-9 * p.horizon.max(1.0) || grid.t0 != 0.0 {
                return Err(Error::Config(format!(
                    "portfolio grid must span [0, horizon] = [0, {}], got [{}, {}]",
                    p.horizon, grid.t0, grid.t_final
                )));
            }
        }
        resolve_events(&tg, &problem.events())?;

        let pick =
            |key: &str, flag: bool, file: bool, prov: &mut BTreeMap<String, Source>, fallback: Source| {
                let src = if flag || file { Source::User } else { fallback };
                prov.insert(key.to_string(), src);
            };

        let mode = self.mode.unwrap_or_default();
        pick("mode", false, self.mode.is_some(), &mut prov, Source::ImplementerDefault);
        let filter = ov.filter.or(self.filter).unwrap_or_else(|| problem.default_filter());
        pick("filter", ov.filter.is_some(), self.filter.is_some(), &mut prov, Source::ImplementerDefault);
        let seed = ov.seed.or(self.seed).unwrap_or(42);
        pick("seed", ov.seed.is_some(), self.seed.is_some(), &mut prov, Source::ImplementerDefault);
        let trials_default = if mode == RunMode::MonteCarlo { 1000 } else { 1 };
        let n_trials = ov.n_trials.or(self.n_trials).unwrap_or(trials_default);
        let trials_src =
            if mode == RunMode::MonteCarlo { Source::Published } else { Source::ImplementerDefault };
        pick("n_trials", ov.n_trials.is_some(), self.n_trials.is_some(), &mut prov, trials_src);
        let threads = ov.threads.or(self.threads).unwrap_or(0);
        pick("threads", ov.threads.is_some(), self.threads.is_some(), &mut prov, Source::ImplementerDefault);
        let store_every = self.store_every.unwrap_or(if mode == RunMode::Single { 1 } else { 0 });
        pick("store_every", false, self.store_every.is_some(), &mut prov, Source::ImplementerDefault);
        let settle_fraction = self.settle_fraction.unwrap_or(0.25);
        pick("settle_fraction", false, self.settle_fraction.is_some(), &mut prov, Source::ImplementerDefault);
        let output_dir = ov
            .output_dir
            .clone()
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| format!("out/{}", problem.name()));
        pick(
            "output_dir",
            ov.output_dir.is_some(),
            self.output_dir.is_some(),
            &mut prov,
            Source::ImplementerDefault,
        );

        let resolved = ResolvedConfig {
            problem,
            mode,
            grid,
            filter,
            seed,
            n_trials,
            threads,
            store_every,
            settle_fraction,
            output_dir,
            provenance: prov,
        };
        resolved.mc_config().validate()?;
        if mode == RunMode::Single && n_trials != 1 {
            return Err(Error::Config(format!("single mode runs one trial, got n_trials = {n_trials}")));
        }
        Ok(resolved)
    }
}

/// Git-style object id: SHA-256 over `"blob <len>\0" ++ content`, hex encoded.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
