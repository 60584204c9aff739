//! Solver settings assembled from defaults, an optional JSON file and flags,
//! in that order of precedence.

use anyhow::{bail, Context, Result};
use clap::Args;
use gray_wyner::ba_core::BaConfig;
use gray_wyner::rd_solver::OuterConfig;
use serde_json::{Map, Value};
use std::path::{Path, PathBuf};

const INNER_KEYS: [&str; 5] = ["epsilon", "max_iterations", "u_size", "seed", "restarts"];
const OUTER_KEYS: [&str; 6] = ["epsilon_d", "gamma0", "decay", "max_outer", "step", "initial"];

#[derive(Debug, Clone, Default, Args)]
pub struct SolverOpts {
    /// JSON file with inner settings (epsilon, max_iterations, u_size, seed,
    /// restarts) and outer settings (epsilon_d, gamma0, decay, max_outer,
    /// step, initial).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Inner stopping tolerance on the Lagrangian, per unit of alpha0.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Outer stopping tolerance on the achieved distortions.
    #[arg(long)]
    pub epsilon_d: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Size of the auxiliary alphabet (default m1 * m2).
    #[arg(long)]
    pub u_size: Option<usize>,
    /// Seeded starts per inner minimization; the best is kept.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Debug aid: corrupt the final prior update so certificates fail.
    #[arg(long)]
    pub tamper: bool,
}

fn load(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let map: Map<String, Value> =
        serde_json::from_str(&text).with_context(|| format!("invalid solver config {}", path.display()))?;
    if let Some(k) = map.keys().find(|k| !INNER_KEYS.contains(&k.as_str()) && !OUTER_KEYS.contains(&k.as_str())) {
        bail!("unknown solver setting \"{}\" in {}", k, path.display());
    }
    Ok(map)
}

fn field<T: serde::de::DeserializeOwned>(map: &Map<String, Value>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| serde_json::from_value(v.clone()).with_context(|| format!("bad value for \"{}\"", key)))
        .transpose()
}

impl SolverOpts {
    pub fn outer(&self, seed: Option<u64>) -> Result<OuterConfig> {
        let mut c = OuterConfig::default();
        if let Some(path) = &self.config {
            let map = load(path)?;
            let inner: Map<String, Value> =
                map.iter().filter(|(k, _)| INNER_KEYS.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect();
            c.inner = serde_json::from_value::<BaConfig>(Value::Object(inner)).context("bad inner settings")?;
            if let Some(v) = field(&map, "epsilon_d")? {
                c.epsilon_d = v;
            }
            if let Some(v) = field(&map, "gamma0")? {
                c.gamma0 = v;
            }
            if let Some(v) = field(&map, "decay")? {
                c.decay = v;
            }
            if let Some(v) = field(&map, "max_outer")? {
                c.max_outer = v;
            }
            if let Some(v) = field(&map, "step")? {
                c.step = v;
            }
            if let Some(v) = field(&map, "initial")? {
                c.initial = v;
            }
        }
        if let Some(v) = self.epsilon {
            c.inner.epsilon = v;
        }
        if let Some(v) = self.epsilon_d {
            c.epsilon_d = v;
        }
        if let Some(v) = self.max_iterations {
            c.inner.max_iterations = v;
        }
        if let Some(v) = self.max_outer {
            c.max_outer = v;
        }
        if self.u_size.is_some() {
            c.inner.u_size = self.u_size;
        }
        if let Some(v) = self.restarts {
            c.inner.restarts = v;
        }
        if let Some(v) = seed {
            c.inner.seed = v;
        }
        c.inner.tamper |= self.tamper;
        c.check()?;
        Ok(c)
    }
}
