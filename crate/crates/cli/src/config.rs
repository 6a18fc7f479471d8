// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run configuration: one JSON document with keys `plant`, `gains`, `steer`
//! and `run`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pidsteer::controllers::{Gains, SteerFn};
use pidsteer::plant::{make_random_plant, ContrastivePlant, LayerKind, PlantDoc, RandomPlantConfig};
use pidsteer::scenarios::{figure_gains, make_persistent_plant, PersistentPlantConfig, FIGURE_SEED};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlantSpec {
    /// Plant document on disk, resolved relative to the config file.
    File {
        path: PathBuf,
    },
    Inline {
        plant: PlantDoc,
    },
    Random {
        dim: usize,
        pairs: usize,
        layers: usize,
        #[serde(default = "default_layer_kind")]
        layer_kind: LayerKind,
        jacobian_norm_cap: f64,
        #[serde(default)]
        heterogeneity: f64,
        #[serde(default)]
        seed: u64,
    },
    Persistent {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_neutral")]
        neutral_dims: usize,
        #[serde(default = "default_pairs")]
        pairs: usize,
        #[serde(default = "default_layers")]
        layers: usize,
        #[serde(default = "default_coupling")]
        coupling: f64,
        #[serde(default = "default_seed")]
        seed: u64,
    },
}

fn default_layer_kind() -> LayerKind {
    LayerKind::Linear
}
fn default_dim() -> usize {
    8
}
fn default_neutral() -> usize {
    3
}
fn default_pairs() -> usize {
    4
}
fn default_layers() -> usize {
    150
}
fn default_coupling() -> f64 {
    0.5
}
fn default_seed() -> u64 {
    FIGURE_SEED
}

impl Default for PlantSpec {
    fn default() -> Self {
        let d = PersistentPlantConfig::default();
        PlantSpec::Persistent {
            dim: d.dim,
            neutral_dims: d.neutral_dims,
            pairs: d.pairs,
            layers: d.layers,
            coupling: d.coupling,
            seed: d.seed,
        }
    }
}

/// A labelled gain block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainBlock {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(flatten)]
    pub gains: Gains,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainsSpec {
    One(GainBlock),
    Many(Vec<GainBlock>),
}

impl Default for GainsSpec {
    fn default() -> Self {
        GainsSpec::Many(
            figure_gains().into_iter().map(|(label, gains)| GainBlock { label: Some(label), gains }).collect(),
        )
    }
}

/// Grid along one gain axis: an explicit list or `start..=stop` by `step`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        match self {
            Axis::List(v) if !v.is_empty() => Ok(v.clone()),
            Axis::List(_) => Err(CliError::Config("sweep axis is empty".into())),
            Axis::Range { start, stop, step } => {
                if !(*step > 0.0) || !(stop >= start) {
                    return Err(CliError::Config(format!("bad sweep range {start}..{stop} step {step}")));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                if count > 100_000 {
                    return Err(CliError::Config(format!("sweep axis has {count} points")));
                }
                Ok((0..count).map(|i| start + step * i as f64).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kp: Option<Axis>,
    pub ki: Option<Axis>,
    pub kd: Option<Axis>,
}

/// Certificate inputs given as numbers instead of a plant.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyNumbers {
    pub m_bound: f64,
    pub q: f64,
    pub h: f64,
    #[serde(default)]
    pub ell: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub ensemble: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub certify: Option<CertifyNumbers>,
}

fn one() -> usize {
    1
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { steps: None, seed: None, ensemble: 1, out: None, sweep: None, certify: None }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub plant: PlantSpec,
    #[serde(default)]
    pub gains: GainsSpec,
    #[serde(default)]
    pub steer: SteerFn,
    #[serde(default)]
    pub run: RunSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.run.steps == Some(0) {
            return Err(CliError::Config("run.steps must be at least 1".into()));
        }
        if self.run.ensemble == 0 {
            return Err(CliError::Config("run.ensemble must be at least 1".into()));
        }
        for block in self.gain_blocks() {
            block.1.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let PlantSpec::File { path } = &self.plant {
            let full = self.base_dir.join(path);
            if !full.is_file() {
                return Err(CliError::Config(format!("plant file {} does not exist", full.display())));
            }
        }
        if self.run.ensemble > 1 && matches!(self.plant, PlantSpec::File { .. } | PlantSpec::Inline { .. }) {
            return Err(CliError::Config("ensembles need a seeded (random or persistent) plant".into()));
        }
        Ok(())
    }

    /// Gain blocks with labels filled in.
    pub fn gain_blocks(&self) -> Vec<(String, Gains)> {
        let blocks = match &self.gains {
            GainsSpec::One(b) => vec![b.clone()],
            GainsSpec::Many(v) => v.clone(),
        };
        blocks
            .into_iter()
            .enumerate()
            .map(|(i, b)| {
                let label = b.label.unwrap_or_else(|| {
                    let base = b.gains.label();
                    if i == 0 {
                        base.to_string()
                    } else {
                        format!("{base}{i}")
                    }
                });
                (label, b.gains)
            })
            .collect()
    }

    /// Seed of the plant, after overrides; `None` for fixed plants.
    pub fn plant_seed(&self) -> Option<u64> {
        match &self.plant {
            PlantSpec::Random { seed, .. } | PlantSpec::Persistent { seed, .. } => Some(self.run.seed.unwrap_or(*seed)),
            _ => None,
        }
    }

    /// Builds the plant for one seed (ignored for fixed plants).
    pub fn build_plant(&self, seed: Option<u64>) -> Result<ContrastivePlant, CliError> {
        let steps = self.run.steps;
        let plant = match &self.plant {
            PlantSpec::File { path } => {
                let full = self.base_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", full.display())))?;
                ContrastivePlant::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?
            }
            PlantSpec::Inline { plant } => {
                ContrastivePlant::try_from(plant.clone()).map_err(|e| CliError::Config(e.to_string()))?
            }
            PlantSpec::Random { dim, pairs, layers, layer_kind, jacobian_norm_cap, heterogeneity, seed: s } => {
                make_random_plant(&RandomPlantConfig {
                    dim: *dim,
                    pairs: *pairs,
                    layers: steps.unwrap_or(*layers),
                    kind: *layer_kind,
                    jacobian_norm_cap: *jacobian_norm_cap,
                    heterogeneity: *heterogeneity,
                    seed: seed.unwrap_or(*s),
                })
                .map_err(|e| CliError::Config(e.to_string()))?
            }
            PlantSpec::Persistent { dim, neutral_dims, pairs, layers, coupling, seed: s } => {
                make_persistent_plant(&PersistentPlantConfig {
                    dim: *dim,
                    neutral_dims: *neutral_dims,
                    pairs: *pairs,
                    layers: steps.unwrap_or(*layers),
                    coupling: *coupling,
                    seed: seed.unwrap_or(*s),
                })
                .map_err(|e| CliError::Config(e.to_string()))?
            }
        };
        if let (Some(n), PlantSpec::File { .. } | PlantSpec::Inline { .. }) = (steps, &self.plant) {
            if n != plant.layer_count() {
                return Err(CliError::Config(format!(
                    "run.steps = {n} but the plant has {} layers",
                    plant.layer_count()
                )));
            }
        }
        Ok(plant)
    }

    /// Seeds of the ensemble members, in output order.
    pub fn member_seeds(&self) -> Vec<Option<u64>> {
        match self.plant_seed() {
            Some(base) => (0..self.run.ensemble as u64).map(|i| Some(base.wrapping_add(i))).collect(),
            None => vec![None],
        }
    }
}
