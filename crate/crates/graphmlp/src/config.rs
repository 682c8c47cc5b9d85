//! Flat `key = value` configuration shared by every subcommand.
//!
//! Lines are `key = value`; `#` starts a comment; later assignments win.
//! Command-line flags are applied as further assignments on top of the
//! file, so every flag overrides the corresponding key.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use graphmlp_core::data::{ImageUnits, SyntheticConfig};
use graphmlp_core::graph::SkeletonTopology;
use graphmlp_core::model::ModelConfig;
use graphmlp_core::optim::{AdamConfig, LrSchedule};

use crate::error::{Error, Result};

/// Parses `key = value` lines into ordered pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`, got '{raw}'", i + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Parses a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::Config(format!("override '{s}' is not key=value"))),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = '{value}': {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub augment_flip: bool,
    /// Seeds batch shuffling.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 30,
            batch_size: 256,
            schedule: LrSchedule::default(),
            adam: AdamConfig::default(),
            augment_flip: true,
            seed: 0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Synthetic-data keys; unset values fall back to the topology defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthOptions {
    pub num_samples: Option<usize>,
    pub units: Option<ImageUnits>,
    pub focal: Option<f64>,
    pub principal: [Option<f64>; 2],
    pub distance: [Option<f64>; 2],
    pub joint_angle_range: Option<f64>,
    pub root_yaw_range: Option<f64>,
    pub walk_step: Option<f64>,
    pub lateral_offset: Option<f64>,
    /// Lengths of the bones ending at each non-root joint, in joint order.
    pub bone_lengths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub model: ModelConfig,
    pub train: TrainOptions,
    pub synth: SynthOptions,
    /// Built-in layout name or path to a layout file.
    pub layout: String,
    pub train_data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log_file: Option<PathBuf>,
    /// Expected joint count, checked against the layout.
    pub joints: Option<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            model: ModelConfig {
                output_scale: 1000.0,
                ..ModelConfig::default()
            },
            train: TrainOptions::default(),
            synth: SynthOptions::default(),
            layout: graphmlp_core::graph::H36M_17.to_string(),
            train_data: None,
            eval_data: None,
            checkpoint: None,
            log_file: None,
            joints: None,
        }
    }
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = Settings::default();
        s.apply_all(&parse_pairs(&text)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(s)
    }

    pub fn apply_all(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        let sy = &mut self.synth;
        match key {
            "layers" => m.layers = parse(key, value)?,
            "hidden" => m.hidden = parse(key, value)?,
            "spatial_dim" => m.spatial_dim = parse(key, value)?,
            "channel_dim" => m.channel_dim = parse(key, value)?,
            "joints" => self.joints = Some(parse(key, value)?),
            "frames" => m.frames = parse(key, value)?,
            "edge_types" => m.edge_types = parse(key, value)?,
            "variant" => m.variant = parse(key, value)?,
            "placement" => m.placement = parse(key, value)?,
            "block_toggle" => m.block_toggle = parse(key, value)?,
            "video_ln" => m.video_ln = parse(key, value)?,
            "ln_eps" => m.ln_eps = parse(key, value)?,
            "output_scale" => m.output_scale = parse(key, value)?,
            "seed" => {
                let seed = parse(key, value)?;
                m.seed = seed;
                t.seed = seed;
            }
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "lr_init" => t.schedule.initial = parse(key, value)?,
            "decay_per_epoch" => t.schedule.decay_per_epoch = parse(key, value)?,
            "decay_per_5_epochs" => t.schedule.decay_per_5_epochs = parse(key, value)?,
            "beta1" => t.adam.beta1 = parse(key, value)?,
            "beta2" => t.adam.beta2 = parse(key, value)?,
            "adam_eps" => t.adam.eps = parse(key, value)?,
            "augment_flip" => t.augment_flip = parse(key, value)?,
            "layout" => self.layout = value.to_string(),
            "train_data" => self.train_data = Some(value.into()),
            "eval_data" => self.eval_data = Some(value.into()),
            "checkpoint" => self.checkpoint = Some(value.into()),
            "log_file" => self.log_file = Some(value.into()),
            "num_samples" => sy.num_samples = Some(parse(key, value)?),
            "units" => {
                sy.units = Some(match value {
                    "pixels" => ImageUnits::Pixels,
                    "normalized" => ImageUnits::Normalized,
                    _ => return Err(Error::Config(format!("units = '{value}': expected pixels|normalized"))),
                })
            }
            "focal" => sy.focal = Some(parse(key, value)?),
            "principal_x" => sy.principal[0] = Some(parse(key, value)?),
            "principal_y" => sy.principal[1] = Some(parse(key, value)?),
            "distance_min" => sy.distance[0] = Some(parse(key, value)?),
            "distance_max" => sy.distance[1] = Some(parse(key, value)?),
            "joint_angle_range" => sy.joint_angle_range = Some(parse(key, value)?),
            "root_yaw_range" => sy.root_yaw_range = Some(parse(key, value)?),
            "walk_step" => sy.walk_step = Some(parse(key, value)?),
            "lateral_offset" => sy.lateral_offset = Some(parse(key, value)?),
            "bone_lengths" => sy.bone_lengths = Some(parse_list(key, value)?),
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    pub fn topology(&self) -> Result<SkeletonTopology> {
        crate::layout::resolve_layout(&self.layout)
    }

    /// Model configuration with the joint count taken from `topo`.
    pub fn model_for(&self, topo: &SkeletonTopology) -> Result<ModelConfig> {
        let n = topo.num_joints();
        if let Some(j) = self.joints.filter(|&j| j != n) {
            return Err(Error::Config(format!("joints = {j} but layout '{}' has {n} joints", self.layout)));
        }
        let cfg = ModelConfig {
            joints: n,
            ..self.model.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synthetic_for(&self, topo: &SkeletonTopology) -> Result<SyntheticConfig> {
        let s = &self.synth;
        let mut cfg = SyntheticConfig::for_topology(topo);
        cfg.seed = self.train.seed;
        cfg.frames = self.model.frames;
        cfg.num_samples = s.num_samples.unwrap_or(cfg.num_samples);
        cfg.units = s.units.unwrap_or(cfg.units);
        cfg.focal = s.focal.unwrap_or(cfg.focal);
        cfg.principal = [0, 1].map(|i| s.principal[i].unwrap_or(cfg.principal[i]));
        cfg.distance = (
            s.distance[0].unwrap_or(cfg.distance.0),
            s.distance[1].unwrap_or(cfg.distance.1),
        );
        cfg.joint_angle_range = s.joint_angle_range.unwrap_or(cfg.joint_angle_range);
        cfg.root_yaw_range = s.root_yaw_range.unwrap_or(cfg.root_yaw_range);
        cfg.walk_step = s.walk_step.unwrap_or(cfg.walk_step);
        cfg.lateral_offset = s.lateral_offset.unwrap_or(cfg.lateral_offset);
        if let Some(lengths) = &s.bone_lengths {
            let n = topo.num_joints();
            if lengths.len() != n - 1 {
                return Err(Error::Config(format!(
                    "bone_lengths has {} entries, layout has {} bones",
                    lengths.len(),
                    n - 1
                )));
            }
            let mut it = lengths.iter();
            for j in (0..n).filter(|&j| j != topo.root()) {
                let len = *it.next().expect("one length per bone");
                let cur = cfg.bone_length(j);
                if !(len > 0.0) {
                    return Err(Error::Config(format!("bone_lengths: joint {j} has length {len}")));
                }
                cfg.rest_offsets[j] = cfg.rest_offsets[j].map(|v| v * len / cur);
            }
        }
        cfg.validate(topo)?;
        Ok(cfg)
    }
}
