//! Plain-text `key = value` configuration. Blank lines and lines starting
//! with `#` are ignored. [`PipelineConfig::to_kv`] writes every key, so its
//! output reproduces a run exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::HornSchunckParams;
use crate::ibp::DegradeParams;
use crate::inpaint::InpaintParams;
use crate::srnet::{OutputMode, Schedule, TrainConfig};

/// How the pipeline interprets its input light field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Already on the high-resolution grid (degraded and bicubic-upscaled).
    Matched,
    /// Low-resolution views; bicubic-upscaled by the magnification factor.
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowMode {
    HornSchunck,
    /// Skip estimation; every view is taken as already aligned.
    Zero,
}

/// Shape of a freshly initialised restoration net.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub depth: usize,
    pub width: usize,
    pub mode: OutputMode,
}

impl Default for NetShape {
    fn default() -> Self {
        Self {
            depth: 10,
            width: 16,
            mode: OutputMode::Residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Number of independent views restored by the net.
    pub k: usize,
    pub mag_factor: usize,
    pub input: InputKind,
    pub blur_window: usize,
    pub blur_sigma: f64,
    pub flow_mode: FlowMode,
    pub flow: HornSchunckParams,
    pub weights: Option<PathBuf>,
    pub inpaint: InpaintParams,
    pub ibp: bool,
    pub ibp_iterations: usize,
    pub seed: u64,
    pub net: NetShape,
    pub train: TrainConfig,
    pub patch_count: usize,
    pub patch_size: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 4,
            mag_factor: 2,
            input: InputKind::Matched,
            blur_window: 7,
            blur_sigma: 1.6,
            flow_mode: FlowMode::HornSchunck,
            flow: HornSchunckParams::default(),
            weights: None,
            inpaint: InpaintParams::default(),
            ibp: true,
            ibp_iterations: 10,
            seed: 0,
            net: NetShape::default(),
            train: TrainConfig {
                lr: 1e-3,
                schedule: Schedule::Cosine,
                epochs: 3,
                ..TrainConfig::default()
            },
            patch_count: 1000,
            patch_size: 64,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidParameter(format!("bad value {value:?} for {key}"))),
    }
}

impl PipelineConfig {
    pub fn degrade_params(&self) -> DegradeParams {
        DegradeParams {
            mag_factor: self.mag_factor,
            window: self.blur_window,
            sigma: self.blur_sigma,
            noise: 0.0,
            seed: self.seed,
        }
    }

    /// Checks values and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if self.patch_size == 0 {
            return Err(Error::InvalidParameter("patch size must be positive".into()));
        }
        self.degrade_params().validate()?;
        self.flow.validate()?;
        self.inpaint.orientation.validate()?;
        self.inpaint.diffusion.validate()?;
        if let Some(w) = &self.weights {
            if !w.is_file() {
                return Err(Error::InvalidParameter(format!("weights file {} not found", w.display())));
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "k" => self.k = parse(key, v)?,
            "mag_factor" => self.mag_factor = parse(key, v)?,
            "input" => {
                self.input = match v {
                    "matched" => InputKind::Matched,
                    "low" => InputKind::Low,
                    _ => return Err(Error::InvalidParameter(format!("input must be matched or low, got {v:?}"))),
                }
            }
            "blur_window" => self.blur_window = parse(key, v)?,
            "blur_sigma" => self.blur_sigma = parse(key, v)?,
            "flow" => {
                self.flow_mode = match v {
                    "hs" => FlowMode::HornSchunck,
                    "zero" => FlowMode::Zero,
                    _ => return Err(Error::InvalidParameter(format!("flow must be hs or zero, got {v:?}"))),
                }
            }
            "flow.levels" => self.flow.levels = parse(key, v)?,
            "flow.smoothness" => self.flow.smoothness = parse(key, v)?,
            "flow.warps" => self.flow.warps = parse(key, v)?,
            "flow.iterations" => self.flow.iterations = parse(key, v)?,
            "flow.tolerance" => self.flow.tolerance = parse(key, v)?,
            "flow.max_disp" => self.flow.max_disp = parse(key, v)?,
            "weights" => self.weights = (!v.is_empty()).then(|| PathBuf::from(v)),
            "inpaint.tau" => self.inpaint.diffusion.tau = parse(key, v)?,
            "inpaint.tolerance" => self.inpaint.diffusion.tolerance = parse(key, v)?,
            "inpaint.max_iterations" => self.inpaint.diffusion.max_iterations = parse(key, v)?,
            "inpaint.angle_band" => self.inpaint.orientation.angle_band = parse(key, v)?,
            "inpaint.tv_lambda" => self.inpaint.orientation.tv_lambda = parse(key, v)?,
            "inpaint.tv_iterations" => self.inpaint.orientation.tv_iterations = parse(key, v)?,
            "inpaint.smooth_tensor" => self.inpaint.smooth_tensor = parse_bool(key, v)?,
            "inpaint.dump_dir" => self.inpaint.dump_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "ibp" => self.ibp = parse_bool(key, v)?,
            "ibp.iterations" => self.ibp_iterations = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "net.depth" => self.net.depth = parse(key, v)?,
            "net.width" => self.net.width = parse(key, v)?,
            "net.mode" => {
                self.net.mode = match v {
                    "direct" => OutputMode::Direct,
                    "residual" => OutputMode::Residual,
                    _ => return Err(Error::InvalidParameter(format!("net.mode must be direct or residual, got {v:?}"))),
                }
            }
            "train.lr" => self.train.lr = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.clip" => self.train.clip = if v == "none" { None } else { Some(parse(key, v)?) },
            "train.schedule" => {
                self.train.schedule = match v {
                    "constant" => Schedule::Constant,
                    "cosine" => Schedule::Cosine,
                    _ => return Err(Error::InvalidParameter(format!("train.schedule must be constant or cosine, got {v:?}"))),
                }
            }
            "patches.count" => self.patch_count = parse(key, v)?,
            "patches.size" => self.patch_size = parse(key, v)?,
            _ => return Err(Error::InvalidParameter(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("config line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_kv(&std::fs::read_to_string(path)?)
    }

    /// Every key with its current value.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let entries: Vec<(&str, String)> = vec![
            ("k", self.k.to_string()),
            ("mag_factor", self.mag_factor.to_string()),
            (
                "input",
                match self.input {
                    InputKind::Matched => "matched",
                    InputKind::Low => "low",
                }
                .into(),
            ),
            ("blur_window", self.blur_window.to_string()),
            ("blur_sigma", self.blur_sigma.to_string()),
            (
                "flow",
                match self.flow_mode {
                    FlowMode::HornSchunck => "hs",
                    FlowMode::Zero => "zero",
                }
                .into(),
            ),
            ("flow.levels", self.flow.levels.to_string()),
            ("flow.smoothness", self.flow.smoothness.to_string()),
            ("flow.warps", self.flow.warps.to_string()),
            ("flow.iterations", self.flow.iterations.to_string()),
            ("flow.tolerance", self.flow.tolerance.to_string()),
            ("flow.max_disp", self.flow.max_disp.to_string()),
            ("weights", path(&self.weights)),
            ("inpaint.tau", self.inpaint.diffusion.tau.to_string()),
            ("inpaint.tolerance", self.inpaint.diffusion.tolerance.to_string()),
            ("inpaint.max_iterations", self.inpaint.diffusion.max_iterations.to_string()),
            ("inpaint.angle_band", self.inpaint.orientation.angle_band.to_string()),
            ("inpaint.tv_lambda", self.inpaint.orientation.tv_lambda.to_string()),
            ("inpaint.tv_iterations", self.inpaint.orientation.tv_iterations.to_string()),
            ("inpaint.smooth_tensor", self.inpaint.smooth_tensor.to_string()),
            ("inpaint.dump_dir", path(&self.inpaint.dump_dir)),
            ("ibp", self.ibp.to_string()),
            ("ibp.iterations", self.ibp_iterations.to_string()),
            ("seed", self.seed.to_string()),
            ("net.depth", self.net.depth.to_string()),
            ("net.width", self.net.width.to_string()),
            (
                "net.mode",
                match self.net.mode {
                    OutputMode::Direct => "direct",
                    OutputMode::Residual => "residual",
                }
                .into(),
            ),
            ("train.lr", self.train.lr.to_string()),
            ("train.epochs", self.train.epochs.to_string()),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("train.seed", self.train.seed.to_string()),
            ("train.clip", self.train.clip.map_or("none".into(), |c| c.to_string())),
            (
                "train.schedule",
                match self.train.schedule {
                    Schedule::Constant => "constant",
                    Schedule::Cosine => "cosine",
                }
                .into(),
            ),
            ("patches.count", self.patch_count.to_string()),
            ("patches.size", self.patch_size.to_string()),
        ];
        entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_kv(&self) -> String {
        self.echo().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_kv("k = 9\nflow.smoothness = 0.123456789\n# note\n\nibp = off\nweights = /tmp/x.wts\ntrain.clip = none")
            .unwrap();
        assert_eq!(cfg.k, 9);
        assert!(!cfg.ibp);
        let back = PipelineConfig::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn default_echo_round_trips() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(PipelineConfig::from_kv("colour = red").is_err());
        assert!(PipelineConfig::from_kv("k 4").is_err());
        assert!(PipelineConfig::from_kv("k = four").is_err());
        assert!(PipelineConfig::from_kv("flow = magic").is_err());
    }

    #[test]
    fn validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        assert!(PipelineConfig::from_kv("k = 0").unwrap().validate().is_err());
        assert!(PipelineConfig::from_kv("mag_factor = 1").unwrap().validate().is_err());
        assert!(PipelineConfig::from_kv("weights = /nonexistent/net.wts").unwrap().validate().is_err());
    }
}
