//! Run configuration in a flat `key = value` format with dotted keys.
//!
//! Lines starting with `#` are comments. Every key is optional; missing
//! keys keep their defaults and unknown keys are rejected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::classic::BaselineOptions;
use crate::dataset::{DatasetVariant, VariantTag};
use crate::error::{Error, Result};
use crate::gating::SliceConfig;
use crate::nn::arch::{format_hidden, parse_hidden, Activation, NetworkArch};
use crate::nn::train::TrainConfig;
use crate::scene::{AlphaRange, CalibrationReference, NoiseModel, RangeDistribution, Simulator};
use crate::seed::{fnv1a, stage_seed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceParams {
    pub pulses: u32,
    pub pulse_ns: f64,
    pub gate_ns: f64,
    pub delay_ns: f64,
}

impl SliceParams {
    pub fn to_slice(&self) -> Result<SliceConfig> {
        SliceConfig::rectangular(self.pulses, self.pulse_ns, self.gate_ns, self.delay_ns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMode {
    Plateau,
    Peak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub slices: [SliceParams; 3],
    pub extinction_per_m: f64,
    pub calibration_mode: CalibrationMode,
    pub calibration_target_gray: f64,
    pub calibration_r_min_m: f64,
    pub calibration_r_max_m: f64,
    pub scene_samples: usize,
    pub scene_r_min_m: f64,
    pub scene_r_max_m: f64,
    pub scene_alpha_min: f64,
    pub scene_alpha_max: f64,
    pub noise_sigma: f64,
    pub variant: VariantTag,
    pub train_fraction: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub baseline_dark_floor: f64,
    pub baseline_section_slack_m: f64,
    pub eval_bin_width_m: f64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let preset = SliceConfig::automotive_preset();
        let slices = preset.map(|s| SliceParams {
            pulses: s.pulses,
            pulse_ns: s.pulse.width_ns(),
            gate_ns: s.gate.width_ns(),
            delay_ns: s.delay_ns,
        });
        let train = TrainConfig::for_variant(VariantTag::Dataset3, 0);
        Self {
            seed: 42,
            slices,
            extinction_per_m: 0.0,
            calibration_mode: CalibrationMode::Plateau,
            calibration_target_gray: 200.0,
            calibration_r_min_m: 10.0,
            calibration_r_max_m: 100.0,
            scene_samples: 100_000,
            scene_r_min_m: 10.0,
            scene_r_max_m: 100.0,
            scene_alpha_min: 0.05,
            scene_alpha_max: 0.9,
            noise_sigma: 2.0,
            variant: VariantTag::Dataset3,
            train_fraction: 0.8,
            hidden: vec![40],
            activation: Activation::Relu,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            patience: train.patience,
            baseline_dark_floor: BaselineOptions::default().dark_floor,
            baseline_section_slack_m: BaselineOptions::default().section_slack_m,
            eval_bin_width_m: 5.0,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
}

impl RunConfig {
    /// Every accepted key, in canonical order.
    pub fn keys() -> Vec<String> {
        Self::default().entries().into_iter().map(|(k, _)| k).collect()
    }

    fn entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = vec![("seed".into(), self.seed.to_string())];
        for (i, s) in self.slices.iter().enumerate() {
            let p = format!("slice{}", i + 1);
            e.push((format!("{p}.pulses"), s.pulses.to_string()));
            e.push((format!("{p}.tl_ns"), s.pulse_ns.to_string()));
            e.push((format!("{p}.tg_ns"), s.gate_ns.to_string()));
            e.push((format!("{p}.t0_ns"), s.delay_ns.to_string()));
        }
        let mode = match self.calibration_mode {
            CalibrationMode::Plateau => "plateau",
            CalibrationMode::Peak => "peak",
        };
        let rest: [(&str, String); 23] = [
            ("atmosphere.extinction_per_m", self.extinction_per_m.to_string()),
            ("calibration.reference", mode.into()),
            ("calibration.target_gray", self.calibration_target_gray.to_string()),
            ("calibration.r_min_m", self.calibration_r_min_m.to_string()),
            ("calibration.r_max_m", self.calibration_r_max_m.to_string()),
            ("scene.samples", self.scene_samples.to_string()),
            ("scene.r_min_m", self.scene_r_min_m.to_string()),
            ("scene.r_max_m", self.scene_r_max_m.to_string()),
            ("scene.alpha_min", self.scene_alpha_min.to_string()),
            ("scene.alpha_max", self.scene_alpha_max.to_string()),
            ("noise.sigma", self.noise_sigma.to_string()),
            ("dataset.variant", self.variant.to_string()),
            ("dataset.train_fraction", self.train_fraction.to_string()),
            ("network.hidden", format_hidden(&self.hidden)),
            ("network.activation", self.activation.to_string()),
            ("train.learning_rate", self.learning_rate.to_string()),
            ("train.batch_size", self.batch_size.to_string()),
            ("train.max_epochs", self.max_epochs.to_string()),
            ("train.patience", self.patience.to_string()),
            ("baseline.dark_floor", self.baseline_dark_floor.to_string()),
            ("baseline.section_slack_m", self.baseline_section_slack_m.to_string()),
            ("eval.bin_width_m", self.eval_bin_width_m.to_string()),
            ("paths.output_dir", self.output_dir.display().to_string()),
        ];
        e.extend(rest.into_iter().map(|(k, v)| (k.to_string(), v)));
        e
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        if let Some((slice, field)) = key.strip_prefix("slice").and_then(|k| k.split_once('.')) {
            let i = match slice {
                "1" => 0,
                "2" => 1,
                "3" => 2,
                _ => return Err(format!("unknown key `{key}`")),
            };
            let s = &mut self.slices[i];
            match field {
                "pulses" => s.pulses = num(v)?,
                "tl_ns" => s.pulse_ns = num(v)?,
                "tg_ns" => s.gate_ns = num(v)?,
                "t0_ns" => s.delay_ns = num(v)?,
                _ => return Err(format!("unknown key `{key}`")),
            }
            return Ok(());
        }
        match key {
            "seed" => self.seed = num(v)?,
            "atmosphere.extinction_per_m" => self.extinction_per_m = num(v)?,
            "calibration.reference" => {
                self.calibration_mode = match v {
                    "plateau" => CalibrationMode::Plateau,
                    "peak" => CalibrationMode::Peak,
                    _ => return Err(format!("`{v}`: expected `plateau` or `peak`")),
                }
            }
            "calibration.target_gray" => self.calibration_target_gray = num(v)?,
            "calibration.r_min_m" => self.calibration_r_min_m = num(v)?,
            "calibration.r_max_m" => self.calibration_r_max_m = num(v)?,
            "scene.samples" => self.scene_samples = num(v)?,
            "scene.r_min_m" => self.scene_r_min_m = num(v)?,
            "scene.r_max_m" => self.scene_r_max_m = num(v)?,
            "scene.alpha_min" => self.scene_alpha_min = num(v)?,
            "scene.alpha_max" => self.scene_alpha_max = num(v)?,
            "noise.sigma" => self.noise_sigma = num(v)?,
            "dataset.variant" => self.variant = v.parse().map_err(|e: Error| e.to_string())?,
            "dataset.train_fraction" => self.train_fraction = num(v)?,
            "network.hidden" => self.hidden = parse_hidden(v).map_err(|e| e.to_string())?,
            "network.activation" => self.activation = v.parse().map_err(|e: Error| e.to_string())?,
            "train.learning_rate" => self.learning_rate = num(v)?,
            "train.batch_size" => self.batch_size = num(v)?,
            "train.max_epochs" => self.max_epochs = num(v)?,
            "train.patience" => self.patience = num(v)?,
            "baseline.dark_floor" => self.baseline_dark_floor = num(v)?,
            "baseline.section_slack_m" => self.baseline_section_slack_m = num(v)?,
            "eval.bin_width_m" => self.eval_bin_width_m = num(v)?,
            "paths.output_dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults; `origin` labels errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::Parse {
                path: origin.into(),
                line: i + 1,
                reason,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(err(format!("duplicate key `{k}`")));
            }
            cfg.set(k, v).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.slice_configs()?;
        self.simulator()?;
        self.range_distribution_validated()?;
        self.alpha_range()?;
        NoiseModel::new(self.noise_sigma, 0)?;
        self.arch()?;
        self.train_config().validate()?;
        DatasetVariant::new(self.variant).validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("dataset.train_fraction", "must lie in (0, 1)"));
        }
        if self.scene_samples == 0 {
            return Err(Error::invalid("scene.samples", "must be >= 1"));
        }
        if !(self.baseline_dark_floor >= 0.0 && self.baseline_section_slack_m >= 0.0) {
            return Err(Error::invalid("baseline", "floor and slack must be >= 0"));
        }
        if !(self.eval_bin_width_m > 0.0) {
            return Err(Error::invalid("eval.bin_width_m", "must be > 0"));
        }
        Ok(())
    }

    /// Stable 64-bit digest of the canonical text, as 16 hex digits.
    pub fn hash_hex(&self) -> String {
        format!("{:016x}", fnv1a(self.to_string().as_bytes()))
    }

    /// Seed for a named pipeline stage.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        stage_seed(self.seed, stage)
    }

    pub fn slice_configs(&self) -> Result<[SliceConfig; 3]> {
        Ok([self.slices[0].to_slice()?, self.slices[1].to_slice()?, self.slices[2].to_slice()?])
    }

    pub fn calibration_reference(&self) -> CalibrationReference {
        match self.calibration_mode {
            CalibrationMode::Plateau => CalibrationReference::BrightestPlateau,
            CalibrationMode::Peak => CalibrationReference::PeakOverRange {
                r_lo: self.calibration_r_min_m,
                r_hi: self.calibration_r_max_m,
            },
        }
    }

    pub fn simulator(&self) -> Result<Simulator> {
        Simulator::calibrated(
            self.slice_configs()?,
            self.extinction_per_m,
            self.calibration_target_gray,
            self.calibration_reference(),
        )
    }

    pub fn range_distribution(&self) -> RangeDistribution {
        RangeDistribution::Uniform {
            lo: self.scene_r_min_m,
            hi: self.scene_r_max_m,
        }
    }

    fn range_distribution_validated(&self) -> Result<()> {
        if !(self.scene_r_min_m > 0.0 && self.scene_r_max_m > self.scene_r_min_m) {
            return Err(Error::invalid("scene range", "need 0 < r_min_m < r_max_m"));
        }
        Ok(())
    }

    pub fn alpha_range(&self) -> Result<AlphaRange> {
        AlphaRange::new(self.scene_alpha_min, self.scene_alpha_max)
    }

    /// Noise model seeded for `stage`.
    pub fn noise(&self, stage: &str) -> Result<NoiseModel> {
        NoiseModel::new(self.noise_sigma, self.stage_seed(stage))
    }

    pub fn arch(&self) -> Result<NetworkArch> {
        NetworkArch::new(self.hidden.clone(), self.activation)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.stage_seed("train"),
        }
    }

    pub fn baseline_options(&self) -> BaselineOptions {
        BaselineOptions {
            dark_floor: self.baseline_dark_floor,
            section_slack_m: self.baseline_section_slack_m,
        }
    }
}

/// Canonical text: every key, one per line, in fixed order.
impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
