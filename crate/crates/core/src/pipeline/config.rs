//! `section.key = value` configuration with a closed schema.
//!
//! Blank lines and `#` comments are ignored. Every key must be known and may
//! appear at most once; anything else is rejected before any work starts.

use std::fmt::Write as _;
use std::path::Path;

use crate::chem::ExponentConvention;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::sim::ProtocolConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibSettings {
    /// Lowest ground-truth concentration (mmol/L) used as a calibration point.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSettings {
    pub floor: f64,
    pub stable_only: bool,
    pub test_fraction: f64,
    pub seed: u64,
    /// Samples per input row. Only pointwise inputs (1) are supported.
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub hidden: Vec<usize>,
    pub config: TrainConfig<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    /// Per-sample MAPE threshold (percent) for the tail probability.
    pub tail_threshold: f64,
    pub histogram_bins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sim: ProtocolConfig<f64>,
    pub calib: CalibSettings,
    pub dataset: DatasetSettings,
    pub train: TrainSettings,
    pub eval: EvalSettings,
}

impl Default for PipelineConfig {
    /// The reference recipe: 10-step mixture dilution, 10 repeats, 20%
    /// split, 256x4 hidden layers, batch 64, lr 1e-4, decay 1e-7.
    fn default() -> Self {
        PipelineConfig {
            sim: ProtocolConfig::default(),
            calib: CalibSettings { floor: 1e-6 },
            dataset: DatasetSettings {
                floor: 1e-6,
                stable_only: false,
                test_fraction: 0.2,
                seed: 42,
                window: 1,
            },
            train: TrainSettings {
                hidden: vec![256, 256, 256, 256],
                config: TrainConfig::default(),
            },
            eval: EvalSettings {
                tail_threshold: 5.0,
                histogram_bins: 20,
            },
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Config(format!("{key}: expected a number, got {v:?}")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got {v:?}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

/// Comma-separated list of positive widths, e.g. `256,256,256,256`.
pub fn parse_widths(v: &str) -> Result<Vec<usize>> {
    let widths: Vec<usize> = v
        .split(',')
        .map(|w| w.trim().parse::<usize>().ok().filter(|w| *w > 0))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Config(format!("expected comma-separated positive widths, got {v:?}")))?;
    if widths.is_empty() {
        return Err(Error::Config("architecture needs at least one hidden layer".into()));
    }
    Ok(widths)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Every accepted key, in the order `to_text` writes them.
pub const KEYS: &[&str] = &[
    "sim.seed",
    "sim.repeats",
    "sim.steps",
    "sim.first_event_s",
    "sim.event_interval_s",
    "sim.sample_rate_hz",
    "sim.settle_s",
    "sim.noise_sd_v",
    "sim.kinetic_amplitude_v",
    "sim.kinetic_tau_s",
    "sim.kinetic_omega_rad_s",
    "sim.crosstalk_gain",
    "sim.selectivity_same_sign",
    "sim.selectivity_opposite_sign",
    "sim.exponent",
    "sim.temperature_k",
    "sim.background_mmol",
    "sim.e0_v",
    "sim.initial_volume_ml",
    "sim.dose_volume_ml",
    "sim.strength",
    "calib.floor_mmol",
    "dataset.floor_mmol",
    "dataset.stable_only",
    "dataset.test_fraction",
    "dataset.seed",
    "dataset.window",
    "train.arch",
    "train.lr0",
    "train.decay",
    "train.batch_size",
    "train.max_epochs",
    "train.patience",
    "train.beta1",
    "train.beta2",
    "train.eps_adam",
    "train.eps_mape",
    "train.bn_momentum",
    "train.seed",
    "eval.tail_threshold_pct",
    "eval.histogram_bins",
];

impl PipelineConfig {
    /// Sets one key; `key` must be in [`KEYS`].
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let s = &mut self.sim;
        let t = &mut self.train.config;
        match key {
            "sim.seed" => s.seed = parse_u64(key, v)?,
            "sim.repeats" => s.repeats = parse_usize(key, v)?,
            "sim.steps" => s.steps = parse_usize(key, v)?,
            "sim.first_event_s" => s.first_event_time = parse_f64(key, v)?,
            "sim.event_interval_s" => s.event_interval = parse_f64(key, v)?,
            "sim.sample_rate_hz" => s.sample_rate = parse_f64(key, v)?,
            "sim.settle_s" => s.settle_time = parse_f64(key, v)?,
            "sim.noise_sd_v" => s.noise_sd = parse_f64(key, v)?,
            "sim.kinetic_amplitude_v" => s.kinetic_amplitude = parse_f64(key, v)?,
            "sim.kinetic_tau_s" => s.kinetic_tau = parse_f64(key, v)?,
            "sim.kinetic_omega_rad_s" => s.kinetic_omega = parse_f64(key, v)?,
            "sim.crosstalk_gain" => s.crosstalk_gain = parse_f64(key, v)?,
            "sim.selectivity_same_sign" => s.selectivity_same_sign = parse_f64(key, v)?,
            "sim.selectivity_opposite_sign" => s.selectivity_opposite_sign = parse_f64(key, v)?,
            "sim.exponent" => {
                s.exponent = v
                    .parse::<ExponentConvention>()
                    .map_err(|e| Error::Config(format!("{key}: {}", strip_prefix(e))))?
            }
            "sim.temperature_k" => s.temperature = parse_f64(key, v)?,
            "sim.background_mmol" => s.background = parse_f64(key, v)?,
            "sim.e0_v" => {
                s.e0 = v
                    .split(',')
                    .map(|x| parse_f64(key, x.trim()))
                    .collect::<Result<_>>()?
            }
            "sim.initial_volume_ml" => s.initial_volume_ml = parse_f64(key, v)?,
            "sim.dose_volume_ml" => s.dose_volume_ml = parse_f64(key, v)?,
            "sim.strength" => s.strength = parse_f64(key, v)?,
            "calib.floor_mmol" => self.calib.floor = parse_f64(key, v)?,
            "dataset.floor_mmol" => self.dataset.floor = parse_f64(key, v)?,
            "dataset.stable_only" => self.dataset.stable_only = parse_bool(key, v)?,
            "dataset.test_fraction" => self.dataset.test_fraction = parse_f64(key, v)?,
            "dataset.seed" => self.dataset.seed = parse_u64(key, v)?,
            "dataset.window" => self.dataset.window = parse_usize(key, v)?,
            "train.arch" => {
                self.train.hidden = parse_widths(v).map_err(|e| Error::Config(format!("{key}: {}", strip_prefix(e))))?
            }
            "train.lr0" => t.lr0 = parse_f64(key, v)?,
            "train.decay" => t.decay = parse_f64(key, v)?,
            "train.batch_size" => t.batch_size = parse_usize(key, v)?,
            "train.max_epochs" => t.max_epochs = parse_usize(key, v)?,
            "train.patience" => t.patience = parse_usize(key, v)?,
            "train.beta1" => t.beta1 = parse_f64(key, v)?,
            "train.beta2" => t.beta2 = parse_f64(key, v)?,
            "train.eps_adam" => t.eps_adam = parse_f64(key, v)?,
            "train.eps_mape" => t.eps_mape = parse_f64(key, v)?,
            "train.bn_momentum" => t.bn_momentum = parse_f64(key, v)?,
            "train.seed" => t.seed = parse_u64(key, v)?,
            "eval.tail_threshold_pct" => self.eval.tail_threshold = parse_f64(key, v)?,
            "eval.histogram_bins" => self.eval.histogram_bins = parse_usize(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `section.key = value`", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", i + 1)));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_prefix(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// `default` selects the built-in recipe; anything else is a file path.
    pub fn load(source: &str) -> Result<Self> {
        if source == "default" {
            return Ok(PipelineConfig::default());
        }
        let path = Path::new(source);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        let s = &self.sim;
        if s.repeats == 0 || s.steps == 0 {
            return bad("sim.repeats and sim.steps must be positive");
        }
        if !(s.sample_rate > 0.0) || !(s.event_interval > 0.0) || s.first_event_time < 0.0 || s.settle_time < 0.0 {
            return bad("sim timing values must be positive (first event and settle may be zero)");
        }
        if s.noise_sd < 0.0 || s.background < 0.0 || !(s.temperature > 0.0) {
            return bad("sim.noise_sd_v and sim.background_mmol must be non-negative, sim.temperature_k positive");
        }
        if s.e0.len() != s.registry.len() {
            return bad("sim.e0_v needs one value per electrode");
        }
        if !(self.calib.floor >= 0.0) || !(self.dataset.floor >= 0.0) {
            return bad("floors must be non-negative");
        }
        if !(self.dataset.test_fraction > 0.0 && self.dataset.test_fraction < 1.0) {
            return bad("dataset.test_fraction must lie strictly between 0 and 1");
        }
        if self.dataset.window != 1 {
            return bad("dataset.window: only pointwise inputs (window = 1) are supported");
        }
        if self.train.hidden.is_empty() || self.train.hidden.contains(&0) {
            return bad("train.arch needs positive widths");
        }
        self.train
            .config
            .validate()
            .map_err(|e| Error::Config(strip_prefix(e)))?;
        if self.eval.histogram_bins == 0 || !(self.eval.tail_threshold >= 0.0) {
            return bad("eval.histogram_bins must be positive and eval.tail_threshold_pct non-negative");
        }
        Ok(())
    }

    /// Config file text that parses back to `self`.
    pub fn to_text(&self) -> String {
        let s = &self.sim;
        let t = &self.train.config;
        let values: Vec<String> = vec![
            s.seed.to_string(),
            s.repeats.to_string(),
            s.steps.to_string(),
            s.first_event_time.to_string(),
            s.event_interval.to_string(),
            s.sample_rate.to_string(),
            s.settle_time.to_string(),
            s.noise_sd.to_string(),
            s.kinetic_amplitude.to_string(),
            s.kinetic_tau.to_string(),
            s.kinetic_omega.to_string(),
            s.crosstalk_gain.to_string(),
            s.selectivity_same_sign.to_string(),
            s.selectivity_opposite_sign.to_string(),
            s.exponent.as_str().to_string(),
            s.temperature.to_string(),
            s.background.to_string(),
            join(&s.e0),
            s.initial_volume_ml.to_string(),
            s.dose_volume_ml.to_string(),
            s.strength.to_string(),
            self.calib.floor.to_string(),
            self.dataset.floor.to_string(),
            self.dataset.stable_only.to_string(),
            self.dataset.test_fraction.to_string(),
            self.dataset.seed.to_string(),
            self.dataset.window.to_string(),
            join(&self.train.hidden),
            t.lr0.to_string(),
            t.decay.to_string(),
            t.batch_size.to_string(),
            t.max_epochs.to_string(),
            t.patience.to_string(),
            t.beta1.to_string(),
            t.beta2.to_string(),
            t.eps_adam.to_string(),
            t.eps_mape.to_string(),
            t.bn_momentum.to_string(),
            t.seed.to_string(),
            self.eval.tail_threshold.to_string(),
            self.eval.histogram_bins.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) | Error::Domain(m) => m,
        other => other.to_string(),
    }
}
