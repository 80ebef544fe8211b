//! Flat `key = value` run configuration.
//!
//! One file drives every subcommand. Lines are `key = value`; `#` starts a
//! comment. Unknown and repeated keys are rejected. [`RunConfig::serialize`]
//! writes every key in canonical order, so the output parses back to the
//! same value and hashing it identifies the experiment.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::NaiveDate;
use quake_core::catalog::{CatalogFormat, GridSpec, LabelSpec};
use quake_core::eval::DEFAULT_THRESHOLDS;
use quake_core::model::{AdamConfig, ModelConfig, TrainConfig, Variant};
use quake_core::prior::PriorMode;
use quake_core::rtl::RtlParams;
use quake_core::synth::SynthConfig;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Which chronological block a command reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(format!("unknown split {other:?}, expected train, val or test")),
        }
    }
}

/// Synthetic catalog settings; grid, labels and seed come from the run.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSettings {
    pub start_day: NaiveDate,
    pub days: usize,
    pub background_rate: f64,
    pub b_value: f64,
    pub m_min: f64,
    pub precursor_mag: f64,
    pub mainshock_mag: f64,
    pub lag_days: u32,
    pub pair_rate: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let s = SynthConfig::default();
        SynthSettings {
            start_day: s.start_day,
            days: s.days,
            background_rate: s.background_rate,
            b_value: s.b_value,
            m_min: s.m_min,
            precursor_mag: s.precursor_mag,
            mainshock_mag: s.mainshock_mag,
            lag_days: s.lag_days,
            pair_rate: s.pair_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub work_dir: PathBuf,
    /// Input catalog for `ingest`; empty means `<work_dir>/catalog.csv`.
    pub catalog: PathBuf,
    pub catalog_delimiter: char,
    pub seed: u64,
    pub grid: GridSpec,
    pub labels: LabelSpec,
    pub rtl: RtlParams,
    pub rtl_standardize: bool,
    pub prior_alpha: f64,
    pub prior_c: f64,
    pub prior_mode: PriorMode,
    /// `model.seed` is kept equal to `seed`.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: [f64; 3],
    pub gap_days: u32,
    pub eval_split: SplitName,
    pub thresholds: Vec<f64>,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        RunConfig {
            work_dir: PathBuf::from("run"),
            catalog: PathBuf::new(),
            catalog_delimiter: ',',
            seed: 0,
            grid: synth.grid,
            labels: LabelSpec::default(),
            rtl: RtlParams::default(),
            rtl_standardize: false,
            prior_alpha: 1.0,
            prior_c: 0.0,
            prior_mode: PriorMode::Additive,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: [0.7, 0.15, 0.15],
            gap_days: 50,
            eval_split: SplitName::Test,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            synth: SynthSettings::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn join<T: Display>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Every key, in canonical order.
    pub fn keys() -> Vec<&'static str> {
        RunConfig::default().entries().into_iter().map(|(k, _)| k).collect()
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let g = &self.grid;
        let m = &self.model;
        let t = &self.train;
        let s = &self.synth;
        vec![
            ("work_dir", self.work_dir.display().to_string()),
            ("catalog", self.catalog.display().to_string()),
            ("catalog_delimiter", self.catalog_delimiter.to_string()),
            ("seed", self.seed.to_string()),
            ("origin_lat", g.origin_lat.to_string()),
            ("origin_lon", g.origin_lon.to_string()),
            ("cell_km", g.cell_km.to_string()),
            ("n_rows", g.n_rows.to_string()),
            ("n_cols", g.n_cols.to_string()),
            ("ref_lat", g.ref_lat.to_string()),
            ("t_min_days", self.labels.t_min_days.to_string()),
            ("t_max_days", self.labels.t_max_days.to_string()),
            ("mag_threshold", self.labels.mag_threshold.to_string()),
            ("rtl_r0", self.rtl.r0.to_string()),
            ("rtl_t0", self.rtl.t0.to_string()),
            ("rtl_r_max", self.rtl.r_max.to_string()),
            ("rtl_t_max", self.rtl.t_max.to_string()),
            ("rtl_m_min", self.rtl.m_min.to_string()),
            ("rtl_eps_km", self.rtl.eps_km.to_string()),
            ("rtl_standardize", self.rtl_standardize.to_string()),
            ("prior_alpha", self.prior_alpha.to_string()),
            ("prior_c", self.prior_c.to_string()),
            ("prior_mode", self.prior_mode.as_str().to_string()),
            ("variant", m.variant.to_string()),
            ("use_prior_residual", m.use_prior_residual.to_string()),
            ("embed_channels", m.embed_channels.to_string()),
            ("hidden_channels", m.hidden_channels.to_string()),
            ("window_days", m.window_days.to_string()),
            ("kernel_size", m.kernel_size.to_string()),
            ("head_depth", m.head_depth.to_string()),
            ("minor_class_weight", t.minor_class_weight.to_string()),
            ("learning_rate", t.adam.learning_rate.to_string()),
            ("beta1", t.adam.beta1.to_string()),
            ("beta2", t.adam.beta2.to_string()),
            ("adam_eps", t.adam.eps.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batch_days", t.batch_days.to_string()),
            ("samples_per_epoch", t.samples_per_epoch.to_string()),
            ("patience", t.patience.to_string()),
            ("train_fraction", self.split[0].to_string()),
            ("val_fraction", self.split[1].to_string()),
            ("test_fraction", self.split[2].to_string()),
            ("gap_days", self.gap_days.to_string()),
            ("eval_split", self.eval_split.as_str().to_string()),
            ("thresholds", join(&self.thresholds)),
            ("synth_start_day", s.start_day.to_string()),
            ("synth_days", s.days.to_string()),
            ("synth_background_rate", s.background_rate.to_string()),
            ("synth_b_value", s.b_value.to_string()),
            ("synth_m_min", s.m_min.to_string()),
            ("synth_precursor_mag", s.precursor_mag.to_string()),
            ("synth_mainshock_mag", s.mainshock_mag.to_string()),
            ("synth_lag_days", s.lag_days.to_string()),
            ("synth_pair_rate", s.pair_rate.to_string()),
        ]
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value;
        match key {
            "work_dir" => self.work_dir = PathBuf::from(v),
            "catalog" => self.catalog = PathBuf::from(v),
            "catalog_delimiter" => {
                let mut chars = v.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) if c.is_ascii() => self.catalog_delimiter = c,
                    _ => return Err(CliError::Config(format!("catalog_delimiter: need one ASCII character, got {v:?}"))),
                }
            }
            "seed" => {
                self.seed = parse_value(key, v)?;
                self.model.seed = self.seed;
            }
            "origin_lat" => self.grid.origin_lat = parse_value(key, v)?,
            "origin_lon" => self.grid.origin_lon = parse_value(key, v)?,
            "cell_km" => self.grid.cell_km = parse_value(key, v)?,
            "n_rows" => self.grid.n_rows = parse_value(key, v)?,
            "n_cols" => self.grid.n_cols = parse_value(key, v)?,
            "ref_lat" => self.grid.ref_lat = parse_value(key, v)?,
            "t_min_days" => self.labels.t_min_days = parse_value(key, v)?,
            "t_max_days" => self.labels.t_max_days = parse_value(key, v)?,
            "mag_threshold" => self.labels.mag_threshold = parse_value(key, v)?,
            "rtl_r0" => self.rtl.r0 = parse_value(key, v)?,
            "rtl_t0" => self.rtl.t0 = parse_value(key, v)?,
            "rtl_r_max" => self.rtl.r_max = parse_value(key, v)?,
            "rtl_t_max" => self.rtl.t_max = parse_value(key, v)?,
            "rtl_m_min" => self.rtl.m_min = parse_value(key, v)?,
            "rtl_eps_km" => self.rtl.eps_km = parse_value(key, v)?,
            "rtl_standardize" => self.rtl_standardize = parse_bool(key, v)?,
            "prior_alpha" => self.prior_alpha = parse_value(key, v)?,
            "prior_c" => self.prior_c = parse_value(key, v)?,
            "prior_mode" => self.prior_mode = parse_value(key, v)?,
            "variant" => self.model.variant = parse_value::<Variant>(key, v)?,
            "use_prior_residual" => self.model.use_prior_residual = parse_bool(key, v)?,
            "embed_channels" => self.model.embed_channels = parse_value(key, v)?,
            "hidden_channels" => self.model.hidden_channels = parse_value(key, v)?,
            "window_days" => self.model.window_days = parse_value(key, v)?,
            "kernel_size" => self.model.kernel_size = parse_value(key, v)?,
            "head_depth" => self.model.head_depth = parse_value(key, v)?,
            "minor_class_weight" => self.train.minor_class_weight = parse_value(key, v)?,
            "learning_rate" => self.train.adam.learning_rate = parse_value(key, v)?,
            "beta1" => self.train.adam.beta1 = parse_value(key, v)?,
            "beta2" => self.train.adam.beta2 = parse_value(key, v)?,
            "adam_eps" => self.train.adam.eps = parse_value(key, v)?,
            "epochs" => self.train.epochs = parse_value(key, v)?,
            "batch_days" => self.train.batch_days = parse_value(key, v)?,
            "samples_per_epoch" => self.train.samples_per_epoch = parse_value(key, v)?,
            "patience" => self.train.patience = parse_value(key, v)?,
            "train_fraction" => self.split[0] = parse_value(key, v)?,
            "val_fraction" => self.split[1] = parse_value(key, v)?,
            "test_fraction" => self.split[2] = parse_value(key, v)?,
            "gap_days" => self.gap_days = parse_value(key, v)?,
            "eval_split" => self.eval_split = parse_value(key, v)?,
            "thresholds" => {
                self.thresholds = v
                    .split(',')
                    .map(|s| parse_value(key, s.trim()))
                    .collect::<CliResult<Vec<f64>>>()?
            }
            "synth_start_day" => self.synth.start_day = parse_value(key, v)?,
            "synth_days" => self.synth.days = parse_value(key, v)?,
            "synth_background_rate" => self.synth.background_rate = parse_value(key, v)?,
            "synth_b_value" => self.synth.b_value = parse_value(key, v)?,
            "synth_m_min" => self.synth.m_min = parse_value(key, v)?,
            "synth_precursor_mag" => self.synth.precursor_mag = parse_value(key, v)?,
            "synth_mainshock_mag" => self.synth.mainshock_mag = parse_value(key, v)?,
            "synth_lag_days" => self.synth.lag_days = parse_value(key, v)?,
            "synth_pair_rate" => self.synth.pair_rate = parse_value(key, v)?,
            other => return Err(CliError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
            self.set(key, value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {}", n + 1, e.message())))?;
        }
        Ok(())
    }

    /// Parses a config text over the defaults and validates it.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> CliResult<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {assignment:?}: expected key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of [`RunConfig::serialize`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.serialize().as_bytes()))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.grid.validate()?;
        self.labels.validate()?;
        self.rtl.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.model.seed != self.seed {
            return bad("model seed must equal seed".into());
        }
        if !(self.prior_alpha > 0.0 && self.prior_alpha.is_finite()) {
            return bad(format!("prior_alpha must be > 0, got {}", self.prior_alpha));
        }
        if !self.prior_c.is_finite() {
            return bad("prior_c must be finite".into());
        }
        if self.split.iter().any(|f| !(*f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions must be non-negative and sum to 1, got {:?}", self.split));
        }
        if self.thresholds.is_empty()
            || self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t))
            || self.thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("thresholds must be strictly increasing values in [0, 1]".into());
        }
        Ok(())
    }

    pub fn catalog_path(&self) -> PathBuf {
        if self.catalog.as_os_str().is_empty() {
            self.work_dir.join("catalog.csv")
        } else {
            self.catalog.clone()
        }
    }

    pub fn catalog_format(&self) -> CatalogFormat {
        CatalogFormat { delimiter: self.catalog_delimiter as u8 }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            grid: self.grid.clone(),
            start_day: s.start_day,
            days: s.days,
            background_rate: s.background_rate,
            b_value: s.b_value,
            m_min: s.m_min,
            precursor_mag: s.precursor_mag,
            mainshock_mag: s.mainshock_mag,
            lag_days: s.lag_days,
            pair_rate: s.pair_rate,
            labels: self.labels,
            seed: self.seed,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        self.train.adam
    }
}
