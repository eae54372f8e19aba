//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use mega_core::gnn::ModelDims;
use mega_core::train::{Hyperparams, Mode};

/// Environment variable supplying the default dataset root.
pub const DATA_ROOT_ENV: &str = "MEGA_DATA_ROOT";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },

    #[error("unknown config key '{key}'")]
    UnknownKey { key: String },

    #[error("config key '{key}': invalid value '{value}': {reason}")]
    BadValue { key: String, value: String, reason: String },

    #[error("--set expects key=value, got '{0}'")]
    BadOverride(String),
}

/// Everything one command needs. The input width of the model is not
/// configurable; it comes from the dataset's node features.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: String,
    pub data_root: PathBuf,
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub n_runs: usize,
    pub hyper: Hyperparams,
    pub dims: ModelDims,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: "MUTAG".into(),
            data_root: PathBuf::from("data"),
            mode: Mode::Mega,
            output_dir: PathBuf::from("runs"),
            n_runs: 10,
            hyper: Hyperparams::default(),
            dims: ModelDims::with_input(1),
        }
    }
}

pub const KEYS: [&str; 18] = [
    "dataset",
    "data_root",
    "mode",
    "output_dir",
    "n_runs",
    "tau",
    "lambda",
    "inner_lr",
    "augmenter_lr",
    "encoder_lr",
    "epochs",
    "batch_size",
    "seed",
    "hidden",
    "embedding",
    "projection",
    "layers",
    "augmenter_hidden",
];

fn bad(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::BadValue { key: key.into(), value: value.into(), reason: reason.to_string() }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

impl RunConfig {
    /// Defaults with the dataset root taken from [`DATA_ROOT_ENV`] if set.
    pub fn from_env() -> Self {
        let mut cfg = RunConfig::default();
        if let Some(root) = std::env::var_os(DATA_ROOT_ENV) {
            cfg.data_root = root.into();
        }
        cfg
    }

    /// Applies the lines of `text` on top of `self`. Blank lines and
    /// anything after `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.trim().into() })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Parses a whole file over the defaults and normalizes the result.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        cfg.finish()
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (key, value) = spec.split_once('=').ok_or_else(|| ConfigError::BadOverride(spec.into()))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let h = &mut self.hyper;
        let d = &mut self.dims;
        match key {
            "dataset" | "data_root" | "output_dir" => {
                if value.is_empty() || value.contains(['#', '\n', '\r']) {
                    return Err(bad(key, value, "must be nonempty without '#' or line breaks"));
                }
                match key {
                    "dataset" => self.dataset = value.into(),
                    "data_root" => self.data_root = value.into(),
                    _ => self.output_dir = value.into(),
                }
            }
            "mode" => self.mode = value.parse().map_err(|e| bad(key, value, e))?,
            "n_runs" => self.n_runs = number(key, value)?,
            "tau" => h.tau = number(key, value)?,
            "lambda" => h.lambda = number(key, value)?,
            "inner_lr" => h.inner_lr = number(key, value)?,
            "augmenter_lr" => h.augmenter_lr = number(key, value)?,
            "encoder_lr" => h.encoder_lr = number(key, value)?,
            "epochs" => h.epochs = number(key, value)?,
            "batch_size" => h.batch_size = number(key, value)?,
            "seed" => h.seed = number(key, value)?,
            "hidden" => d.hidden = number(key, value)?,
            "embedding" => d.embedding = number(key, value)?,
            "projection" => d.projection = number(key, value)?,
            "layers" => d.layers = number(key, value)?,
            "augmenter_hidden" => d.augmenter_hidden = number(key, value)?,
            _ => return Err(ConfigError::UnknownKey { key: key.into() }),
        }
        Ok(())
    }

    /// Validates ranges and forces `lambda = 0` for `mega-il`.
    pub fn finish(mut self) -> Result<Self, ConfigError> {
        if self.mode == Mode::MegaIl && self.hyper.lambda != 0.0 {
            log::info!("mode mega-il: lambda {} replaced by 0", self.hyper.lambda);
            self.hyper.lambda = 0.0;
        }
        if self.n_runs == 0 {
            return Err(bad("n_runs", "0", "must be positive"));
        }
        self.hyper.validate().map_err(|e| bad("hyperparameters", "", e))?;
        self.dims.validate().map_err(|e| bad("model dimensions", "", e))?;
        Ok(self)
    }

    /// Serializes every key; [`RunConfig::parse`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let h = &self.hyper;
        let d = &self.dims;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("dataset", self.dataset.clone());
        line("data_root", self.data_root.display().to_string());
        line("mode", self.mode.to_string());
        line("output_dir", self.output_dir.display().to_string());
        line("n_runs", self.n_runs.to_string());
        // `{:?}` prints the shortest string that parses back to the same f64.
        line("tau", format!("{:?}", h.tau));
        line("lambda", format!("{:?}", h.lambda));
        line("inner_lr", format!("{:?}", h.inner_lr));
        line("augmenter_lr", format!("{:?}", h.augmenter_lr));
        line("encoder_lr", format!("{:?}", h.encoder_lr));
        line("epochs", h.epochs.to_string());
        line("batch_size", h.batch_size.to_string());
        line("seed", h.seed.to_string());
        line("hidden", d.hidden.to_string());
        line("embedding", d.embedding.to_string());
        line("projection", d.projection.to_string());
        line("layers", d.layers.to_string());
        line("augmenter_hidden", d.augmenter_hidden.to_string());
        out
    }
}
