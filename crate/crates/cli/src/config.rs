//! `key = value` run files for the `train` subcommand.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ldmres::arch::NetworkConfig;
use ldmres::train::{AugmentPolicy, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub manifest: Option<PathBuf>,
    pub output: PathBuf,
    pub history: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::reference(),
            train: TrainConfig::default(),
            manifest: None,
            output: PathBuf::from("model.ldmr"),
            history: PathBuf::from("history.csv"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).with_context(|| format!("in {}", path.display()))
    }

    /// Parses run-file text; relative paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let defaults = Self::default();
        let mut cfg = Self {
            output: base.join(&defaults.output),
            history: base.join(&defaults.history),
            ..defaults
        };
        let mut augment = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            cfg.set(key, value, base, &mut augment)
                .with_context(|| format!("line {}: key `{key}`", i + 1))?;
        }
        let seed = cfg.train.seed;
        cfg.network.seed = seed;
        cfg.train.augment = augment.then(|| AugmentPolicy { seed, ..AugmentPolicy::default() });
        cfg.network.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base: &Path, augment: &mut bool) -> Result<()> {
        let n = &mut self.network;
        let t = &mut self.train;
        let path = || base.join(value);
        match key {
            "in_channels" => n.in_channels = num(value)?,
            "num_classes" => n.num_classes = num(value)?,
            "stem_width" => n.stem_width = num(value)?,
            "stage_widths" => {
                let v: Vec<usize> = value.split(',').map(|s| num(s.trim())).collect::<Result<_>>()?;
                n.stage_widths = v.try_into().map_err(|v: Vec<usize>| anyhow!("expected 3 widths, got {}", v.len()))?;
            }
            "epochs" => t.epochs = num(value)?,
            "batch_size" => t.batch_size = num(value)?,
            "lr" => t.lr = num(value)?,
            "lr_decay" => t.lr_decay = num(value)?,
            "seed" => t.seed = num(value)?,
            "checkpoint_every" => t.checkpoint_every = num(value)?,
            "checkpoint_dir" => t.checkpoint_dir = Some(path()),
            "augment" => *augment = num(value)?,
            "split_ratio" => t.split_ratio = num(value)?,
            "input_size" => {
                let (h, w) = value
                    .split_once('x')
                    .ok_or_else(|| anyhow!("expected HEIGHTxWIDTH, got `{value}`"))?;
                t.input_size = Some((num(h.trim())?, num(w.trim())?));
            }
            "patch_size" => t.patch_size = Some(num(value)?),
            "max_iterations" => t.max_iterations = Some(num(value)?),
            "manifest" => self.manifest = Some(path()),
            "output" => self.output = path(),
            "history" => self.history = path(),
            _ => bail!("unknown key"),
        }
        Ok(())
    }
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| anyhow!("cannot parse `{s}`: {e}"))
}
