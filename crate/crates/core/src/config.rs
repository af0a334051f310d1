//! Flat `key = value` run configuration with `#` comments and dotted module namespaces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::encoders::EncoderConfig;
use crate::error::{Error, Result};
use crate::mmr::RefineParams;
use crate::train::LossConfig;
use crate::umci::UmciConfig;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "CLIPSAM_SEED";

/// Where prompt sentences come from.
#[derive(Clone, Debug, PartialEq)]
pub enum BankSource {
    Builtin,
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub train_count: usize,
    pub test_count: usize,
    pub extent: usize,
    pub category: String,
    pub class_known: bool,
    pub bank: BankSource,
    pub encoder: EncoderConfig,
    pub umci: UmciConfig,
    pub loss: LossConfig,
    pub mmr: RefineParams,
}

const KEYS: &[&str] = &[
    "seed",
    "output_dir",
    "data.train_count",
    "data.test_count",
    "data.extent",
    "data.category",
    "prompts.bank",
    "prompts.class_known",
    "encoder.token_dim",
    "encoder.text_dim",
    "encoder.grid",
    "encoder.stages",
    "umci.c_h",
    "umci.s1",
    "umci.s2",
    "umci.include_strip",
    "umci.include_scale",
    "loss.gamma",
    "loss.stage_weights",
    "train.lr",
    "train.weight_decay",
    "train.batch",
    "train.epochs",
    "mmr.threshold",
    "mmr.points",
];

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn raw(&self, key: &str) -> Result<&str> {
        self.0.get(key).map(String::as_str).ok_or_else(|| Error::config(key, "missing"))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key)?;
        raw.parse().map_err(|_| Error::config(key, format!("cannot parse {raw:?}")))
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        self.raw(key)?
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| Error::config(key, format!("cannot parse {s:?} as a number"))))
            .collect()
    }
}

impl RunConfig {
    /// The desk-scale defaults; identical to `configs/default.conf`.
    pub fn desk() -> Self {
        Self::parse(Self::default_conf_text(), None).expect("default config is valid")
    }

    pub fn parse(text: &str, seed_override: Option<&str>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), "expected `key = value`"))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::config(k, "unknown key"));
            }
            if map.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::config(k, "given more than once"));
            }
        }
        if let Some(seed) = seed_override {
            map.insert("seed".into(), seed.trim().to_string());
        }
        let f = Fields(map);
        let seed: u64 = f.get("seed")?;
        let grid: usize = f.get("encoder.grid")?;
        let stages: usize = f.get("encoder.stages")?;
        let text_dim: usize = f.get("encoder.text_dim")?;
        let encoder = EncoderConfig {
            text_dim,
            token_dim: f.get("encoder.token_dim")?,
            grid_h: grid,
            grid_w: grid,
            stages,
            seed,
        };
        let umci = UmciConfig {
            token_dim: encoder.token_dim,
            text_dim,
            hidden_dim: f.get("umci.c_h")?,
            s1: f.get("umci.s1")?,
            s2: f.get("umci.s2")?,
            stages,
            include_strip: f.get("umci.include_strip")?,
            include_scale: f.get("umci.include_scale")?,
            seed,
        };
        let loss = LossConfig {
            gamma: f.get("loss.gamma")?,
            stage_weights: f.list("loss.stage_weights")?,
            lr: f.get("train.lr")?,
            weight_decay: f.get("train.weight_decay")?,
            batch: f.get("train.batch")?,
            epochs: f.get("train.epochs")?,
            seed,
        };
        let mmr = RefineParams { threshold: f.get("mmr.threshold")?, points: f.get("mmr.points")?, seed };
        let bank = match f.raw("prompts.bank")? {
            "builtin" => BankSource::Builtin,
            path => BankSource::File(PathBuf::from(path)),
        };
        let cfg = Self {
            seed,
            output_dir: PathBuf::from(f.raw("output_dir")?),
            train_count: f.get("data.train_count")?,
            test_count: f.get("data.test_count")?,
            extent: f.get("data.extent")?,
            category: f.raw("data.category")?.to_string(),
            class_known: f.get("prompts.class_known")?,
            bank,
            encoder,
            umci,
            loss,
            mmr,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, honouring [`SEED_ENV`] when set.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let seed = std::env::var(SEED_ENV).ok();
        Self::parse(&text, seed.as_deref())
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.umci.validate()?;
        self.loss.validate(self.umci.stages)?;
        if self.train_count == 0 {
            return Err(Error::config("data.train_count", "must be at least 1"));
        }
        if self.test_count == 0 {
            return Err(Error::config("data.test_count", "must be at least 1"));
        }
        if self.extent < crate::data::MIN_EXTENT {
            return Err(Error::config("data.extent", format!("must be at least {}", crate::data::MIN_EXTENT)));
        }
        if self.extent < self.encoder.grid_h {
            return Err(Error::config("encoder.grid", "exceeds the image extent"));
        }
        let grid = self.encoder.grid_h;
        for (key, s) in [("umci.s1", self.umci.s1), ("umci.s2", self.umci.s2)] {
            if s > grid {
                return Err(Error::config(key, format!("kernel {s} exceeds the {grid}x{grid} grid")));
            }
        }
        if !(0.0..=1.0).contains(&self.mmr.threshold) {
            return Err(Error::config("mmr.threshold", "must lie in [0, 1]"));
        }
        if self.category.trim().is_empty() {
            return Err(Error::config("data.category", "must not be empty"));
        }
        Ok(())
    }

    /// Serializes back to the text format; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("seed", self.seed.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("data.train_count", self.train_count.to_string());
        kv("data.test_count", self.test_count.to_string());
        kv("data.extent", self.extent.to_string());
        kv("data.category", self.category.clone());
        kv(
            "prompts.bank",
            match &self.bank {
                BankSource::Builtin => "builtin".into(),
                BankSource::File(p) => p.display().to_string(),
            },
        );
        kv("prompts.class_known", self.class_known.to_string());
        kv("encoder.token_dim", self.encoder.token_dim.to_string());
        kv("encoder.text_dim", self.encoder.text_dim.to_string());
        kv("encoder.grid", self.encoder.grid_h.to_string());
        kv("encoder.stages", self.encoder.stages.to_string());
        kv("umci.c_h", self.umci.hidden_dim.to_string());
        kv("umci.s1", self.umci.s1.to_string());
        kv("umci.s2", self.umci.s2.to_string());
        kv("umci.include_strip", self.umci.include_strip.to_string());
        kv("umci.include_scale", self.umci.include_scale.to_string());
        kv("loss.gamma", self.loss.gamma.to_string());
        kv(
            "loss.stage_weights",
            self.loss.stage_weights.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(", "),
        );
        kv("train.lr", self.loss.lr.to_string());
        kv("train.weight_decay", self.loss.weight_decay.to_string());
        kv("train.batch", self.loss.batch.to_string());
        kv("train.epochs", self.loss.epochs.to_string());
        kv("mmr.threshold", self.mmr.threshold.to_string());
        kv("mmr.points", self.mmr.points.to_string());
        s
    }

    pub fn default_conf_text() -> &'static str {
        include_str!("../data/default.conf")
    }
}
