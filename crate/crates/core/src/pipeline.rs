//! End-to-end inference, training and evaluation around one configured model.

use std::path::{Path, PathBuf};

use crate::config::{BankSource, RunConfig};
use crate::data::SyntheticSample;
use crate::encoders::{ImageEncoder, MockClip, MockSam, StageTokens};
use crate::ensemble::{build_text_feature, ClassKind, PromptBank, TextFeature};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics::MetricsReport;
use crate::mmr::{normalize_map, refine, Refinement};
use crate::params::ParamSet;
use crate::tensor::Tensor;
use crate::train::{train, TrainReport, TrainSample, TraceRow};
use crate::umci::Umci;

/// Logit scale applied to cosine similarities in the similarity-only rough map.
pub const SIMILARITY_SCALE: f64 = 100.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InferOptions {
    /// Skip mask refinement; the output is the normalized rough map.
    pub no_mmr: bool,
    /// Replace the interaction module with plain token/text cosine similarity.
    pub no_umci: bool,
}

#[derive(Clone, Debug)]
pub struct Inference {
    /// Foreground probability at image resolution.
    pub rough: Tensor,
    pub refinement: Option<Refinement>,
    /// Final map in `[0, 1]`.
    pub refined: Tensor,
}

#[derive(Clone, Debug, Default)]
pub struct Evaluation {
    pub rough: Vec<MetricsReport>,
    pub refined: Vec<MetricsReport>,
}

impl Evaluation {
    pub fn rough_mean(&self) -> Option<MetricsReport> {
        MetricsReport::mean(&self.rough)
    }

    pub fn refined_mean(&self) -> Option<MetricsReport> {
        MetricsReport::mean(&self.refined)
    }
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".conf");
    PathBuf::from(s)
}

pub fn load_bank(config: &RunConfig) -> Result<PromptBank> {
    let bank = match &config.bank {
        BankSource::Builtin => PromptBank::default_for(&config.category),
        BankSource::File(path) => PromptBank::load(path, &config.category)?,
    };
    Ok(if config.class_known { bank } else { bank.class_unknown() })
}

#[derive(Clone, Debug)]
pub struct Pipeline {
    config: RunConfig,
    clip: MockClip,
    text: TextFeature,
    model: Umci,
}

impl Pipeline {
    /// Freshly initialized model for `config`.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let clip = MockClip::new(config.encoder.clone())?;
        let text = build_text_feature(&load_bank(&config)?, &clip)?;
        let model = Umci::new(config.umci.clone())?;
        Ok(Self { config, clip, text, model })
    }

    /// Model for `config` with parameter values taken from `params`.
    pub fn with_params(config: RunConfig, params: &ParamSet) -> Result<Self> {
        let mut p = Self::new(config)?;
        p.model.params_mut().load_values_from(params)?;
        Ok(p)
    }

    /// Loads a checkpoint and the config stored next to it.
    pub fn load(checkpoint: &Path) -> Result<Self> {
        let side = sidecar_path(checkpoint);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let config = RunConfig::parse(&text, None)?;
        Self::with_params(config, &ParamSet::load(checkpoint)?)
    }

    /// Writes the checkpoint and its config sidecar.
    pub fn save(&self, checkpoint: &Path) -> Result<()> {
        self.model.params().save(checkpoint)?;
        let side = sidecar_path(checkpoint);
        std::fs::write(&side, self.config.to_text()).map_err(|e| Error::io(&side, e))
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn model(&self) -> &Umci {
        &self.model
    }

    pub fn text_feature(&self) -> &TextFeature {
        &self.text
    }

    pub fn encode(&self, image: &Tensor) -> Result<StageTokens> {
        self.clip.encode_image(image)
    }

    fn image_hw(image: &Tensor) -> Result<(usize, usize)> {
        match *image.shape() {
            [h, w] => Ok((h, w)),
            ref s => Err(Error::shape("pipeline", format!("expected a grayscale H x W image, got {s:?}"))),
        }
    }

    /// Foreground probability from the trained interaction module.
    pub fn rough_map(&self, image: &Tensor) -> Result<Tensor> {
        let tokens = self.encode(image)?;
        Ok(self.model.predict(&tokens, &self.text, Self::image_hw(image)?)?.foreground())
    }

    /// Foreground probability from cosine similarity between projected tokens and the two text
    /// columns, averaged over stages.
    pub fn similarity_map(&self, image: &Tensor) -> Result<Tensor> {
        let tokens = self.encode(image)?;
        let (h, w) = Self::image_hw(image)?;
        let mut g = Graph::new();
        let lt = g.input(self.text.transposed());
        let lt = g.l2_normalize(lt)?;
        let l = g.transpose(lt)?;
        let mut logits = Vec::with_capacity(tokens.len());
        for (stage, t) in self.model.stages().iter().zip(&tokens.stages) {
            let (gh, gw, _) = (t.shape()[0], t.shape()[1], t.shape()[2]);
            let x = g.input(t.clone());
            let p = stage.proj.forward(&mut g, self.model.params(), x)?;
            let p = g.l2_normalize(p)?;
            let ct = g.value(p).last_dim();
            let flat = g.reshape(p, &[gh * gw, ct])?;
            let cos = g.matmul(flat, l)?;
            let cos = g.scale(cos, SIMILARITY_SCALE)?;
            logits.push(g.reshape(cos, &[gh, gw, 2])?);
        }
        let mean = g.mean(&logits)?;
        let up = g.resize(mean, h, w)?;
        let probs = g.softmax(up)?;
        let fg = g.channel(probs, ClassKind::Abnormal as usize)?;
        Ok(g.value(fg).clone())
    }

    pub fn infer(&self, image: &Tensor, opts: InferOptions) -> Result<Inference> {
        let rough = if opts.no_umci { self.similarity_map(image)? } else { self.rough_map(image)? };
        if opts.no_mmr {
            let refined = normalize_map(&rough);
            return Ok(Inference { rough, refinement: None, refined });
        }
        let r = refine(&rough, image, &MockSam, &self.config.mmr)?;
        let refined = r.refined.clone();
        Ok(Inference { rough, refinement: Some(r), refined })
    }

    pub fn training_set(&self, samples: &[SyntheticSample]) -> Result<Vec<TrainSample>> {
        samples
            .iter()
            .map(|s| Ok(TrainSample { tokens: self.encode(&s.image)?, truth: s.mask.clone() }))
            .collect()
    }

    pub fn train(&mut self, samples: &[SyntheticSample], observe: impl FnMut(&TraceRow)) -> Result<TrainReport> {
        let data = self.training_set(samples)?;
        train(&mut self.model, &data, &self.text, &self.config.loss, observe)
    }

    /// Per-image metrics of the rough and the refined map.
    pub fn evaluate(&self, samples: &[SyntheticSample], opts: InferOptions) -> Result<Evaluation> {
        if samples.is_empty() {
            return Err(Error::invalid("evaluate", "empty split"));
        }
        let mut eval = Evaluation::default();
        for s in samples {
            let out = self.infer(&s.image, opts)?;
            eval.rough.push(MetricsReport::evaluate(&out.rough, &s.mask)?);
            eval.refined.push(MetricsReport::evaluate(&out.refined, &s.mask)?);
        }
        Ok(eval)
    }
}
