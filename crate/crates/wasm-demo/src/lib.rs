//! Browser bindings for the segmentation pipeline.
//!
//! The page drives three operations: generate a synthetic sample, get a model (a short in-page
//! training run or an uploaded checkpoint), and segment the sample with live threshold and point
//! settings. The binding layer only converts errors; the logic lives in plain functions so it can
//! be tested natively.

use clipsam_core::config::RunConfig;
use clipsam_core::data::{test_split, SyntheticSample};
use clipsam_core::encoders::MockSam;
use clipsam_core::imageio::overlay;
use clipsam_core::metrics::MetricsReport;
use clipsam_core::mmr::{normalize_map, refine, RefineParams};
use clipsam_core::pipeline::Pipeline;
use clipsam_core::{ParamSet, Result, Tensor};
use wasm_bindgen::prelude::*;

/// Learning rate of the in-page training run, sized for a few dozen steps.
pub const QUICK_LR: f64 = 1e-3;

fn js(e: clipsam_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// RGBA bytes of a grayscale map in `[0, 1]`.
pub fn gray_rgba(map: &Tensor) -> Vec<u8> {
    map.data()
        .iter()
        .flat_map(|&v| {
            let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [g, g, g, 255]
        })
        .collect()
}

/// RGBA bytes of an `H x W x 3` image in `[0, 1]`.
pub fn rgb_rgba(rgb: &Tensor) -> Vec<u8> {
    rgb.data()
        .chunks(3)
        .flat_map(|c| {
            let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [q(c[0]), q(c[1]), q(c[2]), 255]
        })
        .collect()
}

#[wasm_bindgen]
pub struct Segmentation {
    rough: Vec<u8>,
    refined: Vec<u8>,
    overlay: Vec<u8>,
    metrics: Vec<f64>,
    boxes: usize,
}

#[wasm_bindgen]
impl Segmentation {
    pub fn rough(&self) -> Vec<u8> {
        self.rough.clone()
    }

    pub fn refined(&self) -> Vec<u8> {
        self.refined.clone()
    }

    pub fn overlay(&self) -> Vec<u8> {
        self.overlay.clone()
    }

    /// Rough then refined `auroc, ap, f1_max, pro`.
    pub fn metrics(&self) -> Vec<f64> {
        self.metrics.clone()
    }

    pub fn boxes(&self) -> usize {
        self.boxes
    }
}

#[wasm_bindgen]
pub struct Demo {
    pipeline: Pipeline,
    sample: SyntheticSample,
}

impl Demo {
    pub fn try_new() -> Result<Demo> {
        let config = RunConfig::desk();
        let sample = test_split(1, config.extent, 0, &config.category)?.remove(0);
        Ok(Demo { pipeline: Pipeline::new(config)?, sample })
    }

    pub fn try_generate(&mut self, seed: u32) -> Result<()> {
        let c = self.pipeline.config();
        self.sample = test_split(1, c.extent, seed as u64, &c.category)?.remove(0);
        Ok(())
    }

    /// Trains a fresh desk-sized model on `samples` generated images; returns the epoch means.
    pub fn try_quick_train(&mut self, samples: usize, epochs: usize) -> Result<Vec<f64>> {
        let mut config = RunConfig::desk();
        config.loss.lr = QUICK_LR;
        config.loss.epochs = epochs;
        config.train_count = samples;
        config.validate()?;
        let data = clipsam_core::data::train_split(samples, config.extent, config.seed, &config.category)?;
        let mut pipeline = Pipeline::new(config)?;
        let report = pipeline.train(&data, |_| {})?;
        self.pipeline = pipeline;
        Ok(report.epoch_means())
    }

    pub fn try_load_checkpoint(&mut self, checkpoint: &[u8], conf: &str) -> Result<()> {
        let config = RunConfig::parse(conf, None)?;
        let params = ParamSet::from_bytes(checkpoint, std::path::Path::new("uploaded checkpoint"))?;
        let pipeline = Pipeline::with_params(config, &params)?;
        let extent = pipeline.config().extent;
        if extent != self.sample.image.shape()[0] {
            self.sample = test_split(1, extent, 0, &pipeline.config().category)?.remove(0);
        }
        self.pipeline = pipeline;
        Ok(())
    }

    pub fn try_segment(&self, threshold: f64, points: usize, no_mmr: bool) -> Result<Segmentation> {
        let image = &self.sample.image;
        let rough = self.pipeline.rough_map(image)?;
        let (refined, boxes) = if no_mmr {
            (normalize_map(&rough), 0)
        } else {
            let params = RefineParams { threshold, points, seed: self.pipeline.config().seed };
            let r = refine(&rough, image, &MockSam, &params)?;
            (r.refined, r.prompts.boxes.len())
        };
        let mut metrics = MetricsReport::evaluate(&rough, &self.sample.mask)?.values().to_vec();
        metrics.extend(MetricsReport::evaluate(&refined, &self.sample.mask)?.values());
        Ok(Segmentation {
            rough: gray_rgba(&rough),
            overlay: rgb_rgba(&overlay(image, &refined)?),
            refined: gray_rgba(&refined),
            metrics,
            boxes,
        })
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> std::result::Result<Demo, JsError> {
        Demo::try_new().map_err(js)
    }

    pub fn extent(&self) -> usize {
        self.sample.image.shape()[0]
    }

    pub fn generate(&mut self, seed: u32) -> std::result::Result<(), JsError> {
        self.try_generate(seed).map_err(js)
    }

    pub fn defect_kind(&self) -> String {
        self.sample.defect_kind.to_string()
    }

    pub fn image(&self) -> Vec<u8> {
        gray_rgba(&self.sample.image)
    }

    pub fn mask(&self) -> Vec<u8> {
        gray_rgba(self.sample.mask.mask())
    }

    pub fn quick_train(&mut self, samples: usize, epochs: usize) -> std::result::Result<Vec<f64>, JsError> {
        self.try_quick_train(samples, epochs).map_err(js)
    }

    pub fn load_checkpoint(&mut self, checkpoint: &[u8], conf: &str) -> std::result::Result<(), JsError> {
        self.try_load_checkpoint(checkpoint, conf).map_err(js)
    }

    pub fn segment(&self, threshold: f64, points: usize, no_mmr: bool) -> std::result::Result<Segmentation, JsError> {
        self.try_segment(threshold, points, no_mmr).map_err(js)
    }
}
