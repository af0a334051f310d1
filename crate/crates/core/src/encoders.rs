//! Deterministic stand-ins for the text encoder, the staged image encoder and the promptable
//! mask decoder. The traits are the seam a real-checkpoint adapter would implement.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mmr::{connected_components, BinaryMask, Point, PromptBox, PromptSet};
use crate::rng::labeled_rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    /// Text / joint embedding dimension.
    pub text_dim: usize,
    /// Patch-token dimension.
    pub token_dim: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub stages: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            text_dim: 64,
            token_dim: 64,
            grid_h: 16,
            grid_w: 16,
            stages: 4,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("encoder.text_dim", self.text_dim),
            ("encoder.token_dim", self.token_dim),
            ("encoder.grid", self.grid_h.min(self.grid_w)),
            ("encoder.stages", self.stages),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Per-stage patch-token grids, each `grid_h x grid_w x token_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct StageTokens {
    pub stages: Vec<Tensor>,
}

impl StageTokens {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.stages.first().map(|t| (t.shape()[0], t.shape()[1]))
    }
}

pub trait TextEncoder {
    fn text_dim(&self) -> usize;
    fn encode_text(&self, sentence: &str) -> Result<Tensor>;
}

pub trait ImageEncoder {
    fn encode_image(&self, image: &Tensor) -> Result<StageTokens>;
}

/// Three granularity levels of masks and confidences per box prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct SamMaskSet {
    pub masks: Vec<[BinaryMask; 3]>,
    pub scores: Vec<[f64; 3]>,
}

pub trait MaskDecoder {
    /// `heatmap` is the rough foreground map at image resolution.
    fn decode(&self, image: &Tensor, heatmap: &Tensor, prompts: &PromptSet) -> Result<SamMaskSet>;
}

/// Seeded mock of the joint text/image encoder.
#[derive(Clone, Debug)]
pub struct MockClip {
    pub config: EncoderConfig,
}

impl MockClip {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

/// Unit-norm embedding whose direction is a pure function of `(sentence, seed)`.
pub fn encode_text_mock(sentence: &str, cfg: &EncoderConfig) -> Result<Tensor> {
    if sentence.trim().is_empty() {
        return Err(Error::invalid("encode_text", "empty sentence"));
    }
    let mut rng = labeled_rng(cfg.seed, &format!("text:{sentence}"));
    let v: Vec<f64> = (0..cfg.text_dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Tensor::new(&[cfg.text_dim], v.into_iter().map(|x| x / norm).collect())
}

/// Area-averages a grayscale image onto `gh x gw` cells; cell edges are `floor(i * H / gh)`.
pub fn pool_to_grid(image: &Tensor, gh: usize, gw: usize) -> Result<Tensor> {
    let (h, w) = match *image.shape() {
        [h, w] => (h, w),
        ref s => return Err(Error::shape("pool_to_grid", format!("expected H x W image, got {s:?}"))),
    };
    if h < gh || w < gw || gh == 0 || gw == 0 {
        return Err(Error::invalid(
            "pool_to_grid",
            format!("image {h}x{w} is smaller than the {gh}x{gw} token grid"),
        ));
    }
    let mut out = vec![0.0; gh * gw];
    for gy in 0..gh {
        let (y0, y1) = (gy * h / gh, (gy + 1) * h / gh);
        for gx in 0..gw {
            let (x0, x1) = (gx * w / gw, (gx + 1) * w / gw);
            let mut s = 0.0;
            for y in y0..y1 {
                s += image.data()[y * w + x0..y * w + x1].iter().sum::<f64>();
            }
            out[gy * gw + gx] = s / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    Tensor::new(&[gh, gw], out)
}

/// Scale applied to the centred cell intensity before projection.
pub const TOKEN_GAIN: f64 = 4.0;

/// Per stage: pool to the token grid, then map each cell intensity through a fixed random
/// direction plus a stage bias. Tokens stay affine in the local intensity, so a defect's
/// contrast survives every stage.
pub fn encode_image_mock(image: &Tensor, cfg: &EncoderConfig) -> Result<StageTokens> {
    let pooled = pool_to_grid(image, cfg.grid_h, cfg.grid_w)?;
    let c = cfg.token_dim;
    let mut stages = Vec::with_capacity(cfg.stages);
    for s in 0..cfg.stages {
        let mut rng = labeled_rng(cfg.seed, &format!("image-stage:{s}"));
        let dir: Vec<f64> = (0..c).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let bias: Vec<f64> = (0..c).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut data = Vec::with_capacity(pooled.len() * c);
        for &v in pooled.data() {
            let centered = (v - 0.5) * TOKEN_GAIN;
            data.extend(dir.iter().zip(&bias).map(|(d, b)| centered * d + b));
        }
        stages.push(Tensor::new(&[cfg.grid_h, cfg.grid_w, c], data)?);
    }
    Ok(StageTokens { stages })
}

impl TextEncoder for MockClip {
    fn text_dim(&self) -> usize {
        self.config.text_dim
    }

    fn encode_text(&self, sentence: &str) -> Result<Tensor> {
        encode_text_mock(sentence, &self.config)
    }
}

impl ImageEncoder for MockClip {
    fn encode_image(&self, image: &Tensor) -> Result<StageTokens> {
        encode_image_mock(image, &self.config)
    }
}

/// Mock promptable decoder: nested threshold masks of the heatmap inside each box.
#[derive(Clone, Copy, Debug, Default)]
pub struct MockSam;

/// Heatmap levels for the three granularities, coarse to fine.
pub const SAM_LEVELS: [f64; 3] = [0.3, 0.5, 0.7];

impl MaskDecoder for MockSam {
    fn decode(&self, image: &Tensor, heatmap: &Tensor, prompts: &PromptSet) -> Result<SamMaskSet> {
        sam_decode_mock(image, heatmap, prompts)
    }
}

/// For each box, level `j` keeps the pixels of the box with heatmap `>= SAM_LEVELS[j]`, restricted
/// to the 8-connected component closest to the box's nearest prompt point. Each level searches
/// inside the previous level's mask, so the three masks are nested. Scores are the mean heatmap
/// value under each mask (0 when empty).
pub fn sam_decode_mock(image: &Tensor, heatmap: &Tensor, prompts: &PromptSet) -> Result<SamMaskSet> {
    let (h, w) = match *heatmap.shape() {
        [h, w] => (h, w),
        ref s => return Err(Error::shape("sam_decode", format!("heatmap must be H x W, got {s:?}"))),
    };
    if image.shape()[..2] != [h, w] {
        return Err(Error::shape("sam_decode", format!("image {:?} vs heatmap {h}x{w}", image.shape())));
    }
    if prompts.boxes.is_empty() {
        return Err(Error::invalid("sam_decode", "at least one box prompt is required"));
    }
    if let Some(b) = prompts.boxes.iter().find(|b| !b.fits(h, w)) {
        return Err(Error::invalid("sam_decode", format!("box {b:?} outside {h}x{w} image")));
    }
    let heat = heatmap.data();
    let mut masks = Vec::with_capacity(prompts.boxes.len());
    let mut scores = Vec::with_capacity(prompts.boxes.len());
    for b in &prompts.boxes {
        let seed = seed_point(b, &prompts.points, heat, w);
        let mut allowed = BinaryMask::new(h, w, (0..h * w).map(|i| b.contains(i / w, i % w)).collect())?;
        let mut levels: Vec<BinaryMask> = Vec::with_capacity(3);
        let mut level_scores = [0.0; 3];
        for (j, &t) in SAM_LEVELS.iter().enumerate() {
            let candidate = BinaryMask::new(
                h,
                w,
                allowed.bits().iter().zip(heat).map(|(&a, &v)| a && v >= t).collect(),
            )?;
            let chosen = nearest_component(&candidate, seed);
            let n = chosen.count();
            level_scores[j] = if n == 0 {
                0.0
            } else {
                chosen.bits().iter().zip(heat).filter(|(b, _)| **b).map(|(_, v)| v).sum::<f64>() / n as f64
            };
            allowed = chosen.clone();
            levels.push(chosen);
        }
        let [a, b2, c]: [BinaryMask; 3] = levels.try_into().expect("three levels");
        masks.push([a, b2, c]);
        scores.push(level_scores);
    }
    Ok(SamMaskSet { masks, scores })
}

/// The prompt point nearest the box (first wins ties); without points, the hottest pixel in the box.
fn seed_point(b: &PromptBox, points: &[Point], heat: &[f64], w: usize) -> Point {
    if let Some(p) = points.iter().min_by_key(|p| b.distance_sq(**p)) {
        return *p;
    }
    let mut best = Point { x: b.x, y: b.y };
    let mut best_v = f64::NEG_INFINITY;
    for y in b.y..b.y + b.h {
        for x in b.x..b.x + b.w {
            if heat[y * w + x] > best_v {
                best_v = heat[y * w + x];
                best = Point { x, y };
            }
        }
    }
    best
}

fn nearest_component(candidate: &BinaryMask, seed: Point) -> BinaryMask {
    let labeling = connected_components(candidate);
    let mut out = BinaryMask::empty(candidate.height(), candidate.width());
    let best = labeling.regions.iter().min_by_key(|r| {
        r.pixels
            .iter()
            .map(|&(y, x)| {
                let (dy, dx) = (y.abs_diff(seed.y), x.abs_diff(seed.x));
                dy * dy + dx * dx
            })
            .min()
            .unwrap_or(usize::MAX)
    });
    if let Some(region) = best {
        for &(y, x) in &region.pixels {
            out.set(y, x, true);
        }
    }
    out
}
