//! Cross-modal interaction between patch tokens and the text feature, one independent module per
//! encoder stage. Each stage runs a strip path (row/column pooled context attending to the text
//! tokens through a GRU-merged two-step attention) and a scale path (pooled windows at two kernel
//! sizes attending to text), fuses both with a residual of the projected tokens, and predicts two
//! logits per grid cell.

use crate::encoders::StageTokens;
use crate::ensemble::TextFeature;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::{Conv, Dense, GruCell};
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct UmciConfig {
    /// Patch-token width `C` coming out of the image encoder.
    pub token_dim: usize,
    /// Text feature width `c_t`.
    pub text_dim: usize,
    /// Hidden width `c_h`.
    pub hidden_dim: usize,
    pub s1: usize,
    pub s2: usize,
    pub stages: usize,
    pub include_strip: bool,
    pub include_scale: bool,
    pub seed: u64,
}

impl Default for UmciConfig {
    fn default() -> Self {
        Self {
            token_dim: 64,
            text_dim: 64,
            hidden_dim: 32,
            s1: 3,
            s2: 9,
            stages: 4,
            include_strip: true,
            include_scale: true,
            seed: 0,
        }
    }
}

impl UmciConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("umci.token_dim", self.token_dim),
            ("umci.text_dim", self.text_dim),
            ("umci.hidden_dim", self.hidden_dim),
            ("umci.s1", self.s1),
            ("umci.s2", self.s2),
            ("umci.stages", self.stages),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.s1 == self.s2 {
            return Err(Error::config("umci.s2", "the two scale kernels must differ"));
        }
        if !self.include_strip && !self.include_scale {
            return Err(Error::config("umci.include_scale", "at least one of strip/scale must be enabled"));
        }
        Ok(())
    }
}

fn grid_of(g: &Graph, x: Var, op: &'static str) -> Result<(usize, usize, usize)> {
    match *g.value(x).shape() {
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(Error::shape(op, format!("expected H x W x C, got {s:?}"))),
    }
}

/// One pooling direction of the strip path.
#[derive(Clone, Debug)]
struct StripBranch {
    conv: Conv,
    t1: Dense,
    t2: Dense,
    gru: GruCell,
}

impl StripBranch {
    fn new(ps: &mut ParamSet, name: &str, kernel: (usize, usize), cfg: &UmciConfig) -> Result<Self> {
        let (ct, ch, seed) = (cfg.text_dim, cfg.hidden_dim, cfg.seed);
        Ok(Self {
            conv: Conv::new(ps, &format!("{name}.conv"), kernel, ct, ch, seed)?,
            t1: Dense::new(ps, &format!("{name}.t1"), ct, ch, seed)?,
            t2: Dense::new(ps, &format!("{name}.t2"), ct, ch, seed)?,
            gru: GruCell::new(ps, &format!("{name}.gru"), ch, seed)?,
        })
    }

    /// `strip` is the pooled map laid out so the convolution runs along the strip; returns
    /// the normalized `n x c_h` interaction features.
    fn forward(&self, g: &mut Graph, ps: &ParamSet, strip: Var, lt: Var, n: usize) -> Result<Var> {
        let v = self.conv.forward(g, ps, strip)?;
        let ch = g.value(v).last_dim();
        let v = g.reshape(v, &[n, ch])?;
        let t1 = self.t1.forward(g, ps, lt)?;
        let t2 = self.t2.forward(g, ps, lt)?;
        let step1 = g.attention(t1, v, v)?;
        let t_new = self.gru.forward(g, ps, step1, t1)?;
        let att = g.attention(v, t_new, t2)?;
        let res = g.add(att, v)?;
        g.l2_normalize(res)
    }
}

#[derive(Clone, Debug)]
pub struct StripPath {
    row: StripBranch,
    col: StripBranch,
    merge: Conv,
}

impl StripPath {
    fn new(ps: &mut ParamSet, name: &str, cfg: &UmciConfig) -> Result<Self> {
        Ok(Self {
            row: StripBranch::new(ps, &format!("{name}.row"), (1, 3), cfg)?,
            col: StripBranch::new(ps, &format!("{name}.col"), (3, 1), cfg)?,
            merge: Conv::new(ps, &format!("{name}.merge"), (3, 3), cfg.hidden_dim, cfg.hidden_dim, cfg.seed)?,
        })
    }

    /// `p_hat` is `H x W x c_t`, `lt` is `2 x c_t`; returns `H x W x c_h`.
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, p_hat: Var, lt: Var) -> Result<Var> {
        let (h, w, ct) = grid_of(g, p_hat, "strip_path")?;
        let rows = g.avg_pool(p_hat, 1, w)?;
        let rows = g.reshape(rows, &[1, h, ct])?;
        let m_row = self.row.forward(g, ps, rows, lt, h)?;
        let cols = g.avg_pool(p_hat, h, 1)?;
        let cols = g.reshape(cols, &[w, 1, ct])?;
        let m_col = self.col.forward(g, ps, cols, lt, w)?;
        let ch = g.value(m_row).last_dim();
        let m_row = g.reshape(m_row, &[h, 1, ch])?;
        let m_row = g.resize(m_row, h, w)?;
        let m_col = g.reshape(m_col, &[1, w, ch])?;
        let m_col = g.resize(m_col, h, w)?;
        let sum = g.add(m_row, m_col)?;
        self.merge.forward(g, ps, sum)
    }
}

#[derive(Clone, Debug)]
struct ScaleBranch {
    kernel: usize,
    conv: Conv,
    tk: Dense,
    tv: Dense,
}

impl ScaleBranch {
    fn new(ps: &mut ParamSet, name: &str, kernel: usize, cfg: &UmciConfig) -> Result<Self> {
        let (ct, ch, seed) = (cfg.text_dim, cfg.hidden_dim, cfg.seed);
        Ok(Self {
            kernel,
            conv: Conv::new(ps, &format!("{name}.conv"), (3, 3), ct, ch, seed)?,
            tk: Dense::new(ps, &format!("{name}.tk"), ct, ch, seed)?,
            tv: Dense::new(ps, &format!("{name}.tv"), ct, ch, seed)?,
        })
    }

    fn forward(&self, g: &mut Graph, ps: &ParamSet, p_hat: Var, lt: Var) -> Result<Var> {
        let (h, w, _) = grid_of(g, p_hat, "scale_path")?;
        if self.kernel > h.max(w) {
            return Err(Error::invalid(
                "scale_path",
                format!("kernel {} exceeds the {h}x{w} grid", self.kernel),
            ));
        }
        // A kernel longer than one axis reduces that axis fully.
        let pooled = g.avg_pool(p_hat, self.kernel.min(h), self.kernel.min(w))?;
        let v = self.conv.forward(g, ps, pooled)?;
        let (hg, wg, ch) = grid_of(g, v, "scale_path")?;
        let flat = g.reshape(v, &[hg * wg, ch])?;
        let tk = self.tk.forward(g, ps, lt)?;
        let tv = self.tv.forward(g, ps, lt)?;
        let att = g.attention(flat, tk, tv)?;
        let res = g.add(att, flat)?;
        let m = g.l2_normalize(res)?;
        let m = g.reshape(m, &[hg, wg, ch])?;
        g.resize(m, h, w)
    }
}

#[derive(Clone, Debug)]
pub struct ScalePath {
    branches: [ScaleBranch; 2],
    merge: Conv,
}

impl ScalePath {
    fn new(ps: &mut ParamSet, name: &str, cfg: &UmciConfig) -> Result<Self> {
        Ok(Self {
            branches: [
                ScaleBranch::new(ps, &format!("{name}.g1"), cfg.s1, cfg)?,
                ScaleBranch::new(ps, &format!("{name}.g2"), cfg.s2, cfg)?,
            ],
            merge: Conv::new(ps, &format!("{name}.merge"), (3, 3), cfg.hidden_dim, cfg.hidden_dim, cfg.seed)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, p_hat: Var, lt: Var) -> Result<Var> {
        let a = self.branches[0].forward(g, ps, p_hat, lt)?;
        let b = self.branches[1].forward(g, ps, p_hat, lt)?;
        let sum = g.add(a, b)?;
        self.merge.forward(g, ps, sum)
    }
}

/// Residual fusion and segmentation head.
#[derive(Clone, Debug)]
pub struct Fusion {
    ori: Conv,
    all: Conv,
    fc1: Dense,
    fc2: Dense,
    hidden_dim: usize,
}

impl Fusion {
    fn new(ps: &mut ParamSet, name: &str, cfg: &UmciConfig) -> Result<Self> {
        let (ct, ch, seed) = (cfg.text_dim, cfg.hidden_dim, cfg.seed);
        Ok(Self {
            ori: Conv::new(ps, &format!("{name}.ori"), (3, 3), ct, ch, seed)?,
            all: Conv::new(ps, &format!("{name}.all"), (3, 3), 3 * ch, ct, seed)?,
            fc1: Dense::new(ps, &format!("{name}.fc1"), ct, ch, seed)?,
            fc2: Dense::new(ps, &format!("{name}.fc2"), ch, 2, seed)?,
            hidden_dim: ch,
        })
    }

    /// Disabled paths are passed as `None` and replaced by zeros.
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, p_hat: Var, strip: Option<Var>, scale: Option<Var>) -> Result<Var> {
        let (h, w, _) = grid_of(g, p_hat, "fuse_dual_path")?;
        let v_ori = self.ori.forward(g, ps, p_hat)?;
        let mut zero = || g.input(Tensor::zeros(&[h, w, self.hidden_dim]));
        let strip = strip.unwrap_or_else(&mut zero);
        let scale = scale.unwrap_or_else(&mut zero);
        let cat = g.concat(&[v_ori, strip, scale])?;
        let m_all = self.all.forward(g, ps, cat)?;
        let res = g.add(m_all, p_hat)?;
        let x = g.relu(res)?;
        let x = self.fc1.forward(g, ps, x)?;
        let x = g.relu(x)?;
        self.fc2.forward(g, ps, x)
    }
}

#[derive(Clone, Debug)]
pub struct StageModule {
    pub proj: Dense,
    pub strip: Option<StripPath>,
    pub scale: Option<ScalePath>,
    pub fusion: Fusion,
}

impl StageModule {
    fn new(ps: &mut ParamSet, stage: usize, cfg: &UmciConfig) -> Result<Self> {
        let name = format!("stage{stage}");
        Ok(Self {
            proj: Dense::new(ps, &format!("{name}.proj"), cfg.token_dim, cfg.text_dim, cfg.seed)?,
            strip: cfg.include_strip.then(|| StripPath::new(ps, &format!("{name}.strip"), cfg)).transpose()?,
            scale: cfg.include_scale.then(|| ScalePath::new(ps, &format!("{name}.scale"), cfg)).transpose()?,
            fusion: Fusion::new(ps, &format!("{name}.fuse"), cfg)?,
        })
    }

    /// Patch tokens `H x W x C` to grid logits `H x W x 2`.
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, tokens: Var, lt: Var) -> Result<Var> {
        let p_hat = self.proj.forward(g, ps, tokens)?;
        let strip = self.strip.as_ref().map(|p| p.forward(g, ps, p_hat, lt)).transpose()?;
        let scale = self.scale.as_ref().map(|p| p.forward(g, ps, p_hat, lt)).transpose()?;
        self.fusion.forward(g, ps, p_hat, strip, scale)
    }
}

/// Inference result of all stages.
#[derive(Clone, Debug)]
pub struct UmciOutput {
    /// Per-stage grid logits.
    pub stage_logits: Vec<Tensor>,
    /// Mean of the stage logits on the grid.
    pub aggregate: Tensor,
    /// Softmaxed aggregate at image resolution, `H_img x W_img x 2`.
    pub probabilities: Tensor,
}

impl UmciOutput {
    /// Probability of the anomalous class per pixel.
    pub fn foreground(&self) -> Tensor {
        let s = self.probabilities.shape();
        let data = self.probabilities.data().iter().skip(1).step_by(2).copied().collect();
        Tensor::new(&s[..2], data).expect("channel of a valid tensor")
    }
}

#[derive(Clone, Debug)]
pub struct Umci {
    config: UmciConfig,
    params: ParamSet,
    stages: Vec<StageModule>,
}

impl Umci {
    pub fn new(config: UmciConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let stages = (0..config.stages)
            .map(|i| StageModule::new(&mut params, i, &config))
            .collect::<Result<_>>()?;
        Ok(Self { config, params, stages })
    }

    pub fn config(&self) -> &UmciConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn stages(&self) -> &[StageModule] {
        &self.stages
    }

    fn check_inputs(&self, tokens: &StageTokens, text: &TextFeature) -> Result<()> {
        if tokens.len() != self.stages.len() {
            return Err(Error::shape(
                "umci_forward",
                format!("{} token stages for {} modules", tokens.len(), self.stages.len()),
            ));
        }
        if text.dim() != self.config.text_dim {
            return Err(Error::shape(
                "umci_forward",
                format!("text feature of dim {} for c_t {}", text.dim(), self.config.text_dim),
            ));
        }
        for t in &tokens.stages {
            if t.rank() != 3 || t.last_dim() != self.config.token_dim {
                return Err(Error::shape(
                    "umci_forward",
                    format!("tokens {:?} for token dim {}", t.shape(), self.config.token_dim),
                ));
            }
        }
        Ok(())
    }

    /// Records every stage on `g` using parameters `ps` and returns the grid logits per stage.
    pub fn forward_graph(&self, g: &mut Graph, ps: &ParamSet, tokens: &StageTokens, text: &TextFeature) -> Result<Vec<Var>> {
        self.check_inputs(tokens, text)?;
        let lt = g.input(text.transposed());
        self.stages
            .iter()
            .zip(&tokens.stages)
            .map(|(stage, t)| {
                let x = g.input(t.clone());
                stage.forward(g, ps, x, lt)
            })
            .collect()
    }

    pub fn predict(&self, tokens: &StageTokens, text: &TextFeature, image_hw: (usize, usize)) -> Result<UmciOutput> {
        let mut g = Graph::new();
        let logits = self.forward_graph(&mut g, &self.params, tokens, text)?;
        let mean = g.mean(&logits)?;
        let up = g.resize(mean, image_hw.0, image_hw.1)?;
        let probs = g.softmax(up)?;
        Ok(UmciOutput {
            stage_logits: logits.iter().map(|&v| g.value(v).clone()).collect(),
            aggregate: g.value(mean).clone(),
            probabilities: g.value(probs).clone(),
        })
    }
}

/// Foreground probability of stage logits at image resolution, recorded on the graph.
pub fn upsampled_foreground(g: &mut Graph, logits: Var, image_hw: (usize, usize)) -> Result<Var> {
    let up = g.resize(logits, image_hw.0, image_hw.1)?;
    let p = g.softmax(up)?;
    g.channel(p, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::labeled_rng;
    use rand::Rng;
    use std::collections::HashSet;

    fn toy() -> UmciConfig {
        UmciConfig {
            token_dim: 5,
            text_dim: 4,
            hidden_dim: 3,
            s1: 3,
            s2: 5,
            stages: 2,
            include_strip: true,
            include_scale: true,
            seed: 7,
        }
    }

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = labeled_rng(seed, "umci-test");
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn text(dim: usize) -> TextFeature {
        TextFeature::new(random(&[dim, 2], 99)).unwrap()
    }

    fn tokens(cfg: &UmciConfig, h: usize, w: usize) -> StageTokens {
        StageTokens { stages: (0..cfg.stages).map(|s| random(&[h, w, cfg.token_dim], s as u64)).collect() }
    }

    #[test]
    fn config_validation() {
        assert!(UmciConfig::default().validate().is_ok());
        let mut c = toy();
        c.s2 = c.s1;
        assert!(c.validate().is_err());
        let mut c = toy();
        c.include_scale = false;
        c.include_strip = false;
        assert!(c.validate().is_err());
        let mut c = toy();
        c.hidden_dim = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn parameter_names_are_unique_and_per_stage() {
        let m = Umci::new(UmciConfig::default()).unwrap();
        let names: Vec<&str> = m.params().names().collect();
        let unique: HashSet<&str> = names.iter().copied().collect();
        assert_eq!(unique.len(), names.len());
        for s in 0..4 {
            assert!(names.iter().any(|n| n.starts_with(&format!("stage{s}.strip.row.gru"))));
        }
    }

    #[test]
    fn output_shapes_and_simplex() {
        let cfg = toy();
        let m = Umci::new(cfg.clone()).unwrap();
        let out = m.predict(&tokens(&cfg, 8, 6), &text(4), (16, 12)).unwrap();
        assert_eq!(out.stage_logits[0].shape(), &[8, 6, 2]);
        assert_eq!(out.probabilities.shape(), &[16, 12, 2]);
        for px in out.probabilities.data().chunks(2) {
            assert!((px[0] + px[1] - 1.0).abs() <= 1e-12);
        }
        assert_eq!(out.foreground().shape(), &[16, 12]);
    }

    #[test]
    fn ablations_keep_shapes() {
        for (strip, scale) in [(true, false), (false, true)] {
            let cfg = UmciConfig { include_strip: strip, include_scale: scale, ..toy() };
            let m = Umci::new(cfg.clone()).unwrap();
            let out = m.predict(&tokens(&cfg, 8, 8), &text(4), (8, 8)).unwrap();
            assert_eq!(out.probabilities.shape(), &[8, 8, 2]);
            assert_eq!(m.params().names().any(|n| n.contains(".strip.")), strip);
            assert_eq!(m.params().names().any(|n| n.contains(".scale.")), scale);
        }
    }

    #[test]
    fn single_pixel_grid() {
        let cfg = UmciConfig { s1: 1, s2: 2, ..toy() };
        let m = Umci::new(cfg.clone()).unwrap();
        let mut g = Graph::new();
        let p = g.input(random(&[1, 1, 4], 3));
        let lt = g.input(text(4).transposed());
        let strip = m.stages()[0].strip.as_ref().unwrap().forward(&mut g, m.params(), p, lt).unwrap();
        assert_eq!(g.value(strip).shape(), &[1, 1, 3]);
        // s2 = 2 exceeds the 1x1 grid
        assert!(m.stages()[0].scale.as_ref().unwrap().forward(&mut g, m.params(), p, lt).is_err());
    }

    /// Keeps only the centre tap so zero padding cannot break spatial symmetry.
    fn centre_only(ps: &mut ParamSet, conv: &Conv) {
        let w = ps.value(conv.weight).clone();
        let (kh, kw) = (w.shape()[0], w.shape()[1]);
        let per_tap = w.shape()[2] * w.shape()[3];
        let data = w
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| if i / per_tap == (kh / 2) * kw + kw / 2 { v } else { 0.0 })
            .collect();
        ps.set_value(conv.weight, Tensor::new(w.shape(), data).unwrap()).unwrap();
    }

    fn rows_equal(t: &Tensor) -> bool {
        let c = t.last_dim();
        t.data().chunks(c).all(|r| r.iter().zip(&t.data()[..c]).all(|(a, b)| (a - b).abs() < 1e-12))
    }

    #[test]
    fn constant_field_gives_constant_strip_features() {
        let mut m = Umci::new(toy()).unwrap();
        let strip = m.stages()[0].strip.clone().unwrap();
        centre_only(m.params_mut(), &strip.row.conv);
        centre_only(m.params_mut(), &strip.col.conv);
        let mut g = Graph::new();
        let p = g.input(Tensor::full(&[6, 5, 4], -0.2));
        let lt = g.input(text(4).transposed());
        let rows = g.avg_pool(p, 1, 5).unwrap();
        let rows = g.reshape(rows, &[1, 6, 4]).unwrap();
        let m_row = strip.row.forward(&mut g, m.params(), rows, lt, 6).unwrap();
        assert!(rows_equal(g.value(m_row)));
        let cols = g.avg_pool(p, 6, 1).unwrap();
        let cols = g.reshape(cols, &[5, 1, 4]).unwrap();
        let m_col = strip.col.forward(&mut g, m.params(), cols, lt, 5).unwrap();
        assert!(rows_equal(g.value(m_col)));
    }

    #[test]
    fn constant_field_gives_constant_scale_output() {
        let mut m = Umci::new(toy()).unwrap();
        let scale = m.stages()[0].scale.clone().unwrap();
        for conv in [&scale.branches[0].conv, &scale.branches[1].conv, &scale.merge] {
            centre_only(m.params_mut(), conv);
        }
        let mut g = Graph::new();
        let p = g.input(Tensor::full(&[8, 8, 4], 0.3));
        let lt = g.input(text(4).transposed());
        let out = scale.forward(&mut g, m.params(), p, lt).unwrap();
        assert!(rows_equal(&g.value(out).clone().reshape(&[64, 3]).unwrap()));
    }

    #[test]
    fn full_scale_kernel_reduces_to_global_token() {
        let cfg = UmciConfig { s1: 8, s2: 3, ..toy() };
        let m = Umci::new(cfg).unwrap();
        let mut g = Graph::new();
        let p = g.input(random(&[8, 8, 4], 5));
        let lt = g.input(text(4).transposed());
        let out = m.stages()[0].scale.as_ref().unwrap().branches[0].forward(&mut g, m.params(), p, lt).unwrap();
        assert!(rows_equal(&g.value(out).clone().reshape(&[64, 3]).unwrap()));
        // a kernel longer than one axis pools that axis fully
        let q = g.input(random(&[3, 8, 4], 6));
        let narrow = m.stages()[0].scale.as_ref().unwrap().branches[0].forward(&mut g, m.params(), q, lt).unwrap();
        assert_eq!(g.value(narrow).shape(), &[3, 8, 3]);
    }

    #[test]
    fn identity_projection_passes_tokens_through() {
        let cfg = UmciConfig { token_dim: 4, ..toy() };
        let mut m = Umci::new(cfg).unwrap();
        let proj = m.stages()[0].proj.clone();
        let eye = Tensor::from_fn(&[4, 4], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 }).unwrap();
        m.params_mut().set_value(proj.weight, eye).unwrap();
        m.params_mut().set_value(proj.bias, Tensor::zeros(&[4])).unwrap();
        let x = random(&[5, 5, 4], 12);
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let y = proj.forward(&mut g, m.params(), xv).unwrap();
        assert_eq!(g.value(y), &x);
    }

    #[test]
    fn dead_relu_leaves_head_bias() {
        let cfg = toy();
        let mut m = Umci::new(cfg.clone()).unwrap();
        let fusion = m.stages()[0].fusion.clone();
        // M_all + P_hat strongly negative: zero the `all` conv weight and push its bias down
        m.params_mut().set_value(fusion.all.weight, Tensor::zeros(&[3, 3, 9, 4])).unwrap();
        m.params_mut().set_value(fusion.all.bias, Tensor::full(&[4], -100.0)).unwrap();
        let mut g = Graph::new();
        let p = g.input(random(&[4, 4, 4], 1));
        let out = fusion.forward(&mut g, m.params(), p, None, None).unwrap();
        let b1 = m.params().value(fusion.fc1.bias).data().to_vec();
        let h: Vec<f64> = b1.iter().map(|v| v.max(0.0)).collect();
        let w2 = m.params().value(fusion.fc2.weight);
        let b2 = m.params().value(fusion.fc2.bias).data();
        let expect: Vec<f64> = (0..2).map(|o| b2[o] + (0..3).map(|k| h[k] * w2.at(&[k, o])).sum::<f64>()).collect();
        for px in g.value(out).data().chunks(2) {
            assert!((px[0] - expect[0]).abs() < 1e-12 && (px[1] - expect[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_of_identical_stages_equals_one_stage() {
        let cfg = UmciConfig { stages: 2, ..toy() };
        let m = Umci::new(cfg.clone()).unwrap();
        // copy stage0 values into stage1
        let mut m2 = m.clone();
        let pairs: Vec<(String, Tensor)> = m
            .params()
            .iter()
            .filter(|(_, p)| p.name.starts_with("stage0."))
            .map(|(_, p)| (p.name.replacen("stage0.", "stage1.", 1), p.value.clone()))
            .collect();
        for (name, v) in pairs {
            let id = m2.params().id(&name).unwrap();
            m2.params_mut().set_value(id, v).unwrap();
        }
        let t = random(&[8, 8, 5], 4);
        let toks = StageTokens { stages: vec![t.clone(), t] };
        let out = m2.predict(&toks, &text(4), (8, 8)).unwrap();
        assert!(out.aggregate.max_abs_diff(&out.stage_logits[0]) < 1e-12);
    }

    #[test]
    fn stage_count_mismatch() {
        let cfg = toy();
        let m = Umci::new(cfg.clone()).unwrap();
        let toks = StageTokens { stages: vec![random(&[8, 8, 5], 0)] };
        assert!(m.predict(&toks, &text(4), (8, 8)).is_err());
        assert!(m.predict(&tokens(&cfg, 8, 8), &text(3), (8, 8)).is_err());
    }

    #[test]
    fn deterministic_construction() {
        let a = Umci::new(toy()).unwrap();
        let b = Umci::new(toy()).unwrap();
        assert_eq!(a.params().flat_values(), b.params().flat_values());
        let c = Umci::new(UmciConfig { seed: 8, ..toy() }).unwrap();
        assert_ne!(a.params().flat_values(), c.params().flat_values());
    }
}
