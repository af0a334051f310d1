//! End-to-end acceptance criteria.
//!
//! Everything runs inside one test, in order, so the timed criteria are not measured while other
//! tests compete for the CPU. Each criterion prints one PASS/FAIL line to stderr; the test fails
//! if any criterion does.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use clipsam_core::encoders::{sam_decode_mock, EncoderConfig, MockClip, StageTokens};
use clipsam_core::ensemble::{build_sentences, build_text_feature, ClassKind, PromptBank, TextFeature};
use clipsam_core::gradcheck::grad_check;
use clipsam_core::loss::{dice_loss, focal_loss, total_loss, GroundTruth, StageLoss};
use clipsam_core::metrics::{self, ScoredPixels, PRO_FPR_LIMIT};
use clipsam_core::mmr::{build_prompts, connected_components, normalize_map, refine, BinaryMask, RefineParams};
use clipsam_core::rng::labeled_rng;
use clipsam_core::train::{loss_graph, train, LossConfig, TrainSample};
use clipsam_core::umci::{Umci, UmciConfig};
use clipsam_core::Tensor;
use rand::Rng;

const GRAD_TOL: f64 = 1e-4;
const GRAD_SECONDS: f64 = 60.0;
const METRIC_TOL: f64 = 1e-12;
const PRO_TOL: f64 = 1e-6;
const METRIC_INSTANCES: u64 = 1000;
const METRIC_SECONDS: f64 = 120.0;
const CCL_MASKS: u64 = 1000;
const DESK_AUROC: f64 = 0.90;
const DESK_SECONDS: f64 = 300.0;
const F1_SLACK: f64 = 0.02;
const NO_UMCI_GAP: f64 = 0.1;
const LOSS_TOL: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- 1: gradients

fn toy_config() -> UmciConfig {
    UmciConfig {
        token_dim: 4,
        text_dim: 3,
        hidden_dim: 3,
        s1: 3,
        s2: 5,
        stages: 2,
        include_strip: true,
        include_scale: true,
        seed: 11,
    }
}

fn random(shape: &[usize], label: &str) -> Tensor {
    let mut rng = labeled_rng(5, label);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let text = TextFeature::new(random(&[3, 2], "text")).unwrap();
    let tokens = StageTokens { stages: vec![random(&[8, 8, 4], "s0"), random(&[8, 8, 4], "s1")] };
    let truth = GroundTruth::new(
        Tensor::from_fn(&[12, 12], |i| if (3..7).contains(&(i / 12)) && (2..8).contains(&(i % 12)) { 1.0 } else { 0.0 })
            .unwrap(),
    )
    .unwrap();
    let cfg = LossConfig { stage_weights: vec![0.4, 0.6], lr: 1e-2, batch: 1, epochs: 200, ..LossConfig::default() };
    // Fit first: at a small loss every gradient clears the finite-difference noise floor.
    let mut model = Umci::new(toy_config()).unwrap();
    let sample = TrainSample { tokens: tokens.clone(), truth: truth.clone() };
    train(&mut model, &[sample], &text, &cfg, |_| {}).unwrap();
    let report = grad_check(
        model.params(),
        |g, ps| Ok(loss_graph(&model, g, ps, &tokens, &text, &truth, &cfg)?.total),
        1,
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        report.max_rel_error <= GRAD_TOL && secs < GRAD_SECONDS,
        format!(
            "max rel err {:.2e} (<= {GRAD_TOL:.0e}) over {} probes, {secs:.1}s (< {GRAD_SECONDS}s)",
            report.max_rel_error, report.probes
        ),
    )
}

// ---------------------------------------------------------------- 2: losses

fn mask(h: usize, w: usize, mut bits: impl FnMut(usize) -> bool) -> GroundTruth {
    GroundTruth::new(Tensor::from_fn(&[h, w], |i| if bits(i) { 1.0 } else { 0.0 }).unwrap()).unwrap()
}

fn loss_unit_values() -> Outcome {
    let half = Tensor::full(&[1, 1], 0.5);
    let (f_pos, _) = focal_loss(&half, &mask(1, 1, |_| true), 2.0).unwrap();
    let (f_neg, _) = focal_loss(&half, &mask(1, 1, |_| false), 2.0).unwrap();
    let quarter_ln2 = 0.25 * std::f64::consts::LN_2;
    let focal_ok = (f_pos - quarter_ln2).abs() <= LOSS_TOL && (f_neg - quarter_ln2).abs() <= LOSS_TOL;

    let mut worst_ce: f64 = 0.0;
    for case in 0..50 {
        let mut rng = labeled_rng(case, "ce");
        let p = Tensor::from_fn(&[6, 7], |_| rng.random_range(0.01..0.99)).unwrap();
        let y = mask(6, 7, |_| rng.random_bool(0.4));
        let (focal, _) = focal_loss(&p, &y, 0.0).unwrap();
        let ce = p
            .data()
            .iter()
            .zip(y.mask().data())
            .map(|(&pv, &yv)| -(yv * pv.ln() + (1.0 - yv) * (1.0 - pv).ln()))
            .sum::<f64>()
            / p.len() as f64;
        worst_ce = worst_ce.max((focal - ce).abs());
    }

    let y = mask(8, 8, |i| i % 3 == 0);
    let (perfect, _) = dice_loss(y.mask(), &y).unwrap();
    let opposite = Tensor::from_fn(&[8, 8], |i| if i % 3 == 0 { 0.0 } else { 1.0 }).unwrap();
    let (disjoint, _) = dice_loss(&opposite, &y).unwrap();

    let weights = [0.1, 0.1, 0.1, 0.7];
    let default_weights = LossConfig::default().stage_weights == weights;
    let mut weights_exact = true;
    for k in 0..4 {
        let stages: Vec<StageLoss> =
            (0..4).map(|j| StageLoss { focal: if j == k { 0.25 } else { 0.0 }, dice: if j == k { 0.75 } else { 0.0 } }).collect();
        weights_exact &= total_loss(&stages, &weights).unwrap() == weights[k];
    }
    let mixed = [StageLoss { focal: 0.3, dice: 0.2 }, StageLoss { focal: 0.1, dice: 0.9 }, StageLoss { focal: 0.4, dice: 0.4 }, StageLoss { focal: 0.05, dice: 0.6 }];
    let expected = 0.1 * (0.3 + 0.2) + 0.1 * (0.1 + 0.9) + 0.1 * (0.4 + 0.4) + 0.7 * (0.05 + 0.6);
    weights_exact &= (total_loss(&mixed, &weights).unwrap() - expected).abs() <= LOSS_TOL;

    outcome(
        focal_ok && worst_ce <= LOSS_TOL && perfect <= 1e-6 && disjoint >= 1.0 - 1e-6 && default_weights && weights_exact,
        format!(
            "focal(0.5) err {:.1e}, |focal0 - ce| {worst_ce:.1e}, dice perfect {perfect:.1e}, dice disjoint {disjoint:.9}, \
             weights default {default_weights} exact {weights_exact}",
            (f_pos - quarter_ln2).abs().max((f_neg - quarter_ln2).abs())
        ),
    )
}

// ---------------------------------------------------------------- 3: metric oracles

fn pair_auroc(s: &[f64], y: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] && !y[j] {
                den += 1.0;
                if s[i] > s[j] {
                    num += 1.0;
                } else if s[i] == s[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

fn rank_ap(s: &[f64], y: &[bool]) -> f64 {
    let before = |i: usize, j: usize| s[i] > s[j] || (s[i] == s[j] && i <= j);
    let (mut total, mut pos) = (0.0, 0.0);
    for j in (0..s.len()).filter(|&j| y[j]) {
        let rank = (0..s.len()).filter(|&i| before(i, j)).count() as f64;
        let tp = (0..s.len()).filter(|&i| y[i] && before(i, j)).count() as f64;
        total += tp / rank;
        pos += 1.0;
    }
    total / pos
}

fn sweep_f1(s: &[f64], y: &[bool]) -> f64 {
    let p = y.iter().filter(|&&v| v).count() as f64;
    let mut best: f64 = 0.0;
    for &t in s {
        let tp = (0..s.len()).filter(|&i| y[i] && s[i] >= t).count() as f64;
        let fp = (0..s.len()).filter(|&i| !y[i] && s[i] >= t).count() as f64;
        if tp > 0.0 {
            let (prec, rec) = (tp / (tp + fp), tp / p);
            best = best.max(2.0 * prec * rec / (prec + rec));
        }
    }
    best
}

/// Recursive 8-neighbour flood fill; 0 is background, regions count from 1.
fn flood_fill(bits: &[bool], h: usize, w: usize) -> Vec<usize> {
    fn fill(bits: &[bool], labels: &mut [usize], h: isize, w: isize, r: isize, c: isize, label: usize) {
        if r < 0 || c < 0 || r >= h || c >= w {
            return;
        }
        let i = (r * w + c) as usize;
        if !bits[i] || labels[i] != 0 {
            return;
        }
        labels[i] = label;
        for dr in -1..=1 {
            for dc in -1..=1 {
                fill(bits, labels, h, w, r + dr, c + dc, label);
            }
        }
    }
    let mut labels = vec![0; h * w];
    let mut next = 0;
    for i in 0..h * w {
        if bits[i] && labels[i] == 0 {
            next += 1;
            fill(bits, &mut labels, h as isize, w as isize, (i / w) as isize, (i % w) as isize, next);
        }
    }
    labels
}

fn dense_pro(s: &[f64], y: &[bool], h: usize, w: usize) -> f64 {
    let labels = flood_fill(y, h, w);
    let count = labels.iter().copied().max().unwrap_or(0);
    let regions: Vec<Vec<usize>> = (1..=count).map(|l| (0..s.len()).filter(|&i| labels[i] == l).collect()).collect();
    let neg = y.iter().filter(|&&v| !v).count() as f64;
    let mut levels = s.to_vec();
    levels.sort_by(|a, b| b.partial_cmp(a).unwrap());
    levels.dedup();
    let mut curve = vec![(0.0, 0.0)];
    for t in levels {
        let fp = (0..s.len()).filter(|&i| !y[i] && s[i] >= t).count() as f64;
        let overlap = regions
            .iter()
            .map(|r| r.iter().filter(|&&i| s[i] >= t).count() as f64 / r.len() as f64)
            .sum::<f64>()
            / regions.len() as f64;
        curve.push((fp / neg, overlap));
    }
    let mut area = 0.0;
    for k in 1..curve.len() {
        let ((x0, y0), (x1, y1)) = (curve[k - 1], curve[k]);
        let (lo, hi) = (x0.min(PRO_FPR_LIMIT), x1.min(PRO_FPR_LIMIT));
        if hi > lo {
            let at = |x: f64| y0 + (y1 - y0) * (x - x0) / (x1 - x0);
            area += (hi - lo) * (at(lo) + at(hi)) / 2.0;
        }
    }
    area / PRO_FPR_LIMIT
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut worst = [0.0f64; 4];
    for case in 0..METRIC_INSTANCES {
        let mut rng = labeled_rng(case, "acceptance-metrics");
        let (h, w) = (rng.random_range(4..=17), rng.random_range(4..=17));
        let n = h * w;
        let levels = if case % 3 == 0 { 5 } else { 1 << 20 };
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
        labels[0] = true;
        labels[n - 1] = false;
        let scores: Vec<f64> = (0..n)
            .map(|i| (rng.random_range(0..levels) as f64 + if labels[i] { 0.3 * levels as f64 } else { 0.0 }) / levels as f64)
            .collect();
        let map = Tensor::new(&[h, w], scores.clone()).unwrap();
        let gt = mask(h, w, |i| labels[i]);
        let sp = ScoredPixels::from_map(&map, &gt).unwrap();
        let diffs = [
            metrics::auroc(&sp).unwrap() - pair_auroc(&scores, &labels),
            metrics::average_precision(&sp).unwrap() - rank_ap(&scores, &labels),
            metrics::f1_max(&sp).unwrap() - sweep_f1(&scores, &labels),
            metrics::pro(&map, &gt).unwrap() - dense_pro(&scores, &labels, h, w),
        ];
        for (w, d) in worst.iter_mut().zip(diffs) {
            *w = w.max(d.abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst[..3].iter().all(|&d| d <= METRIC_TOL) && worst[3] <= PRO_TOL && secs < METRIC_SECONDS,
        format!(
            "{METRIC_INSTANCES} instances: max |diff| auroc {:.1e} ap {:.1e} f1 {:.1e} pro {:.1e}, {secs:.1}s",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

// ---------------------------------------------------------------- 4: components

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    a.iter()
        .zip(b)
        .all(|(&x, &y)| (x == 0) == (y == 0) && *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

fn components_match_flood_fill() -> Outcome {
    let mut mismatches = 0;
    for case in 0..CCL_MASKS {
        let mut rng = labeled_rng(case, "acceptance-ccl");
        let density = rng.random_range(0.05..0.75);
        let bits: Vec<bool> = (0..32 * 32).map(|_| rng.random_bool(density)).collect();
        let labeling = connected_components(&BinaryMask::new(32, 32, bits.clone()).unwrap());
        if !same_partition(&labeling.labels, &flood_fill(&bits, 32, 32)) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches over {CCL_MASKS} random 32x32 masks"))
}

// ---------------------------------------------------------------- 5-8: CLI runs

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_clipsam")
}

fn default_conf() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.conf");
    std::fs::read_to_string(path).unwrap()
}

fn with_output_dir(conf: &str, dir: &str) -> String {
    conf.lines()
        .map(|l| if l.starts_with("output_dir") { format!("output_dir = {dir}") } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n")
}

fn run(cwd: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(binary()).args(args).current_dir(cwd).env_remove("CLIPSAM_SEED").output().unwrap();
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("clipsam {args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

/// `(auroc, ap, f1_max, pro)` of the row labelled `label`.
fn csv_row(path: &Path, label: &str) -> [f64; 4] {
    let text = std::fs::read_to_string(path).unwrap();
    let line = text.lines().find(|l| l.split(',').next() == Some(label)).unwrap_or_else(|| panic!("no {label} row in {path:?}"));
    let v: Vec<f64> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
    [v[0], v[1], v[2], v[3]]
}

struct DeskRun {
    rough: [f64; 4],
    refined: [f64; 4],
    secs: f64,
}

fn desk_run(work: &Path) -> Result<DeskRun, String> {
    std::fs::write(work.join("desk.conf"), with_output_dir(&default_conf(), "desk")).unwrap();
    let start = Instant::now();
    run(work, &["train", "--config", "desk.conf"])?;
    run(work, &["eval", "--ckpt", "desk/model.ckpt", "--seed", "0", "--count", "50"])?;
    let secs = start.elapsed().as_secs_f64();
    Ok(DeskRun {
        rough: csv_row(&work.join("desk/metrics_rough.csv"), "mean"),
        refined: csv_row(&work.join("desk/metrics_refined.csv"), "mean"),
        secs,
    })
}

fn desk_auroc(run: &Result<DeskRun, String>) -> Outcome {
    match run {
        Ok(r) => outcome(
            r.refined[0] >= DESK_AUROC && r.secs < DESK_SECONDS,
            format!("refined auroc {:.4} (>= {DESK_AUROC}), train+eval {:.1}s (< {DESK_SECONDS}s)", r.refined[0], r.secs),
        ),
        Err(e) => outcome(false, e.clone()),
    }
}

fn mmr_delta(run: &Result<DeskRun, String>) -> Outcome {
    match run {
        Ok(r) => outcome(
            r.refined[2] >= r.rough[2] - F1_SLACK && r.refined[3] >= r.rough[3],
            format!(
                "f1_max refined {:.6} vs rough {:.6} (slack {F1_SLACK}); pro refined {:.6} vs rough {:.6}",
                r.refined[2], r.rough[2], r.refined[3], r.rough[3]
            ),
        ),
        Err(e) => outcome(false, e.clone()),
    }
}

fn ablation_ordering(work: &Path) -> Outcome {
    std::fs::write(work.join("ablate.conf"), with_output_dir(&default_conf(), "ablate")).unwrap();
    if let Err(e) = run(work, &["ablate", "--config", "ablate.conf"]) {
        return outcome(false, e);
    }
    let csv = work.join("ablate/ablation.csv");
    let auroc = |v: &str| csv_row(&csv, v)[0];
    let (full, strip, scale, no_umci, no_mmr) =
        (auroc("full"), auroc("strip_only"), auroc("scale_only"), auroc("no_umci"), auroc("no_mmr"));
    let weakest_trained = full.min(strip).min(scale).min(no_mmr);
    outcome(
        strip < full && scale < full && no_umci <= weakest_trained - NO_UMCI_GAP,
        format!(
            "auroc full {full:.4}, strip_only {strip:.4}, scale_only {scale:.4}, no_mmr {no_mmr:.4}, no_umci {no_umci:.4} \
             (gap {:.4} >= {NO_UMCI_GAP})",
            weakest_trained - no_umci
        ),
    )
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn ablate_determinism(work: &Path) -> Outcome {
    let conf = with_output_dir(&default_conf(), "out")
        .replace("data.train_count = 200", "data.train_count = 16")
        .replace("data.test_count = 50", "data.test_count = 4")
        .replace("train.epochs = 6", "train.epochs = 1");
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let dir = work.join(name);
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("small.conf"), &conf).unwrap();
        if let Err(e) = run(&dir, &["ablate", "--config", "small.conf"]) {
            return outcome(false, e);
        }
        trees.push(tree(&dir.join("out")));
    }
    let differing: Vec<_> = trees[0]
        .keys()
        .chain(trees[1].keys())
        .filter(|k| trees[0].get(*k) != trees[1].get(*k))
        .map(|k| k.display().to_string())
        .collect();
    outcome(
        differing.is_empty() && !trees[0].is_empty(),
        format!("{} files compared, differing: {differing:?}", trees[0].len()),
    )
}

// ---------------------------------------------------------------- 9: prompts

fn prompt_ensemble() -> Outcome {
    let bank = PromptBank::default_for("bottle");
    let clip = MockClip::new(EncoderConfig::default()).unwrap();
    let (m, n_normal, n_abnormal) = (bank.templates.len(), bank.normal_states.len(), bank.abnormal_states.len());
    let counts_ok = build_sentences(&bank, ClassKind::Normal).unwrap().len() == m * n_normal
        && build_sentences(&bank, ClassKind::Abnormal).unwrap().len() == m * n_abnormal;

    let base = build_text_feature(&bank, &clip).unwrap();
    let mut permuted = bank.clone();
    permuted.templates.reverse();
    permuted.normal_states.rotate_left(2);
    permuted.abnormal_states.swap(0, 3);
    let permutation_ok = build_text_feature(&permuted, &clip).unwrap() == base;

    let mut doubled = bank.clone();
    doubled.templates = bank.templates.iter().chain(&bank.templates).cloned().collect();
    doubled.abnormal_states = bank.abnormal_states.iter().chain(&bank.abnormal_states).cloned().collect();
    let dup = build_text_feature(&doubled, &clip).unwrap();
    let dup_err = dup.matrix().data().iter().zip(base.matrix().data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    outcome(
        counts_ok && permutation_ok && dup_err <= LOSS_TOL,
        format!(
            "m={m} templates x {n_normal}/{n_abnormal} states, counts {counts_ok}, permutation bitwise {permutation_ok}, \
             duplication max diff {dup_err:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 10: masks

fn mask_contracts() -> Outcome {
    let params = RefineParams::default();
    let (mut boxes, mut nested, mut q0_cases, mut q0_equal) = (0, true, 0, true);
    for case in 0..300u64 {
        let mut rng = labeled_rng(case, "acceptance-masks");
        let (h, w) = (rng.random_range(8..40), rng.random_range(8..40));
        let image = Tensor::from_fn(&[h, w], |_| rng.random_range(0.0..1.0)).unwrap();
        if case % 3 == 0 {
            // everything at or below the threshold: no boxes
            let rough = Tensor::from_fn(&[h, w], |_| rng.random_range(0.0..=params.threshold)).unwrap();
            let r = refine(&rough, &image, &clipsam_core::encoders::MockSam, &params).unwrap();
            q0_cases += 1;
            q0_equal &= r.prompts.boxes.is_empty() && r.refined == normalize_map(&rough);
            continue;
        }
        let (cy, cx) = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
        let spread = rng.random_range(2.0..10.0);
        let rough = Tensor::from_fn(&[h, w], |i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            let bump = (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * spread * spread)).exp();
            (0.8 * bump + rng.random_range(0.0..0.35)).min(1.0)
        })
        .unwrap();
        let (_, prompts, _) = build_prompts(&rough, &params).unwrap();
        if prompts.boxes.is_empty() {
            continue;
        }
        let set = sam_decode_mock(&image, &rough, &prompts).unwrap();
        boxes += set.masks.len();
        nested &= set.masks.iter().all(|[a, b, c]| c.is_subset_of(b) && b.is_subset_of(a));
    }
    outcome(
        nested && q0_equal && boxes > 0,
        format!("{boxes} boxes nested {nested}; q=0 bitwise equal to normalized rough on {q0_cases} maps: {q0_equal}"),
    )
}

#[test]
fn acceptance_criteria() {
    let work = tempfile::tempdir().unwrap();
    let mut failed = Vec::new();
    let mut report = |id: u32, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        writeln!(std::io::stderr(), "{tag} [{id:>2}] {name}: {}", o.detail).unwrap();
        if !o.pass {
            failed.push(id);
        }
    };
    report(1, "gradient correctness", gradient_correctness());
    report(2, "loss unit values", loss_unit_values());
    report(3, "metric oracle equivalence", metric_oracles());
    report(4, "connected components vs flood fill", components_match_flood_fill());
    let desk = desk_run(work.path());
    report(5, "end-to-end desk run", desk_auroc(&desk));
    report(6, "refinement delta", mmr_delta(&desk));
    report(7, "ablation ordering", ablation_ordering(work.path()));
    report(8, "ablate determinism", ablate_determinism(work.path()));
    report(9, "prompt ensemble", prompt_ensemble());
    report(10, "mask-set contracts", mask_contracts());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
