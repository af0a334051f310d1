use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clipsam_core::config::RunConfig;
use clipsam_core::data::{test_split, train_split, SyntheticSample};
use clipsam_core::imageio::{load_image, overlay, save_image, save_rgb};
use clipsam_core::metrics::{reports_to_csv, MetricsReport};
use clipsam_core::pipeline::{Evaluation, InferOptions, Pipeline};
use clipsam_core::{Error, Result};

pub const CHECKPOINT: &str = "model.ckpt";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn parent_of(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn fit(config: RunConfig, samples: &[SyntheticSample], dir: &Path) -> Result<Pipeline> {
    create_dir(dir)?;
    let mut pipeline = Pipeline::new(config)?;
    let report = pipeline.train(samples, |_| {})?;
    for (e, mean) in report.epoch_means().iter().enumerate() {
        eprintln!("{}: epoch {} mean loss {mean:.4}", dir.display(), e + 1);
    }
    write(&dir.join("loss_trace.csv"), report.to_csv())?;
    pipeline.save(&dir.join(CHECKPOINT))?;
    Ok(pipeline)
}

/// A config file that cannot be read is a configuration problem, not a runtime one.
fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).map_err(|e| match e {
        Error::Io { source, .. } => Error::config("--config", format!("cannot read {}: {source}", path.display())),
        other => other,
    })
}

fn training_split(config: &RunConfig) -> Result<Vec<SyntheticSample>> {
    train_split(config.train_count, config.extent, config.seed, &config.category)
}

fn write_eval(dir: &Path, eval: &Evaluation) -> Result<()> {
    write(&dir.join("metrics_rough.csv"), reports_to_csv(&eval.rough))?;
    write(&dir.join("metrics_refined.csv"), reports_to_csv(&eval.refined))
}

fn summary(r: &MetricsReport) -> String {
    format!("auroc {:.4}  ap {:.4}  f1_max {:.4}  pro {:.4}", r.auroc, r.ap, r.f1_max, r.pro)
}

fn mean_of(reports: &[MetricsReport]) -> MetricsReport {
    MetricsReport::mean(reports).expect("evaluation splits are non-empty")
}

pub fn train(config_path: &Path) -> Result<()> {
    let config = load_config(config_path)?;
    let dir = config.output_dir.clone();
    let samples = training_split(&config)?;
    fit(config, &samples, &dir)?;
    println!("wrote {}", dir.join(CHECKPOINT).display());
    Ok(())
}

pub fn infer(ckpt: &Path, image: &Path, no_mmr: bool, no_umci: bool, out: Option<&Path>) -> Result<()> {
    let pipeline = Pipeline::load(ckpt)?;
    let img = load_image(image)?;
    let result = pipeline.infer(&img, InferOptions { no_mmr, no_umci })?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| parent_of(ckpt).join("infer"));
    create_dir(&dir)?;
    save_image(&dir.join("rough.pgm"), &result.rough)?;
    save_image(&dir.join("refined.pgm"), &result.refined)?;
    save_rgb(&dir.join("overlay.ppm"), &overlay(&img, &result.refined)?)?;
    if let Some(r) = &result.refinement {
        save_image(&dir.join("mask.pgm"), &r.binary.to_tensor())?;
        write(&dir.join("prompts.txt"), r.prompts.to_text())?;
        if r.no_point_support {
            eprintln!("warning: no pixel above the threshold; no point prompts");
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn eval(ckpt: &Path, seed: u64, count: usize, out: Option<&Path>) -> Result<()> {
    if count == 0 {
        return Err(Error::config("--count", "must be at least 1"));
    }
    let pipeline = Pipeline::load(ckpt)?;
    let cfg = pipeline.config();
    let samples = test_split(count, cfg.extent, seed, &cfg.category)?;
    let eval = pipeline.evaluate(&samples, InferOptions::default())?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| parent_of(ckpt));
    create_dir(&dir)?;
    write_eval(&dir, &eval)?;
    println!("rough    {}", summary(&mean_of(&eval.rough)));
    println!("refined  {}", summary(&mean_of(&eval.refined)));
    Ok(())
}

pub fn ablate(config_path: &Path) -> Result<()> {
    let config = load_config(config_path)?;
    let root = config.output_dir.clone();
    let train = training_split(&config)?;
    let test = test_split(config.test_count, config.extent, config.seed, &config.category)?;
    let mut rows = Vec::new();

    let mut full = None;
    for (name, strip, scale) in [("full", true, true), ("strip_only", true, false), ("scale_only", false, true)] {
        let mut c = config.clone();
        c.umci.include_strip = strip;
        c.umci.include_scale = scale;
        let dir = root.join(name);
        let pipeline = fit(c, &train, &dir)?;
        let eval = pipeline.evaluate(&test, InferOptions::default())?;
        write_eval(&dir, &eval)?;
        rows.push((name, mean_of(&eval.refined)));
        full.get_or_insert(pipeline);
    }
    let full = full.expect("full variant runs first");

    // Both remaining variants reuse the full model: no_umci only its projection.
    let dir = root.join("no_umci");
    create_dir(&dir)?;
    let eval = full.evaluate(&test, InferOptions { no_mmr: false, no_umci: true })?;
    write_eval(&dir, &eval)?;
    rows.push(("no_umci", mean_of(&eval.refined)));

    let dir = root.join("no_mmr");
    create_dir(&dir)?;
    let eval = full.evaluate(&test, InferOptions { no_mmr: true, no_umci: false })?;
    write(&dir.join("metrics.csv"), reports_to_csv(&eval.refined))?;
    rows.push(("no_mmr", mean_of(&eval.refined)));

    let mut csv = String::from("variant,auroc,ap,f1_max,pro\n");
    for (name, r) in &rows {
        writeln!(csv, "{name},{:.6},{:.6},{:.6},{:.6}", r.auroc, r.ap, r.f1_max, r.pro).unwrap();
        println!("{name:<11} {}", summary(r));
    }
    write(&root.join("ablation.csv"), csv)
}

pub fn generate(seed: u64, count: usize, extent: usize, out: &Path) -> Result<()> {
    if count == 0 {
        return Err(Error::config("--count", "must be at least 1"));
    }
    let samples = test_split(count, extent, seed, "object").map_err(|e| match e {
        Error::Invalid { detail, .. } => Error::config("--extent", detail),
        other => other,
    })?;
    create_dir(out)?;
    for (i, s) in samples.iter().enumerate() {
        save_image(&out.join(format!("image_{i:03}.pgm")), &s.image)?;
        save_image(&out.join(format!("mask_{i:03}.pgm")), s.mask.mask())?;
    }
    println!("wrote {count} image/mask pairs to {}", out.display());
    Ok(())
}
