use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use plexseg::data_model::{validate_dataset, AnnotatedSample, Device, ExperimentArm, FoldPlan};
use plexseg::enhance::{clahe, dataset_histogram};
use plexseg::experiments::io::{filter_device, load_dataset, write_dataset, write_rgb_png};
use plexseg::experiments::reports::{emit_arm_tables, emit_contrast_tables, emit_rater_tables};
use plexseg::experiments::{
    assisted_relabel_report, compare_raters, render_overlay, run_arms, run_fold, ArmReport, CrossvalOptions,
};
use plexseg::network::load_checkpoint;
use plexseg::preprocess::{crop_roi, DeviceCropProfile};
use plexseg::synthetic::{attach_raters, default_raters, generate_phantom_dataset};
use plexseg::training::{make_folds, predict_masks, prepare_eval_set};

use crate::config::RunConfig;
use crate::manifest::Artifacts;
use crate::CliError;

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub folds: Option<&'a Path>,
    pub artifacts: Artifacts,
}

impl Ctx<'_> {
    fn out(&self, rel: &str) -> PathBuf {
        self.cfg.out.join(rel)
    }

    fn arm(&self) -> ExperimentArm {
        self.cfg.arms[0]
    }

    fn dataset(&self) -> Result<Vec<AnnotatedSample>, CliError> {
        let samples = filter_device(load_dataset(&self.cfg.dataset_root)?, self.cfg.device_profile);
        if samples.is_empty() {
            return Err(CliError::Runtime(format!(
                "no {} samples under {}",
                self.cfg.device_profile.map_or("matching", Device::as_str),
                self.cfg.dataset_root.display()
            )));
        }
        Ok(samples)
    }

    fn dataset_label(&self) -> &'static str {
        self.cfg.device_profile.map_or("MIXED", Device::as_str)
    }

    /// The plan given by `--folds`, or a fresh one from `k` and `seed`.
    fn plan(&mut self, samples: &[AnnotatedSample]) -> Result<FoldPlan, CliError> {
        let plan = match self.folds {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read fold plan {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("fold plan {}: {e}", p.display())))?
            }
            None => {
                let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
                make_folds(&ids, self.cfg.k, self.cfg.seed, self.cfg.trim_to_divisible)?
            }
        };
        self.write("folds.json", &plan_json(&plan))?;
        Ok(plan)
    }

    fn write(&mut self, rel: &str, body: &str) -> Result<(), CliError> {
        let path = self.out(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, body)?;
        self.artifacts.add(path);
        Ok(())
    }

    fn check_fold(&self, fold: usize, plan: &FoldPlan) -> Result<usize, CliError> {
        if fold == 0 || fold > plan.k {
            return Err(CliError::Usage(format!("--fold must be in 1..={}, got {fold}", plan.k)));
        }
        Ok(fold - 1)
    }
}

pub fn plan_json(plan: &FoldPlan) -> String {
    let mut s = serde_json::to_string_pretty(plan).expect("fold plan serializes");
    s.push('\n');
    s
}

pub fn synth_gen(ctx: &mut Ctx) -> Result<(), CliError> {
    let cfg = &ctx.cfg.synthetic;
    let phantoms = generate_phantom_dataset(cfg)?;
    let trunks: BTreeMap<&str, _> = phantoms.iter().map(|p| (p.sample.id.as_str(), &p.trunks)).collect();
    let trunks = serde_json::to_string_pretty(&trunks).expect("ellipses serialize") + "\n";
    let mut samples: Vec<AnnotatedSample> = phantoms.iter().map(|p| p.sample.clone()).collect();
    attach_raters(&mut samples, &default_raters(cfg.seed))?;
    let root = ctx.cfg.out.clone();
    write_dataset(&root, &samples)?;
    ctx.artifacts.add(root.join(Device::Synthetic.as_str()));
    ctx.write("trunks.json", &trunks)?;
    println!("wrote {} phantoms to {}", samples.len(), root.display());
    Ok(())
}

/// Validates the dataset and writes the network-ready evaluation inputs
/// of one arm in the dataset layout.
pub fn prepare(ctx: &mut Ctx) -> Result<(), CliError> {
    let samples = ctx.dataset()?;
    let violations = validate_dataset(&samples);
    let report: String = violations.iter().map(|v| format!("{v}\n")).collect();
    ctx.write("validation.txt", &report)?;
    if !violations.is_empty() {
        return Err(CliError::Runtime(format!("{} dataset violations, see validation.txt", violations.len())));
    }
    let arm = ctx.arm();
    let refs: Vec<&AnnotatedSample> = samples.iter().collect();
    let prepared = prepare_eval_set(&refs, arm, &ctx.cfg.prep)?;
    let out: Vec<AnnotatedSample> = samples
        .iter()
        .zip(prepared)
        .map(|(s, p)| AnnotatedSample::new(p.id, s.device, p.image, p.mask))
        .collect();
    let root = ctx.out(&format!("prepared/{}", arm.as_str()));
    write_dataset(&root, &out)?;
    ctx.artifacts.add(root);
    println!("prepared {} samples for arm {}", out.len(), arm.as_str());
    Ok(())
}

/// Pooled ROI histograms per device, before and after CLAHE.
pub fn enhance_report(ctx: &mut Ctx) -> Result<(), CliError> {
    let samples = ctx.dataset()?;
    let mut devices: Vec<Device> = samples.iter().map(|s| s.device).collect();
    devices.sort();
    devices.dedup();
    for dev in devices {
        let roi: Vec<_> = samples
            .iter()
            .filter(|s| s.device == dev)
            .map(|s| {
                if ctx.cfg.prep.crop_roi {
                    crop_roi(&s.image, &DeviceCropProfile::for_device(s.device))
                } else {
                    Ok(s.image.clone())
                }
            })
            .collect::<plexseg::Result<_>>()?;
        let enhanced = roi.iter().map(|i| clahe(i, &ctx.cfg.prep.enhance)).collect::<plexseg::Result<Vec<_>>>()?;
        for (tag, imgs) in [("original", &roi), ("enhanced", &enhanced)] {
            let h = dataset_histogram(imgs.iter(), format!("{}_{tag}", dev.as_str()))?;
            ctx.write(&format!("histograms/{}.csv", h.source_tag), &h.to_csv())?;
            ctx.write(&format!("histograms/{}.txt", h.source_tag), &h.to_plot_text())?;
        }
    }
    Ok(())
}

pub fn train(ctx: &mut Ctx, fold: usize) -> Result<(), CliError> {
    let samples = ctx.dataset()?;
    let plan = ctx.plan(&samples)?;
    let f = ctx.check_fold(fold, &plan)?;
    let cfg = ctx.cfg;
    let train_cfg = plexseg::training::TrainConfig { arm: ctx.arm(), ..cfg.training.clone() };
    let dir = ctx.out("checkpoints");
    let outcome = run_fold(&samples, f, &cfg.network, &train_cfg, &cfg.prep, &plan, Some(&dir))?;
    ctx.artifacts.add(dir);
    println!(
        "arm {} fold {fold}: IoU {:.4} (best epoch {})",
        train_cfg.arm.as_str(),
        outcome.iou,
        outcome.history.best_epoch
    );
    Ok(())
}

pub fn crossval(ctx: &mut Ctx) -> Result<(), CliError> {
    let samples = ctx.dataset()?;
    let plan = ctx.plan(&samples)?;
    let cfg = ctx.cfg;
    let dir = ctx.out("checkpoints");
    let opts = CrossvalOptions { workers: cfg.workers, output_dir: Some(dir.clone()) };
    let outcomes = run_arms(&samples, &cfg.arms, &cfg.network, &cfg.training, &cfg.prep, &plan, &opts)?;
    ctx.artifacts.add(dir);
    let reports: Vec<ArmReport> = outcomes.into_iter().map(|o| o.report).collect();
    let rdir = ctx.out("reports/crossval");
    emit_arm_tables(&rdir, &reports)?;
    ctx.artifacts.add(rdir);
    for r in &reports {
        println!("{}: average IoU {:.4}", r.arm.as_str(), r.average);
    }
    Ok(())
}

/// Reads the per-fold IoU column of an arm CSV written by `crossval`.
pub fn read_arm_csv(path: &Path, arm: ExperimentArm) -> Result<ArmReport, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let bad = || CliError::Usage(format!("{} is not an arm report", path.display()));
    let mut iou = Vec::new();
    let mut mean = Vec::new();
    let mut lines = text.lines();
    if lines.next() != Some("fold,iou,per_image_mean_iou") {
        return Err(bad());
    }
    for line in lines.take_while(|l| !l.starts_with("average")) {
        let cols: Vec<&str> = line.split(',').collect();
        let [_, a, m] = cols[..] else { return Err(bad()) };
        iou.push(a.parse().map_err(|_| bad())?);
        mean.push(m.parse().map_err(|_| bad())?);
    }
    Ok(ArmReport::new(arm, iou, mean)?)
}

pub fn compare(ctx: &mut Ctx, system: Option<&Path>) -> Result<(), CliError> {
    let samples = ctx.dataset()?;
    let plan = ctx.plan(&samples)?;
    let system = system.map(|p| read_arm_csv(p, ExperimentArm::MixedOptimization)).transpose()?;
    let report = compare_raters(&samples, &ctx.cfg.raters, &plan, system.as_ref())?;
    let dir = ctx.out("reports/raters");
    emit_rater_tables(&dir, &report)?;
    ctx.artifacts.add(dir);
    for r in &report.raters {
        println!("rater {}: average IoU {:.4}", r.name, r.average);
    }
    Ok(())
}

pub fn assist(ctx: &mut Ctx, raters: &[String], fold: usize) -> Result<(), CliError> {
    let samples = ctx.dataset()?;
    let plan = ctx.plan(&samples)?;
    let f = ctx.check_fold(fold, &plan)?;
    let raters = if raters.is_empty() { &ctx.cfg.raters[..] } else { raters };
    let reports = raters
        .iter()
        .map(|r| assisted_relabel_report(&samples, r, f, &plan, ctx.dataset_label()))
        .collect::<plexseg::Result<Vec<_>>>()?;
    let dir = ctx.out("reports/assist");
    emit_contrast_tables(&dir, &reports)?;
    ctx.artifacts.add(dir);
    for (r, c) in raters.iter().zip(&reports) {
        println!("rater {r} fold {fold}: {:.4} -> {:.4} ({:.2}%)", c.original_iou, c.second_iou, c.improvement);
    }
    Ok(())
}

pub fn overlay(ctx: &mut Ctx, checkpoint: &Path, limit: Option<usize>) -> Result<(), CliError> {
    let params = load_checkpoint::<f32>(checkpoint)?;
    let samples = ctx.dataset()?;
    let n = limit.unwrap_or(samples.len()).min(samples.len());
    let refs: Vec<&AnnotatedSample> = samples.iter().take(n).collect();
    let prepared = prepare_eval_set(&refs, ctx.arm(), &ctx.cfg.prep)?;
    let preds = predict_masks(&params, &prepared)?;
    let dir = ctx.out("overlays");
    fs::create_dir_all(&dir)?;
    for (p, pred) in prepared.iter().zip(&preds) {
        let path = dir.join(format!("{}.png", p.id));
        write_rgb_png(&path, &render_overlay(&p.image, pred, &p.mask)?)?;
        ctx.artifacts.add(path);
    }
    println!("wrote {n} overlays to {}", dir.display());
    Ok(())
}

pub fn folds(ctx: &mut Ctx) -> Result<(), CliError> {
    let samples = ctx.dataset()?;
    let plan = ctx.plan(&samples)?;
    println!("{} samples in {} folds of sizes {:?}", plan.len(), plan.k, plan.fold_sizes());
    Ok(())
}
