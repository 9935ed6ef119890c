//! The studies: four-arm k-fold cross-validation, rater-versus-consensus
//! agreement, first- versus second-pass relabeling, and overlays.

pub mod io;
pub mod overlay;
pub mod reports;

use std::collections::BTreeSet;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{AnnotatedSample, ExperimentArm, FoldPlan};
use crate::error::{Error, Result};
use crate::metrics::{improvement_percent, score_pairs, IoUAccumulator};
use crate::network::{build_model, save_checkpoint, NetworkConfig};
use crate::rng::derive_seed;
use crate::training::{evaluate, prepare_eval_set, prepare_train_set, PrepConfig, TrainConfig, TrainHistory, Trainer};

pub use overlay::render_overlay;
pub use reports::{ArmReport, ContrastReport, RaterReport, RaterRow};

#[derive(Clone, Debug, Default)]
pub struct CrossvalOptions {
    /// Folds trained concurrently (0 or 1 runs them in sequence).
    pub workers: usize,
    /// Where to save each fold's best checkpoint and history, if anywhere.
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub iou: f64,
    pub per_image_mean: f64,
    pub history: TrainHistory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossvalOutcome {
    pub report: ArmReport,
    pub folds: Vec<FoldOutcome>,
}

fn lookup<'a>(samples: &'a [AnnotatedSample], ids: &[&str]) -> Result<Vec<&'a AnnotatedSample>> {
    ids.iter()
        .map(|id| {
            samples
                .iter()
                .find(|s| s.id == *id)
                .ok_or_else(|| Error::Dataset(format!("fold plan names unknown sample {id}")))
        })
        .collect()
}

fn check_plan(samples: &[AnnotatedSample], plan: &FoldPlan) -> Result<()> {
    let known: BTreeSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    if known.len() != samples.len() {
        return Err(Error::Dataset("sample ids are not unique".into()));
    }
    for id in plan.assignments.keys() {
        if !known.contains(id.as_str()) {
            return Err(Error::Dataset(format!("fold plan names unknown sample {id}")));
        }
    }
    if plan.assignments.values().any(|&f| f >= plan.k) {
        return Err(Error::Dataset("fold plan assigns a fold index >= k".into()));
    }
    Ok(())
}

/// Trains on the other folds and scores aggregate IoU on fold `fold`.
pub fn run_fold(
    samples: &[AnnotatedSample],
    fold: usize,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    prep: &PrepConfig,
    plan: &FoldPlan,
    output_dir: Option<&std::path::Path>,
) -> Result<FoldOutcome> {
    let arm = train_cfg.arm;
    let test_ids = plan.test_ids(fold);
    let train_ids = plan.train_ids(fold);
    if test_ids.is_empty() || train_ids.is_empty() {
        return Err(Error::TooFewSamples { samples: plan.len(), k: plan.k });
    }
    let tag = format!("fold{fold}");
    let train = prepare_train_set(&lookup(samples, &train_ids)?, arm, prep, derive_seed(train_cfg.seed, &format!("{tag}/augment")))?;
    let test = prepare_eval_set(&lookup(samples, &test_ids)?, arm, prep)?;
    let net = NetworkConfig { seed: derive_seed(net_cfg.seed, &tag), ..net_cfg.clone() };
    let cfg = TrainConfig { seed: derive_seed(train_cfg.seed, &tag), ..train_cfg.clone() };
    // The test fold doubles as the per-epoch validation set.
    let mut trainer = Trainer::<f32>::new(build_model(&net)?, train, test.clone(), cfg)?
        .with_holdout(test_ids.iter().map(|s| s.to_string()))?;
    trainer.run()?;
    let (best, history) = trainer.into_best();
    let score = evaluate(&best, &test)?;
    if let Some(dir) = output_dir {
        let dir = dir.join(arm.as_str());
        std::fs::create_dir_all(&dir)?;
        save_checkpoint(&best, &dir.join(format!("fold{}.ckpt", fold + 1)))?;
        std::fs::write(dir.join(format!("fold{}_history.csv", fold + 1)), history.to_csv())?;
    }
    Ok(FoldOutcome { fold, iou: score.aggregate, per_image_mean: score.per_image_mean, history })
}

/// k-fold cross-validation of one arm.
pub fn run_crossval(
    samples: &[AnnotatedSample],
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    prep: &PrepConfig,
    plan: &FoldPlan,
    opts: &CrossvalOptions,
) -> Result<CrossvalOutcome> {
    check_plan(samples, plan)?;
    net_cfg.validate()?;
    train_cfg.validate()?;
    let out = opts.output_dir.as_deref();
    let folds: Vec<FoldOutcome> = if opts.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
        pool.install(|| {
            (0..plan.k)
                .into_par_iter()
                .map(|f| run_fold(samples, f, net_cfg, train_cfg, prep, plan, out))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        (0..plan.k).map(|f| run_fold(samples, f, net_cfg, train_cfg, prep, plan, out)).collect::<Result<_>>()?
    };
    let report = ArmReport::new(
        train_cfg.arm,
        folds.iter().map(|f| f.iou).collect(),
        folds.iter().map(|f| f.per_image_mean).collect(),
    )?;
    Ok(CrossvalOutcome { report, folds })
}

/// Runs several arms on one fold plan.
pub fn run_arms(
    samples: &[AnnotatedSample],
    arms: &[ExperimentArm],
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    prep: &PrepConfig,
    plan: &FoldPlan,
    opts: &CrossvalOptions,
) -> Result<Vec<CrossvalOutcome>> {
    arms.iter()
        .map(|&arm| run_crossval(samples, net_cfg, &TrainConfig { arm, ..train_cfg.clone() }, prep, plan, opts))
        .collect()
}

/// Aggregate IoU of one rater's masks against the consensus on each fold.
/// Pure mask arithmetic; no model is evaluated.
pub fn rater_fold_ious(samples: &[AnnotatedSample], rater: &str, plan: &FoldPlan, second_pass: bool) -> Result<Vec<f64>> {
    check_plan(samples, plan)?;
    (0..plan.k)
        .map(|f| {
            let mut acc = IoUAccumulator::new();
            for s in lookup(samples, &plan.test_ids(f))? {
                let masks = if second_pass { &s.second_pass_masks } else { &s.rater_masks };
                let m = masks.get(rater).ok_or_else(|| Error::MissingRaterMask {
                    sample: s.id.clone(),
                    rater: if second_pass { format!("{rater} (second pass)") } else { rater.to_string() },
                })?;
                acc.record(m, &s.consensus)?;
            }
            Ok(acc.value())
        })
        .collect()
}

/// Scores every listed rater fold by fold; the system row, when given,
/// is copied from a finished cross-validation.
pub fn compare_raters(
    samples: &[AnnotatedSample],
    raters: &[String],
    plan: &FoldPlan,
    system: Option<&ArmReport>,
) -> Result<RaterReport> {
    if raters.is_empty() {
        return Err(Error::EmptyInput("rater list"));
    }
    let rows = raters
        .iter()
        .map(|r| RaterRow::new(r.clone(), rater_fold_ious(samples, r, plan, false)?))
        .collect::<Result<Vec<_>>>()?;
    let system = match system {
        Some(rep) if rep.k() != plan.k => {
            return Err(Error::ShapeMismatch(format!("system report has {} folds, plan has {}", rep.k(), plan.k)))
        }
        Some(rep) => Some(RaterRow::new("System", rep.per_fold_iou.clone())?),
        None => None,
    };
    RaterReport::new(rows, system)
}

/// Agreement of a rater's first and second pass with the consensus on one
/// fold (`fold` is 0-based; the report prints it 1-based).
pub fn assisted_relabel_report(
    samples: &[AnnotatedSample],
    rater: &str,
    fold: usize,
    plan: &FoldPlan,
    dataset: &str,
) -> Result<ContrastReport> {
    check_plan(samples, plan)?;
    if fold >= plan.k {
        return Err(Error::InvalidConfig(format!("fold {fold} out of range for k = {}", plan.k)));
    }
    let test = lookup(samples, &plan.test_ids(fold))?;
    let missing = |s: &AnnotatedSample, what: &str| Error::MissingRaterMask { sample: s.id.clone(), rater: format!("{rater}{what}") };
    let first = test
        .iter()
        .map(|s| s.rater_masks.get(rater).map(|m| (m, &s.consensus)).ok_or_else(|| missing(s, "")))
        .collect::<Result<Vec<_>>>()?;
    let second = test
        .iter()
        .map(|s| s.second_pass_masks.get(rater).map(|m| (m, &s.consensus)).ok_or_else(|| missing(s, " (second pass)")))
        .collect::<Result<Vec<_>>>()?;
    let original_iou = score_pairs(first)?.aggregate;
    let second_iou = score_pairs(second)?.aggregate;
    Ok(ContrastReport {
        dataset: dataset.to_string(),
        fold: fold + 1,
        original_iou,
        second_iou,
        improvement: improvement_percent(original_iou, second_iou)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{BinaryMask, Device, GrayImage};
    use crate::network::forward_calls;
    use crate::training::make_folds;

    fn sample(id: &str, truth: BinaryMask, rater: BinaryMask, second: BinaryMask) -> AnnotatedSample {
        let (w, h) = truth.dims();
        let mut s = AnnotatedSample::new(id, Device::Synthetic, GrayImage::filled(w, h, 50), truth);
        s.rater_masks.insert("a".into(), rater);
        s.second_pass_masks.insert("a".into(), second);
        s
    }

    fn rows(n: usize, w: usize) -> BinaryMask {
        BinaryMask::from_fn(w, 1, |x, _| x < n)
    }

    #[test]
    fn hand_computed_contrast() {
        // truth 10 px; first pass 5 of them -> 0.5; second pass 8 -> 0.8
        let samples = vec![sample("x", rows(10, 20), rows(5, 20), rows(8, 20)), sample("y", rows(10, 20), rows(5, 20), rows(8, 20))];
        let plan = make_folds(&["x", "y"], 1, 0, false).unwrap();
        let c = assisted_relabel_report(&samples, "a", 0, &plan, "SYN").unwrap();
        assert_eq!((c.original_iou, c.second_iou), (0.5, 0.8));
        assert!((c.improvement - 60.0).abs() < 1e-12);
        assert_eq!(c.fold, 1);

        let same = vec![sample("x", rows(10, 20), rows(5, 20), rows(5, 20))];
        let plan1 = make_folds(&["x"], 1, 0, false).unwrap();
        assert_eq!(assisted_relabel_report(&same, "a", 0, &plan1, "SYN").unwrap().improvement, 0.0);
        let perfect = vec![sample("x", rows(10, 20), rows(5, 20), rows(10, 20))];
        let c = assisted_relabel_report(&perfect, "a", 0, &plan1, "SYN").unwrap();
        assert_eq!(c.second_iou, 1.0);
        assert!((c.improvement - 100.0).abs() < 1e-12);
        assert!(matches!(assisted_relabel_report(&perfect, "zz", 0, &plan1, "SYN"), Err(Error::MissingRaterMask { .. })));
    }

    #[test]
    fn raters_need_no_model() {
        let samples: Vec<AnnotatedSample> =
            (0..6).map(|i| sample(&format!("s{i}"), rows(10, 20), rows(10, 20), rows(10, 20))).collect();
        let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
        let plan = make_folds(&ids, 3, 4, false).unwrap();
        let before = forward_calls();
        let rep = compare_raters(&samples, &["a".to_string()], &plan, None).unwrap();
        assert_eq!(forward_calls(), before);
        assert_eq!(rep.raters[0].per_fold_iou, vec![1.0; 3]);
        assert!(matches!(
            compare_raters(&samples, &["b".to_string()], &plan, None),
            Err(Error::MissingRaterMask { .. })
        ));
    }
}
