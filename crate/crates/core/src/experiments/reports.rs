//! Report types and their CSV / Markdown renderings. Numbers are printed
//! with four decimals.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_model::ExperimentArm;
use crate::error::Result;
use crate::metrics::{dispersion, format_percent, DispersionStats};

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn spread(d: &DispersionStats<f64>) -> String {
    format!("{:.5}/{:.5}/{:.5}", d.population_variance, d.sample_variance, d.mean_abs_deviation)
}

/// Cross-validation result of one arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: ExperimentArm,
    /// Aggregate IoU of each test fold.
    pub per_fold_iou: Vec<f64>,
    /// Mean of per-image IoUs of each test fold.
    pub per_fold_image_mean: Vec<f64>,
    pub average: f64,
    pub dispersion: DispersionStats<f64>,
}

impl ArmReport {
    pub fn new(arm: ExperimentArm, per_fold_iou: Vec<f64>, per_fold_image_mean: Vec<f64>) -> Result<Self> {
        let d = dispersion(&per_fold_iou)?;
        Ok(Self { arm, average: d.mean, dispersion: d, per_fold_iou, per_fold_image_mean })
    }

    pub fn k(&self) -> usize {
        self.per_fold_iou.len()
    }

    /// `k` fold rows and an `average` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fold,iou,per_image_mean_iou\n");
        for (i, (a, m)) in self.per_fold_iou.iter().zip(&self.per_fold_image_mean).enumerate() {
            writeln!(s, "{},{},{}", i + 1, f4(*a), f4(*m)).expect("string write");
        }
        let mean_img = self.per_fold_image_mean.iter().sum::<f64>() / self.k().max(1) as f64;
        writeln!(s, "average,{},{}", f4(self.average), f4(mean_img)).expect("string write");
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("| Fold | {} | Per-image mean |\n|---|---|---|\n", self.arm.title());
        for (i, (a, m)) in self.per_fold_iou.iter().zip(&self.per_fold_image_mean).enumerate() {
            writeln!(s, "| {} | {} | {} |", i + 1, f4(*a), f4(*m)).expect("string write");
        }
        writeln!(s, "| Average value | {} | |", f4(self.average)).expect("string write");
        s
    }
}

/// Fold-by-arm table with one column per arm and an average row.
pub fn arms_table_csv(reports: &[ArmReport]) -> String {
    let mut s = String::from("fold");
    for r in reports {
        write!(s, ",{}", r.arm.as_str()).expect("string write");
    }
    s.push('\n');
    let k = reports.iter().map(ArmReport::k).max().unwrap_or(0);
    for f in 0..k {
        write!(s, "{}", f + 1).expect("string write");
        for r in reports {
            write!(s, ",{}", r.per_fold_iou.get(f).map(|v| f4(*v)).unwrap_or_default()).expect("string write");
        }
        s.push('\n');
    }
    s.push_str("average");
    for r in reports {
        write!(s, ",{}", f4(r.average)).expect("string write");
    }
    s.push('\n');
    s
}

pub fn arms_table_markdown(reports: &[ArmReport]) -> String {
    let mut s = String::from("| Fold |");
    for r in reports {
        write!(s, " {} |", r.arm.title()).expect("string write");
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(reports.len()));
    s.push('\n');
    let k = reports.iter().map(ArmReport::k).max().unwrap_or(0);
    for f in 0..k {
        write!(s, "| {} |", f + 1).expect("string write");
        for r in reports {
            write!(s, " {} |", r.per_fold_iou.get(f).map(|v| f4(*v)).unwrap_or_default()).expect("string write");
        }
        s.push('\n');
    }
    s.push_str("| Average value |");
    for r in reports {
        write!(s, " {} |", f4(r.average)).expect("string write");
    }
    s.push('\n');
    s
}

/// Mean and the three spread measures per arm.
pub fn dispersion_csv(reports: &[ArmReport]) -> String {
    let mut s = String::from("arm,mean,population_variance,sample_variance,mean_abs_deviation\n");
    for r in reports {
        let d = &r.dispersion;
        writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6}",
            r.arm.as_str(),
            f4(d.mean),
            d.population_variance,
            d.sample_variance,
            d.mean_abs_deviation
        )
        .expect("string write");
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaterRow {
    pub name: String,
    pub per_fold_iou: Vec<f64>,
    pub average: f64,
}

impl RaterRow {
    pub fn new(name: impl Into<String>, per_fold_iou: Vec<f64>) -> Result<Self> {
        let average = dispersion(&per_fold_iou)?.mean;
        Ok(Self { name: name.into(), per_fold_iou, average })
    }
}

/// Raters and the system scored fold by fold against the consensus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaterReport {
    pub raters: Vec<RaterRow>,
    pub system: Option<RaterRow>,
    /// Spread of all rater fold IoUs pooled together.
    pub rater_dispersion: DispersionStats<f64>,
    /// Spread of the rater averages.
    pub rater_average_dispersion: DispersionStats<f64>,
    pub system_dispersion: Option<DispersionStats<f64>>,
}

impl RaterReport {
    pub fn new(raters: Vec<RaterRow>, system: Option<RaterRow>) -> Result<Self> {
        let pooled: Vec<f64> = raters.iter().flat_map(|r| r.per_fold_iou.iter().copied()).collect();
        let averages: Vec<f64> = raters.iter().map(|r| r.average).collect();
        Ok(Self {
            rater_dispersion: dispersion(&pooled)?,
            rater_average_dispersion: dispersion(&averages)?,
            system_dispersion: system.as_ref().map(|s| dispersion(&s.per_fold_iou)).transpose()?,
            raters,
            system,
        })
    }

    fn columns(&self) -> Vec<&RaterRow> {
        self.raters.iter().chain(self.system.as_ref()).collect()
    }

    pub fn k(&self) -> usize {
        self.columns().iter().map(|r| r.per_fold_iou.len()).max().unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let cols = self.columns();
        let mut s = String::from("fold");
        for c in &cols {
            write!(s, ",{}", c.name).expect("string write");
        }
        s.push('\n');
        for f in 0..self.k() {
            write!(s, "{}", f + 1).expect("string write");
            for c in &cols {
                write!(s, ",{}", c.per_fold_iou.get(f).map(|v| f4(*v)).unwrap_or_default()).expect("string write");
            }
            s.push('\n');
        }
        s.push_str("average");
        for c in &cols {
            write!(s, ",{}", f4(c.average)).expect("string write");
        }
        s.push('\n');
        s
    }

    /// Value columns for every rater and the system, followed by two spread
    /// columns (raters pooled, system), each printed as
    /// `population variance / sample variance / mean absolute deviation`.
    pub fn to_markdown(&self) -> String {
        let cols = self.columns();
        let mut s = String::from("| Fold |");
        for c in &cols {
            write!(s, " {} |", c.name).expect("string write");
        }
        s.push_str(" Rater spread (pop/sample/MAD) | System spread (pop/sample/MAD) |\n|---|");
        s.push_str(&"---|".repeat(cols.len() + 2));
        s.push('\n');
        for f in 0..self.k() {
            write!(s, "| {} |", f + 1).expect("string write");
            for c in &cols {
                write!(s, " {} |", c.per_fold_iou.get(f).map(|v| f4(*v)).unwrap_or_default()).expect("string write");
            }
            s.push_str(" | |\n");
        }
        s.push_str("| Average value |");
        for c in &cols {
            write!(s, " {} |", f4(c.average)).expect("string write");
        }
        let sys = self.system_dispersion.as_ref().map(spread).unwrap_or_default();
        writeln!(s, " {} | {} |", spread(&self.rater_dispersion), sys).expect("string write");
        s
    }
}

/// First-pass versus second-pass agreement of one rater on one fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    pub dataset: String,
    /// 1-based, as printed.
    pub fold: usize,
    pub original_iou: f64,
    pub second_iou: f64,
    pub improvement: f64,
}

impl ContrastReport {
    pub fn to_csv(&self) -> String {
        format!(
            "dataset,fold,original_iou,second_iou,improvement_percent\n{},{},{},{},{:.2}\n",
            self.dataset,
            self.fold,
            f4(self.original_iou),
            f4(self.second_iou),
            self.improvement
        )
    }

    pub fn to_markdown(&self) -> String {
        format!(
            "| Dataset | Fold | Original result | Second result | Percentage of improvement |\n\
             |---|---|---|---|---|\n\
             | {} | {} | {} | {} | {} |\n",
            self.dataset,
            self.fold,
            f4(self.original_iou),
            f4(self.second_iou),
            format_percent(self.improvement)
        )
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), body)?;
    Ok(())
}

/// `<dir>/<arm>.csv|.md` per arm plus the combined table and spreads.
pub fn emit_arm_tables(dir: &Path, reports: &[ArmReport]) -> Result<()> {
    for r in reports {
        write(dir, &format!("{}.csv", r.arm.as_str()), &r.to_csv())?;
        write(dir, &format!("{}.md", r.arm.as_str()), &r.to_markdown())?;
    }
    if !reports.is_empty() {
        write(dir, "arms.csv", &arms_table_csv(reports))?;
        write(dir, "arms.md", &arms_table_markdown(reports))?;
        write(dir, "dispersion.csv", &dispersion_csv(reports))?;
    }
    Ok(())
}

pub fn emit_rater_tables(dir: &Path, report: &RaterReport) -> Result<()> {
    write(dir, "raters.csv", &report.to_csv())?;
    write(dir, "raters.md", &report.to_markdown())
}

pub fn emit_contrast_tables(dir: &Path, reports: &[ContrastReport]) -> Result<()> {
    let mut csv = String::new();
    let mut md = String::from(
        "| Dataset | Fold | Original result | Second result | Percentage of improvement |\n|---|---|---|---|---|\n",
    );
    for (i, r) in reports.iter().enumerate() {
        let body = r.to_csv();
        csv.push_str(if i == 0 { &body } else { body.split_once('\n').map(|(_, rest)| rest).unwrap_or("") });
        md.push_str(r.to_markdown().lines().nth(2).unwrap_or(""));
        md.push('\n');
    }
    write(dir, "contrast.csv", &csv)?;
    write(dir, "contrast.md", &md)
}
