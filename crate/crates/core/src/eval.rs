//! Dataset-level evaluation over directories of predictions and ground truth.
//!
//! Predictions and ground truth are paired by file name. In box mode both
//! sides are box JSON records; in saliency mode both are 8-bit PGM maps.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, EvalRecord};
use crate::pgm::read_pgm;
use crate::pipeline::BoxRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Corloc,
    Saliency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub iou_threshold: f64,
    pub max_boxes: Option<usize>,
    pub beta2: f64,
}

impl EvalConfig {
    pub fn new(mode: EvalMode) -> Self {
        EvalConfig {
            mode,
            iou_threshold: metrics::CORLOC_THRESHOLD,
            max_boxes: None,
            beta2: metrics::BETA2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub image: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_threshold: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub corloc: Option<f64>,
    pub mae_mean: Option<f64>,
    pub max_f_mean: Option<f64>,
    pub per_image: Vec<ImageReport>,
    pub config: EvalConfig,
}

/// Files in `dir` with extension `ext`, sorted by name.
fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Pairs each prediction with the same-named ground-truth file.
fn pair_files(pred_dir: &Path, gt_dir: &Path, ext: &str) -> Result<Vec<(PathBuf, PathBuf)>> {
    let preds = list_files(pred_dir, ext)?;
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(preds.len());
    for pred in preds {
        let gt = gt_dir.join(pred.file_name().expect("listed files have names"));
        if gt.is_file() {
            pairs.push((pred, gt));
        } else {
            missing.push(gt.display().to_string());
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingGroundTruth(missing));
    }
    if pairs.is_empty() {
        return Err(Error::Argument(format!(
            "no .{ext} predictions in {}",
            pred_dir.display()
        )));
    }
    Ok(pairs)
}

pub fn read_box_record(path: &Path) -> Result<BoxRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Box records scored with CorLoc.
pub fn evaluate_corloc(records: &[EvalRecord], config: EvalConfig) -> Result<EvalReport> {
    let corloc = metrics::corloc(records, config.iou_threshold)?;
    let per_image = records
        .iter()
        .map(|r| {
            let best = r.best_iou();
            ImageReport {
                image: r.image.clone(),
                best_iou: Some(best),
                correct: Some(best > config.iou_threshold),
                mae: None,
                max_f: None,
                best_threshold: None,
            }
        })
        .collect();
    Ok(EvalReport {
        corloc: Some(corloc),
        mae_mean: None,
        max_f_mean: None,
        per_image,
        config,
    })
}

pub fn evaluate_box_dirs(pred_dir: &Path, gt_dir: &Path, config: EvalConfig) -> Result<EvalReport> {
    let pairs = pair_files(pred_dir, gt_dir, "json")?;
    let records = pairs
        .par_iter()
        .map(|(pred, gt)| {
            let p = read_box_record(pred)?;
            let g = read_box_record(gt)?;
            let mut predicted = p.boxes;
            if let Some(max) = config.max_boxes {
                predicted.truncate(max);
            }
            Ok(EvalRecord {
                image: stem(pred),
                predicted,
                ground_truth: g.boxes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_corloc(&records, config)
}

/// Saliency PGMs against binary ground-truth PGMs (nonzero is foreground).
pub fn evaluate_saliency_dirs(pred_dir: &Path, gt_dir: &Path, config: EvalConfig) -> Result<EvalReport> {
    let pairs = pair_files(pred_dir, gt_dir, "pgm")?;
    let per_image = pairs
        .par_iter()
        .map(|(pred, gt)| {
            let sal = read_pgm(pred)?;
            let mask = read_pgm(gt)?.to_mask();
            let mae = metrics::mae(&sal, &mask)?;
            let (f, t) = metrics::max_f_measure(&sal, &mask)?;
            Ok(ImageReport {
                image: stem(pred),
                best_iou: None,
                correct: None,
                mae: Some(mae),
                max_f: Some(f),
                best_threshold: Some(t),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_image.len() as f64;
    let mae_mean = per_image.iter().filter_map(|r| r.mae).sum::<f64>() / n;
    let max_f_mean = per_image.iter().filter_map(|r| r.max_f).sum::<f64>() / n;
    Ok(EvalReport {
        corloc: None,
        mae_mean: Some(mae_mean),
        max_f_mean: Some(max_f_mean),
        per_image,
        config,
    })
}

pub fn evaluate_dirs(pred_dir: &Path, gt_dir: &Path, config: EvalConfig) -> Result<EvalReport> {
    match config.mode {
        EvalMode::Corloc => evaluate_box_dirs(pred_dir, gt_dir, config),
        EvalMode::Saliency => evaluate_saliency_dirs(pred_dir, gt_dir, config),
    }
}
