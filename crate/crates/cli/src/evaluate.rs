//! Per-case metrics and bootstrapped aggregates for predicted scanpaths.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use gazebench_core::analytics::{bootstrap_ci, BootstrapConfig};
use gazebench_core::multimatch::{multimatch_scores, MultiMatchConfig, MultiMatchScores};
use gazebench_core::saliency::{heatmap_cc, heatmap_iou, render_heatmap};
use gazebench_core::{Error as CoreError, Scanpath};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalOptions {
    pub spread: f64,
    pub iou_threshold: f64,
    pub bootstrap: BootstrapConfig,
    pub multimatch: MultiMatchConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            spread: gazebench_core::saliency::DEFAULT_SPREAD,
            iou_threshold: gazebench_core::saliency::DEFAULT_IOU_THRESHOLD,
            bootstrap: BootstrapConfig::default(),
            multimatch: MultiMatchConfig::default(),
        }
    }
}

/// Metrics for one case. `None` marks a metric that is undefined for the
/// pair; `notes` says why.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseMetrics {
    pub case_id: String,
    pub iou: f64,
    pub cc: Option<f64>,
    pub multimatch: Option<MultiMatchScores>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub metric: String,
    /// Cases on which the metric is defined.
    pub n_cases: usize,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub options: EvalOptions,
    pub summary: Vec<MetricSummary>,
    pub cases: Vec<CaseMetrics>,
}

pub const METRICS: [&str; 4] = ["mIoU", "mCC", "mMM", "mD-MM"];

impl EvalReport {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.summary.iter().find(|m| m.metric == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Summary rows followed by per-case rows.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("metric,n_cases,mean,ci_low,ci_high\n");
        for m in &self.summary {
            out.push_str(&format!("{},{},{},{},{}\n", m.metric, m.n_cases, opt(m.mean), opt(m.ci_low), opt(m.ci_high)));
        }
        out.push('\n');
        out.push_str("case_id,iou,cc,mm_shape,mm_direction,mm_length,mm_position,mm_duration,mm_mean\n");
        for c in &self.cases {
            let mm: Vec<String> = match &c.multimatch {
                Some(s) => s.dimensions().iter().chain([&s.mean_mm]).map(|v| v.to_string()).collect(),
                None => vec![String::new(); 6],
            };
            out.push_str(&format!("{},{},{},{}\n", csv_field(&c.case_id), c.iou, opt(c.cc), mm.join(",")));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Matches predictions to ground truth by case id, in ground-truth order.
pub fn pair_cases<'a>(pred: &'a [Scanpath], gt: &'a [Scanpath]) -> Result<Vec<(&'a Scanpath, &'a Scanpath)>> {
    let by_id: BTreeMap<&str, &Scanpath> = pred.iter().map(|s| (s.case_id(), s)).collect();
    let gt_ids: std::collections::BTreeSet<&str> = gt.iter().map(|s| s.case_id()).collect();
    let missing: Vec<&str> = gt.iter().map(|s| s.case_id()).filter(|id| !by_id.contains_key(id)).collect();
    let extra: Vec<&str> = by_id.keys().filter(|id| !gt_ids.contains(*id)).copied().collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(CliError::Validation(format!(
            "unmatched case ids: no prediction for {missing:?}, no ground truth for {extra:?}"
        )));
    }
    Ok(gt.iter().map(|g| (by_id[g.case_id()], g)).collect())
}

pub fn case_metrics(pred: &Scanpath, gt: &Scanpath, opts: &EvalOptions) -> Result<CaseMetrics> {
    let id = gt.case_id();
    let ctx = |e: CoreError| CliError::from(e.for_case(id));
    let gt_map = render_heatmap(gt, opts.spread).map_err(ctx)?;
    let mut notes = Vec::new();
    let (iou, cc) = if pred.is_empty() {
        notes.push("empty prediction: IoU 0, CC undefined".to_string());
        (0.0, None)
    } else {
        let pred_map = render_heatmap(pred, opts.spread).map_err(ctx)?;
        let iou = heatmap_iou(&pred_map, &gt_map, opts.iou_threshold).map_err(ctx)?;
        let cc = match heatmap_cc(&pred_map, &gt_map) {
            Ok(v) => Some(v),
            Err(CoreError::ConstantHeatmap) => {
                notes.push("CC undefined: constant heatmap".to_string());
                None
            }
            Err(e) => return Err(ctx(e)),
        };
        (iou, cc)
    };
    let multimatch = match multimatch_scores(pred, gt, &opts.multimatch) {
        Ok(s) => Some(s),
        Err(CoreError::ScanpathTooShort) => {
            notes.push("MultiMatch undefined: fewer than 2 fixations".to_string());
            None
        }
        Err(e) => return Err(ctx(e)),
    };
    Ok(CaseMetrics { case_id: id.to_string(), iou, cc, multimatch, notes })
}

fn summarize(name: &str, values: &[f64], cfg: &BootstrapConfig) -> Result<MetricSummary> {
    if values.is_empty() {
        return Ok(MetricSummary { metric: name.into(), n_cases: 0, mean: None, ci_low: None, ci_high: None });
    }
    let ci = bootstrap_ci(values, cfg)?;
    Ok(MetricSummary {
        metric: name.into(),
        n_cases: values.len(),
        mean: Some(ci.point),
        ci_low: Some(ci.low),
        ci_high: Some(ci.high),
    })
}

pub fn evaluate_pairs(pairs: &[(&Scanpath, &Scanpath)], opts: &EvalOptions) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(CliError::Validation("nothing to evaluate".into()));
    }
    let cases = pairs
        .par_iter()
        .map(|(p, g)| case_metrics(p, g, opts))
        .collect::<Result<Vec<_>>>()?;
    let iou: Vec<f64> = cases.iter().map(|c| c.iou).collect();
    let cc: Vec<f64> = cases.iter().filter_map(|c| c.cc).collect();
    let mm: Vec<f64> = cases.iter().filter_map(|c| c.multimatch.map(|m| m.mean_mm)).collect();
    let dmm: Vec<f64> = cases.iter().filter_map(|c| c.multimatch.map(|m| m.duration)).collect();
    let summary = [iou, cc, mm, dmm]
        .iter()
        .zip(METRICS)
        .map(|(v, name)| summarize(name, v, &opts.bootstrap))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { options: *opts, summary, cases })
}

pub fn evaluate(pred: &[Scanpath], gt: &[Scanpath], opts: &EvalOptions) -> Result<EvalReport> {
    evaluate_pairs(&pair_cases(pred, gt)?, opts)
}
