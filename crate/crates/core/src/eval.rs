//! Centre-distance AP and the closed-gap statistic.
//!
//! Matching and integration follow the nuScenes detection protocol: predictions
//! are matched greedily in descending score order to the nearest unmatched
//! ground-truth box of the same class by BEV centre distance. The resulting PR
//! curve is sampled at 101 recall points, the region below 0.1 recall is dropped,
//! precision is offset by 0.1 and clipped at zero, and the mean is rescaled by 1/0.9.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::LabeledBox;

pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
const RECALL_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub class: String,
    pub thresholds: Vec<f64>,
    pub min_recall: f64,
    pub min_precision: f64,
    /// Integrate the raw step PR curve instead of the clipped 101-point one.
    pub raw_pr_integration: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            class: "car".into(),
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            min_recall: 0.1,
            min_precision: 0.1,
            raw_pr_integration: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::Config("eval.thresholds must be non-empty and positive".into()));
        }
        if !(0.0..1.0).contains(&self.min_recall) || !(0.0..1.0).contains(&self.min_precision) {
            return Err(Error::Config("eval.min_recall and eval.min_precision must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Cumulative precision/recall after each prediction, in score order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// TP flag of each ranked prediction.
    pub tp: Vec<bool>,
    pub n_gt: usize,
}

fn bev_distance(a: &LabeledBox, b: &LabeledBox) -> f64 {
    (a.bbox.center[0] - b.bbox.center[0]).hypot(a.bbox.center[1] - b.bbox.center[1])
}

fn check_inputs(preds: &[Vec<LabeledBox>], gts: &[Vec<LabeledBox>], threshold: f64) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::InvalidArgument(format!(
            "{} prediction frames but {} ground-truth frames",
            preds.len(),
            gts.len()
        )));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be > 0, got {threshold}")));
    }
    Ok(())
}

/// Greedy matching over all frames. Ties in score keep frame order, then box order.
pub fn pr_curve(preds: &[Vec<LabeledBox>], gts: &[Vec<LabeledBox>], threshold: f64, class: &str) -> Result<PrCurve> {
    check_inputs(preds, gts, threshold)?;
    let mut ranked = Vec::new();
    for (f, frame_preds) in preds.iter().enumerate() {
        for (i, p) in frame_preds.iter().enumerate() {
            if p.class != class {
                continue;
            }
            let score = p.score.ok_or(Error::MissingScore { index: i })?;
            ranked.push((score, f, i));
        }
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n_gt = gts.iter().flatten().filter(|g| g.class == class).count();
    let mut matched: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let mut tp = Vec::with_capacity(ranked.len());
    for &(_, f, i) in &ranked {
        let p = &preds[f][i];
        let mut best: Option<(f64, usize)> = None;
        for (j, g) in gts[f].iter().enumerate() {
            if g.class != class || matched[f][j] {
                continue;
            }
            let d = bev_distance(p, g);
            if d <= threshold && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        if let Some((_, j)) = best {
            matched[f][j] = true;
        }
        tp.push(best.is_some());
    }

    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut n_tp = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        n_tp += t as usize;
        precision.push(n_tp as f64 / (k + 1) as f64);
        recall.push(if n_gt == 0 { 0.0 } else { n_tp as f64 / n_gt as f64 });
    }
    Ok(PrCurve {
        precision,
        recall,
        tp,
        n_gt,
    })
}

/// Piecewise-linear interpolation with constant extension on the left and `right` past the end.
fn interp(x: f64, xp: &[f64], fp: &[f64], right: f64) -> f64 {
    let last = xp.len() - 1;
    if x < xp[0] {
        return fp[0];
    }
    if x > xp[last] {
        return right;
    }
    let j = xp.partition_point(|v| *v <= x) - 1;
    if j == last {
        return fp[last];
    }
    fp[j] + (fp[j + 1] - fp[j]) * (x - xp[j]) / (xp[j + 1] - xp[j])
}

/// Integrates a PR curve into AP under `cfg`. `None` when there is no ground truth.
pub fn integrate(curve: &PrCurve, cfg: &EvalConfig) -> Option<f64> {
    if curve.n_gt == 0 {
        return None;
    }
    if curve.tp.is_empty() {
        return Some(0.0);
    }
    if cfg.raw_pr_integration {
        let ap = curve
            .tp
            .iter()
            .zip(&curve.precision)
            .filter(|(t, _)| **t)
            .map(|(_, p)| p)
            .sum::<f64>()
            / curve.n_gt as f64;
        return Some(ap);
    }
    let first = (100.0 * cfg.min_recall).round() as usize + 1;
    let kept: Vec<f64> = (first..RECALL_POINTS)
        .map(|k| {
            let r = k as f64 / (RECALL_POINTS - 1) as f64;
            (interp(r, &curve.recall, &curve.precision, 0.0) - cfg.min_precision).max(0.0)
        })
        .collect();
    if kept.is_empty() {
        return Some(0.0);
    }
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    // summation error can push a perfect curve a few ulps past 1
    Some((mean / (1.0 - cfg.min_precision)).min(1.0))
}

/// AP of `class` at one matching threshold; `None` when the class has no ground truth.
pub fn match_and_ap(
    preds: &[Vec<LabeledBox>],
    gts: &[Vec<LabeledBox>],
    threshold: f64,
    class: &str,
) -> Result<Option<f64>> {
    let cfg = EvalConfig {
        class: class.to_string(),
        ..EvalConfig::default()
    };
    Ok(integrate(&pr_curve(preds, gts, threshold, class)?, &cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub class: String,
    /// Keyed by the threshold in metres, formatted with `{}`.
    pub per_threshold_ap: BTreeMap<String, f64>,
    pub mean_ap: f64,
    pub n_gt: usize,
    pub n_pred: usize,
    /// Externally computed NDS, carried through untouched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nds: Option<f64>,
}

pub fn evaluate(preds: &[Vec<LabeledBox>], gts: &[Vec<LabeledBox>], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let mut per_threshold_ap = BTreeMap::new();
    let mut n_gt = 0;
    for &t in &cfg.thresholds {
        let curve = pr_curve(preds, gts, t, &cfg.class)?;
        n_gt = curve.n_gt;
        let ap = integrate(&curve, cfg).ok_or_else(|| Error::NoGroundTruth {
            class: cfg.class.clone(),
        })?;
        per_threshold_ap.insert(format!("{t}"), ap);
    }
    let mean_ap = per_threshold_ap.values().sum::<f64>() / per_threshold_ap.len() as f64;
    let n_pred = preds.iter().flatten().filter(|p| p.class == cfg.class).count();
    Ok(EvalReport {
        class: cfg.class.clone(),
        per_threshold_ap,
        mean_ap,
        n_gt,
        n_pred,
        nds: None,
    })
}

/// `(model − source_only) / (oracle − source_only) × 100`.
pub fn closed_gap(ap_model: f64, ap_source_only: f64, ap_oracle: f64) -> Result<f64> {
    let denom = ap_oracle - ap_source_only;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::ZeroGap(denom));
    }
    Ok((ap_model - ap_source_only) / denom * 100.0)
}
