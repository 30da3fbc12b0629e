//! ROC analysis of completed runs.
//!
//! The ROC curve is exact: every distinct score is a threshold, ties form a
//! single step, and `+inf`/`-inf` sentinels pin the `(0,0)` and `(1,1)` ends.
//!
//! The target-detectability and background-suppressibility areas integrate
//! TPR and FPR over the threshold itself. Thresholds are taken on scores
//! min-max normalized over the evaluated pixels of the run, so both areas lie
//! in `[0, 1]`:
//!
//! ```text
//! AUC_TD = (AUC + AUC_TPR,tau) / 2
//! AUC_BS = (AUC - AUC_FPR,tau + 1) / 2
//! ```

use crate::cube::{mask_for_stream, GroundTruthMask, ScoredLine, StreamConfig};
use crate::detectors::ScoreKind;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// Descending, starting at `+inf` and ending at `-inf`.
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub positives: usize,
    pub negatives: usize,
}

impl RocCurve {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Data(format!("non-finite score at {i}")));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Data("labels must be 0 or 1".into()));
    }
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::MetricUndefined(format!(
            "need both classes, got {positives} positives and {negatives} negatives"
        )));
    }
    Ok((positives, negatives))
}

/// Exact ROC curve; a pixel is called anomalous when its score is `>= tau`.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    let (positives, negatives) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut thresholds = vec![f64::INFINITY];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(s);
        tpr.push(tp as f64 / positives as f64);
        fpr.push(fp as f64 / negatives as f64);
    }
    thresholds.push(f64::NEG_INFINITY);
    tpr.push(1.0);
    fpr.push(1.0);
    Ok(RocCurve {
        thresholds,
        tpr,
        fpr,
        positives,
        negatives,
    })
}

/// Trapezoidal area under TPR over FPR.
pub fn auc(roc: &RocCurve) -> f64 {
    roc.fpr
        .windows(2)
        .zip(roc.tpr.windows(2))
        .map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) * 0.5)
        .sum()
}

pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(auc(&roc_curve(scores, labels)?))
}

/// Scores rescaled to `[0, 1]` by the observed min and max.
pub fn minmax_normalize(scores: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if !(hi > lo) {
        return Err(Error::MetricUndefined(
            "scores are constant, threshold range is empty".into(),
        ));
    }
    let span = hi - lo;
    Ok(scores.iter().map(|s| (s - lo) / span).collect())
}

/// Areas under TPR(tau) and FPR(tau) for tau over `[0, 1]`, on normalized
/// scores. Both rates are step functions of tau, so the integral is exact.
pub fn threshold_areas(normalized: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    let roc = roc_curve(normalized, labels)?;
    // Walk thresholds upward: on (prev, tau_k] the rates equal those at tau_k.
    let mut area_tpr = 0.0;
    let mut area_fpr = 0.0;
    let mut prev = 0.0;
    for k in (1..roc.len() - 1).rev() {
        let tau = roc.thresholds[k].clamp(0.0, 1.0);
        area_tpr += (tau - prev) * roc.tpr[k];
        area_fpr += (tau - prev) * roc.fpr[k];
        prev = tau;
    }
    Ok((area_tpr, area_fpr))
}

/// `(AUC_TD, AUC_BS)` for raw scores.
pub fn auc_td_bs(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    let base = roc_auc(scores, labels)?;
    let normalized = minmax_normalize(scores)?;
    let (a_tpr, a_fpr) = threshold_areas(&normalized, labels)?;
    Ok(((base + a_tpr) / 2.0, (base - a_fpr + 1.0) / 2.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocSummary {
    /// Descending thresholds on min-max normalized scores, with sentinels.
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auc: f64,
    pub auc_td: f64,
    pub auc_bs: f64,
}

pub fn summarize(scores: &[f64], labels: &[u8]) -> Result<RocSummary> {
    let normalized = minmax_normalize(scores)?;
    // Min-max rescaling is monotone, so the ROC is unchanged by it.
    let roc = roc_curve(&normalized, labels)?;
    let base = auc(&roc);
    let (a_tpr, a_fpr) = threshold_areas(&normalized, labels)?;
    Ok(RocSummary {
        auc: base,
        auc_td: (base + a_tpr) / 2.0,
        auc_bs: (base - a_fpr + 1.0) / 2.0,
        thresholds: roc.thresholds,
        tpr: roc.tpr,
        fpr: roc.fpr,
    })
}

/// Scores and labels of every evaluated pixel: lines flagged warmup and the
/// first `buffer_len` lines of the stream are left out for every detector.
pub fn collect_evaluated(
    lines: &[ScoredLine],
    mask: &GroundTruthMask,
    cfg: &StreamConfig,
    kind: ScoreKind,
) -> Result<(Vec<f64>, Vec<u8>)> {
    let aligned = mask_for_stream(mask, cfg);
    if lines.len() != aligned.lines() {
        return Err(Error::dim(format!(
            "{} scored lines for a {}-line mask",
            lines.len(),
            aligned.lines()
        )));
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for line in lines {
        if line.index >= aligned.lines() {
            return Err(Error::dim(format!("line index {} outside mask", line.index)));
        }
        let values = match kind {
            ScoreKind::Raw => &line.raw_scores,
            ScoreKind::Normalized => &line.norm_scores,
        };
        if values.len() != aligned.pixels() {
            return Err(Error::dim(format!(
                "line {} has {} scores for {} mask pixels",
                line.index,
                values.len(),
                aligned.pixels()
            )));
        }
        if line.warmup || line.index < cfg.buffer_len {
            continue;
        }
        scores.extend_from_slice(values);
        labels.extend_from_slice(aligned.row(line.index));
    }
    if scores.is_empty() {
        return Err(Error::MetricUndefined("every line is warmup".into()));
    }
    Ok((scores, labels))
}

pub fn evaluate_run(
    lines: &[ScoredLine],
    mask: &GroundTruthMask,
    cfg: &StreamConfig,
    kind: ScoreKind,
) -> Result<RocSummary> {
    let (scores, labels) = collect_evaluated(lines, mask, cfg, kind)?;
    summarize(&scores, &labels)
}

/// One row of the results table.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub detector: String,
    pub dataset: String,
    pub direction: String,
    pub seed: u64,
    pub auc: f64,
    pub auc_td: f64,
    pub auc_bs: f64,
    pub lps: f64,
    pub warmup_lines: usize,
    pub config: String,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub detector: String,
    pub dataset: String,
    pub direction: String,
    pub runs: usize,
    pub auc: (f64, f64),
    pub auc_td: (f64, f64),
    pub auc_bs: (f64, f64),
    pub lps: (f64, f64),
    pub warmup_lines: usize,
}

/// Groups records by detector, dataset and direction, in first-seen order.
pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for r in records {
        let key = (r.detector.clone(), r.dataset.clone(), r.direction.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(detector, dataset, direction)| {
            let group: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.detector == detector && r.dataset == dataset && r.direction == direction)
                .collect();
            let col = |f: fn(&RunRecord) -> f64| mean_sd(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            Aggregate {
                runs: group.len(),
                auc: col(|r| r.auc),
                auc_td: col(|r| r.auc_td),
                auc_bs: col(|r| r.auc_bs),
                lps: col(|r| r.lps),
                warmup_lines: group[0].warmup_lines,
                detector,
                dataset,
                direction,
            }
        })
        .collect()
}
