//! FAR/QER metrics, global-threshold rejection and ROC sweeps.
//!
//! A false alarm (FA) is a misclassification whose prediction is one of the
//! known queries; any misclassification is a query error (QE). Rates divide
//! by the total example count, so `FAR <= QER` always. Accuracy is `1 - QER`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("empty record list")]
    Empty,
    #[error("no threshold reaches FAR <= {target}; best achievable is FAR {far:.4} / QER {qer:.4} at alpha {alpha}")]
    TargetFarUnreachable { target: f64, alpha: f32, far: f64, qer: f64 },
}

/// One scored example: ground truth, raw argmax prediction and its
/// probability. Thresholded decisions are recomputed from `top_prob`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub truth: usize,
    pub pred: usize,
    pub top_prob: f32,
}

impl EvalRecord {
    /// Builds a record from a probability vector (argmax, ties to the lowest
    /// class id).
    pub fn from_probs(truth: usize, probs: &[f32]) -> Self {
        let (pred, top) = argmax(probs);
        EvalRecord {
            truth,
            pred,
            top_prob: top,
        }
    }

    fn pred_at(&self, alpha: f32, unknown: usize) -> usize {
        if self.top_prob >= alpha {
            self.pred
        } else {
            unknown
        }
    }
}

/// Index of the largest probability; ties break toward the lowest class id.
pub fn argmax(probs: &[f32]) -> (usize, f32) {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    (best, probs[best])
}

/// Rejects predictions whose top probability falls below `alpha`: returns
/// the argmax class if its probability is `>= alpha`, else `unknown`.
pub fn apply_threshold(probs: &[f32], alpha: f32, unknown: usize) -> usize {
    let (pred, top) = argmax(probs);
    if top >= alpha {
        pred
    } else {
        unknown
    }
}

/// One point of the ROC sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub alpha: f32,
    pub far: f64,
    pub qer: f64,
}

fn rates_at(records: &[EvalRecord], alpha: f32, unknown: usize) -> (f64, f64) {
    let mut fas = 0usize;
    let mut qes = 0usize;
    for r in records {
        let pred = r.pred_at(alpha, unknown);
        if pred != r.truth {
            qes += 1;
            if pred != unknown {
                fas += 1;
            }
        }
    }
    let n = records.len() as f64;
    (fas as f64 / n, qes as f64 / n)
}

/// False alarm rate of raw (unthresholded) predictions.
pub fn far(records: &[EvalRecord], unknown: usize) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(rates_at(records, 0.0, unknown).0)
}

/// Query error rate of raw (unthresholded) predictions.
pub fn qer(records: &[EvalRecord], unknown: usize) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(rates_at(records, 0.0, unknown).1)
}

/// 200 steps from 0 to 0.9999, dense near 1 (geometric in `1 - alpha`), with
/// both endpoints exact.
pub fn default_alpha_grid() -> Vec<f32> {
    let n = 200;
    let mut grid: Vec<f32> = (0..=n)
        .map(|i| {
            if i == 0 {
                0.0
            } else if i == n {
                0.9999
            } else {
                1.0 - 10f32.powf(-4.0 * i as f32 / n as f32)
            }
        })
        .collect();
    grid.dedup();
    grid
}

/// Scores every alpha in the grid, recomputing thresholded predictions per
/// point. FAR is non-increasing in alpha.
pub fn roc_sweep(records: &[EvalRecord], alphas: &[f32], unknown: usize) -> Vec<RocPoint> {
    alphas
        .iter()
        .map(|&alpha| {
            let (far, qer) = rates_at(records, alpha, unknown);
            RocPoint { alpha, far, qer }
        })
        .collect()
}

/// The operating point chosen on a validation split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub alpha: f32,
    pub far: f64,
    pub qer: f64,
}

/// Smallest grid alpha whose FAR meets the target. If no alpha does, the
/// error carries the best achievable point.
pub fn pick_alpha(
    records: &[EvalRecord],
    target_far: f64,
    alphas: &[f32],
    unknown: usize,
) -> Result<ThresholdChoice, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let sweep = roc_sweep(records, alphas, unknown);
    let mut best = sweep[0];
    for point in &sweep {
        if point.far <= target_far {
            return Ok(ThresholdChoice {
                alpha: point.alpha,
                far: point.far,
                qer: point.qer,
            });
        }
        if point.far < best.far {
            best = *point;
        }
    }
    Err(EvalError::TargetFarUnreachable {
        target: target_far,
        alpha: best.alpha,
        far: best.far,
        qer: best.qer,
    })
}
