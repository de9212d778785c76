//! Design-level error metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean of `|pred - gt| / gt`.
pub fn mae(pred: &[f64], gt: &[f64], ids: &[String]) -> Result<f64> {
    if pred.len() != gt.len() || ids.len() != gt.len() {
        return Err(Error::Domain(format!(
            "mae needs equal lengths, got {} predictions, {} references, {} ids",
            pred.len(),
            gt.len(),
            ids.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::Domain("mae over an empty design set".into()));
    }
    let mut total = 0.0;
    for ((p, g), id) in pred.iter().zip(gt).zip(ids) {
        if *g == 0.0 {
            return Err(Error::Domain(format!("design {id} has zero ground truth")));
        }
        total += ((p - g) / g).abs();
    }
    Ok(total / gt.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignEval {
    pub id: String,
    pub pred_delay: f64,
    pub gt_delay: f64,
    pub pred_area: f64,
    pub gt_area: f64,
    /// Pre-synthesis metrics, used as the baseline prediction.
    pub base_delay: f64,
    pub base_area: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub designs: Vec<DesignEval>,
    pub delay_mae: f64,
    pub area_mae: f64,
    pub baseline_delay_mae: f64,
    pub baseline_area_mae: f64,
}

impl EvalSummary {
    pub fn from_designs(designs: Vec<DesignEval>) -> Result<Self> {
        let ids: Vec<String> = designs.iter().map(|d| d.id.clone()).collect();
        let col = |f: fn(&DesignEval) -> f64| designs.iter().map(f).collect::<Vec<_>>();
        let (gt_d, gt_a) = (col(|d| d.gt_delay), col(|d| d.gt_area));
        Ok(EvalSummary {
            delay_mae: mae(&col(|d| d.pred_delay), &gt_d, &ids)?,
            area_mae: mae(&col(|d| d.pred_area), &gt_a, &ids)?,
            baseline_delay_mae: mae(&col(|d| d.base_delay), &gt_d, &ids)?,
            baseline_area_mae: mae(&col(|d| d.base_area), &gt_a, &ids)?,
            designs,
        })
    }

    pub fn report(&self) -> String {
        format!(
            "designs: {}\n\
             delay MAE: model {:.4}%  baseline {:.4}%  ratio {:.3}\n\
             area  MAE: model {:.4}%  baseline {:.4}%  ratio {:.3}\n",
            self.designs.len(),
            100.0 * self.delay_mae,
            100.0 * self.baseline_delay_mae,
            self.delay_mae / self.baseline_delay_mae,
            100.0 * self.area_mae,
            100.0 * self.baseline_area_mae,
            self.area_mae / self.baseline_area_mae,
        )
    }
}
