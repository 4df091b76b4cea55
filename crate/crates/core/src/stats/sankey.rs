use serde::{Deserialize, Serialize};

use super::metrics::ConfusionMatrix;
use crate::{Error, Result};

/// Confusion flows with each ground-truth class normalized to unit weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SankeyFlows {
    pub normal_to_normal: f64,
    pub normal_to_abnormal: f64,
    pub abnormal_to_normal: f64,
    pub abnormal_to_abnormal: f64,
}

impl SankeyFlows {
    pub fn predicted_normal_width(&self) -> f64 {
        self.normal_to_normal + self.abnormal_to_normal
    }

    pub fn predicted_abnormal_width(&self) -> f64 {
        self.normal_to_abnormal + self.abnormal_to_abnormal
    }

    /// `(truth, predicted, flow)` rows.
    pub fn rows(&self) -> [(&'static str, &'static str, f64); 4] {
        [
            ("normal", "normal", self.normal_to_normal),
            ("normal", "abnormal", self.normal_to_abnormal),
            ("abnormal", "normal", self.abnormal_to_normal),
            ("abnormal", "abnormal", self.abnormal_to_abnormal),
        ]
    }
}

pub fn export_sankey(cm: &ConfusionMatrix) -> Result<SankeyFlows> {
    let negatives = cm.tn + cm.fp;
    let positives = cm.tp + cm.fn_;
    if negatives == 0 || positives == 0 {
        return Err(Error::Empty("ground-truth class"));
    }
    let (neg, pos) = (negatives as f64, positives as f64);
    Ok(SankeyFlows {
        normal_to_normal: cm.tn as f64 / neg,
        normal_to_abnormal: cm.fp as f64 / neg,
        abnormal_to_normal: cm.fn_ as f64 / pos,
        abnormal_to_abnormal: cm.tp as f64 / pos,
    })
}
