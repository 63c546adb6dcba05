use serde::{Deserialize, Serialize};

use crate::diff::sigmoid;
use crate::pointcloud::Label;
use crate::{Error, Result};

/// Probabilities are clamped to this range before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FocalLossParams {
    pub alpha_vehicle: f64,
    pub alpha_pedestrian: f64,
    pub gamma: f64,
}

impl Default for FocalLossParams {
    fn default() -> Self {
        FocalLossParams {
            alpha_vehicle: 0.8,
            alpha_pedestrian: 0.95,
            gamma: 2.0,
        }
    }
}

impl FocalLossParams {
    pub fn validate(&self) -> Result<()> {
        for a in [self.alpha_vehicle, self.alpha_pedestrian] {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::invalid(format!("focal alpha must be in (0, 1), got {a}")));
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("focal gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// α of output channel 0 (vehicle) or 1 (pedestrian).
    pub fn alpha(&self, channel: usize) -> f64 {
        if channel == 0 {
            self.alpha_vehicle
        } else {
            self.alpha_pedestrian
        }
    }
}

/// `−a_t (1 − p_t)^γ log p_t` for one binary channel, where `p` is the
/// predicted probability of the positive class.
pub fn focal_term(p: f64, positive: bool, alpha: f64, gamma: f64) -> f64 {
    let (p_t, a_t) = if positive { (p, alpha) } else { (1.0 - p, 1.0 - alpha) };
    let p_t = p_t.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -a_t * (1.0 - p_t).powf(gamma) * p_t.ln()
}

/// Channel targets of a label: (vehicle, pedestrian).
pub fn targets(label: Label) -> [bool; 2] {
    [label == Label::Vehicle, label == Label::Pedestrian]
}

/// Loss value and its gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalOutput {
    pub loss: f64,
    /// N×2, same layout as the logits.
    pub grad: Vec<f64>,
}

/// Mean focal loss over all points and both channels of N×2 `logits`.
pub fn focal_loss(logits: &[f64], labels: &[Label], params: &FocalLossParams) -> Result<FocalOutput> {
    if logits.len() != 2 * labels.len() {
        return Err(Error::shape("focal_loss", 2 * labels.len(), logits.len()));
    }
    if labels.is_empty() {
        return Err(Error::invalid("focal_loss of an empty cloud"));
    }
    let g = params.gamma;
    let scale = 1.0 / logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (i, &label) in labels.iter().enumerate() {
        for (c, t) in targets(label).into_iter().enumerate() {
            let z = logits[2 * i + c];
            let sign = if t { 1.0 } else { -1.0 };
            let alpha = params.alpha(c);
            let a_t = if t { alpha } else { 1.0 - alpha };
            let p_t = sigmoid(sign * z).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let q = 1.0 - p_t;
            let log_p = p_t.ln();
            loss += -a_t * q.powf(g) * log_p;
            // d/dz of −a_t q^γ log p_t with dp_t/dz = sign · p_t q.
            grad[2 * i + c] = sign * a_t * q.powf(g) * (g * p_t * log_p - q) * scale;
        }
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite("focal loss".into()));
    }
    Ok(FocalOutput { loss, grad })
}
