use serde::{Deserialize, Serialize};

use super::metrics::{ConfusionMatrix, Metrics};
use super::trainer::{evaluate, train, TrainConfig};
use crate::net::NetworkSpec;
use crate::pointcloud::{Field, PointCloud};
use crate::{derive_seed, Result};

/// Input properties removed in one ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoSigma,
    NoDoppler,
    NoDopplerNoSigma,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoSigma, Ablation::NoDoppler, Ablation::NoDopplerNoSigma];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoSigma => "-sigma",
            Ablation::NoDoppler => "-v_r",
            Ablation::NoDopplerNoSigma => "-v_r -sigma",
        }
    }

    pub fn dropped(self) -> &'static [Field] {
        match self {
            Ablation::Full => &[],
            Ablation::NoSigma => &[Field::Sigma],
            Ablation::NoDoppler => &[Field::Vr],
            Ablation::NoDopplerNoSigma => &[Field::Vr, Field::Sigma],
        }
    }

    /// `spec` with the dropped fields removed from coordinates, features and
    /// the pre-processing input.
    pub fn apply(self, spec: &NetworkSpec) -> NetworkSpec {
        let mut out = spec.clone();
        for &f in self.dropped() {
            out.input_layout = out.input_layout.without(f);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub config: Ablation,
    pub name: String,
    pub best_epoch: usize,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
}

/// Retrains `spec` once per configuration with the same seed and scores each
/// best checkpoint on `eval`.
pub fn ablate_features(
    train_set: &[PointCloud],
    eval: &[PointCloud],
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    configs: &[Ablation],
) -> Result<Vec<AblationRow>> {
    configs
        .iter()
        .map(|&a| {
            let s = a.apply(spec);
            let outcome = train(train_set, &s, cfg)?;
            let ev = evaluate(eval, &s, &outcome.best, derive_seed(cfg.seed, 4))?;
            Ok(AblationRow {
                config: a,
                name: a.name().into(),
                best_epoch: outcome.best_epoch,
                metrics: ev.metrics,
                confusion: ev.confusion,
            })
        })
        .collect()
}
