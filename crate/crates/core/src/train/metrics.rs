use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BatchLoss, Stage};
use crate::error::{Error, Result};

/// Epoch means over batches, weighted by batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub stage: Stage,
    pub epoch: usize,
    pub lr: f64,
    pub l_cls: f64,
    pub l_recon: f64,
    pub l_con: f64,
    pub l_diff: f64,
    pub l_total: f64,
    /// Accuracy on real features, or on generated ones in the diffusion stage.
    pub train_acc: f64,
    /// Accuracy on the epoch-selection set, when one is configured.
    pub select_acc: Option<f64>,
}

impl EpochMetrics {
    pub(super) fn from_batches(stage: Stage, epoch: usize, lr: f64, batches: &[BatchLoss]) -> Self {
        let n: usize = batches.iter().map(|b| b.n).sum();
        let mean = |f: fn(&BatchLoss) -> f64| batches.iter().map(|b| f(b) * b.n as f64).sum::<f64>() / n.max(1) as f64;
        Self {
            stage,
            epoch,
            lr,
            l_cls: mean(|b| b.cls),
            l_recon: mean(|b| b.recon),
            l_con: mean(|b| b.con),
            l_diff: mean(|b| b.diff),
            l_total: mean(|b| b.total),
            train_acc: batches.iter().map(|b| b.correct).sum::<usize>() as f64 / n.max(1) as f64,
            select_acc: None,
        }
    }
}

pub const METRICS_HEADER: &str = "stage,epoch,lr,L_cls,L_recon,L_con,L_diff,L,train_acc,select_acc";

pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for m in history {
        let _ = write!(
            s,
            "{},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},",
            m.stage, m.epoch, m.lr, m.l_cls, m.l_recon, m.l_con, m.l_diff, m.l_total, m.train_acc
        );
        if let Some(a) = m.select_acc {
            let _ = write!(s, "{a:.8e}");
        }
        s.push('\n');
    }
    s
}

pub fn write_metrics_csv(path: impl AsRef<Path>, history: &[EpochMetrics]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, metrics_csv(history)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let m = EpochMetrics {
            stage: Stage::Joint,
            epoch: 3,
            lr: 0.1,
            l_cls: 1.0,
            l_recon: 0.5,
            l_con: 2.0,
            l_diff: 0.65,
            l_total: 1.65,
            train_acc: 0.75,
            select_acc: None,
        };
        let csv = metrics_csv(&[m]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(
            lines[1],
            "joint,3,1.00000000e-1,1.00000000e0,5.00000000e-1,2.00000000e0,6.50000000e-1,1.65000000e0,7.50000000e-1,"
        );
    }
}
