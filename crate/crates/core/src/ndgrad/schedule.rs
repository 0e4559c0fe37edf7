//! Cosine-annealed learning-rate cycles.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// One annealing cycle: cosine interpolation from `start_lr` down to
/// `end_lr` over `epochs` epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub start_lr: f64,
    pub end_lr: f64,
    pub epochs: usize,
}

/// A sequence of cosine cycles. The conventional construction starts
/// cycle `i` (1-based) at `10^-i` and anneals to `1e-6`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub cycles: Vec<Cycle>,
}

impl LrSchedule {
    /// Cycles of the given epoch lengths with start lr `10^-i` for the
    /// i-th cycle and end lr `1e-6`.
    pub fn decade_cycles(lengths: &[usize]) -> Self {
        let cycles = lengths
            .iter()
            .enumerate()
            .map(|(i, &epochs)| Cycle {
                start_lr: 10f64.powi(-(i as i32 + 1)),
                end_lr: 1e-6,
                epochs,
            })
            .collect();
        Self { cycles }
    }

    pub fn total_epochs(&self) -> usize {
        self.cycles.iter().map(|c| c.epochs).sum()
    }

    /// Learning rate at a fractional position inside an epoch.
    /// `step_fraction` in `[0, 1]` is the progress through the epoch, so
    /// `lr_at(last_epoch, 1.0)` is the cycle's end lr.
    pub fn lr_at(&self, epoch: usize, step_fraction: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&step_fraction) {
            return Err(Error::Contract {
                op: "lr_at",
                detail: format!("step_fraction {step_fraction} outside [0, 1]"),
            });
        }
        let mut offset = 0usize;
        for cycle in &self.cycles {
            if epoch < offset + cycle.epochs {
                let t = (epoch - offset) as f64 + step_fraction;
                let span = cycle.epochs as f64;
                let cosine = (1.0 + (std::f64::consts::PI * t / span).cos()) / 2.0;
                return Ok(cycle.end_lr + (cycle.start_lr - cycle.end_lr) * cosine);
            }
            offset += cycle.epochs;
        }
        Err(Error::Contract {
            op: "lr_at",
            detail: format!(
                "epoch {epoch} beyond schedule length {}",
                self.total_epochs()
            ),
        })
    }
}
