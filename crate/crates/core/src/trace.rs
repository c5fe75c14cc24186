//! Loss traces and live progress reporting for the iterative optimizers.

use std::io::Write;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Objective values recorded during an optimization run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub epochs: Vec<usize>,
    pub losses: Vec<f64>,
}

impl LossTrace {
    pub fn push(&mut self, epoch: usize, loss: f64) {
        self.epochs.push(epoch);
        self.losses.push(loss);
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    /// Trailing means over `window` consecutive records.
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        if window == 0 || self.losses.len() < window {
            return Vec::new();
        }
        self.losses.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,loss")?;
        for (e, l) in self.epochs.iter().zip(&self.losses) {
            writeln!(w, "{e},{l}")?;
        }
        Ok(())
    }
}

/// Lock-free status shared between a running fit and pollers.
#[derive(Debug)]
pub struct Progress {
    epoch: AtomicUsize,
    total_epochs: AtomicUsize,
    loss_bits: AtomicU64,
}

impl Default for Progress {
    fn default() -> Self {
        Progress {
            epoch: AtomicUsize::new(0),
            total_epochs: AtomicUsize::new(0),
            loss_bits: AtomicU64::new(f64::NAN.to_bits()),
        }
    }
}

impl Progress {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn start(&self, total_epochs: usize) {
        self.total_epochs.store(total_epochs, Ordering::Relaxed);
        self.epoch.store(0, Ordering::Relaxed);
    }

    pub(crate) fn update(&self, epoch: usize, loss: Option<f64>) {
        self.epoch.store(epoch, Ordering::Relaxed);
        if let Some(l) = loss {
            self.loss_bits.store(l.to_bits(), Ordering::Relaxed);
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch.load(Ordering::Relaxed)
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs.load(Ordering::Relaxed)
    }

    /// Most recent objective value, if one has been evaluated.
    pub fn loss(&self) -> Option<f64> {
        let l = f64::from_bits(self.loss_bits.load(Ordering::Relaxed));
        (!l.is_nan()).then_some(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_and_csv() {
        let mut t = LossTrace::default();
        for (e, l) in [4.0, 2.0, 3.0, 1.0].into_iter().enumerate() {
            t.push(e, l);
        }
        assert_eq!(t.moving_average(2), vec![3.0, 2.5, 2.0]);
        assert!(t.moving_average(5).is_empty());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,loss\n0,4\n1,2\n2,3\n3,1\n");
    }

    #[test]
    fn progress_reports_latest_loss() {
        let p = Progress::new();
        assert_eq!(p.loss(), None);
        p.start(10);
        p.update(3, Some(1.25));
        p.update(4, None);
        assert_eq!((p.epoch(), p.total_epochs(), p.loss()), (4, 10, Some(1.25)));
    }
}
