use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::simplex::Composition;

/// Time-indexed compositions. Observation `i` sits at integer time
/// `start + i`; `epoch` is the calendar date of time `start`, if known.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionalSeries {
    observations: Vec<Composition>,
    start: i64,
    epoch: Option<NaiveDate>,
}

impl CompositionalSeries {
    /// Series starting at time 1.
    pub fn new(observations: Vec<Composition>) -> Result<Self> {
        Self::with_start(observations, 1)
    }

    pub fn with_start(observations: Vec<Composition>, start: i64) -> Result<Self> {
        if let Some(first) = observations.first() {
            let j = first.len();
            if let Some(row) = observations.iter().position(|o| o.len() != j) {
                return Err(Error::Data {
                    row,
                    message: format!("expected {j} components, found {}", observations[row].len()),
                });
            }
        }
        Ok(Self { observations, start, epoch: None })
    }

    pub fn with_epoch(mut self, epoch: NaiveDate) -> Self {
        self.epoch = Some(epoch);
        self
    }

    pub fn observations(&self) -> &[Composition] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn components(&self) -> usize {
        self.observations.first().map_or(0, Composition::len)
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn epoch(&self) -> Option<NaiveDate> {
        self.epoch
    }

    /// Integer time of observation `i`.
    pub fn time(&self, i: usize) -> i64 {
        self.start + i as i64
    }

    /// Calendar date of time `t`, when an epoch is known.
    pub fn date(&self, t: i64) -> Option<NaiveDate> {
        self.epoch.map(|e| e + chrono::Duration::days(t - self.start))
    }

    /// First `n` observations.
    pub fn head(&self, n: usize) -> Self {
        Self { observations: self.observations[..n.min(self.len())].to_vec(), start: self.start, epoch: self.epoch }
    }

    /// Observations from index `from` on, keeping their times.
    pub fn tail_from(&self, from: usize) -> Self {
        Self {
            observations: self.observations[from.min(self.len())..].to_vec(),
            start: self.start + from as i64,
            epoch: self.epoch.map(|e| e + chrono::Duration::days(from as i64)),
        }
    }

    pub fn push(&mut self, y: Composition) -> Result<()> {
        if !self.observations.is_empty() && y.len() != self.components() {
            return Err(Error::Data { row: self.len(), message: "component count changed".into() });
        }
        self.observations.push(y);
        Ok(())
    }
}
