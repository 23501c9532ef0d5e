//! Deterministic summation.

use std::iter::FromIterator;

/// Neumaier-compensated running sum, accumulated in iteration order.
#[derive(Debug, Clone, Copy, Default)]
pub struct OrderedSum {
    sum: f64,
    compensation: f64,
}

impl OrderedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for OrderedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = OrderedSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}
