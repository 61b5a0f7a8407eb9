//! Multiplication tallies.
//!
//! Counts are in real multiplications: a complex product costs 4, a squared
//! magnitude 2, a complex-by-real scaling 2.

pub const COMPLEX_MUL: u64 = 4;
pub const COMPLEX_NORM: u64 = 2;
pub const COMPLEX_SCALE: u64 = 2;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpTally {
    /// Work done once before the first iteration (frequency responses, initial guess).
    pub setup: u64,
    /// Work done in each iteration, in order.
    pub per_iteration: Vec<u64>,
}

impl OpTally {
    pub fn total(&self) -> u64 {
        self.setup + self.per_iteration.iter().sum::<u64>()
    }

    pub fn mean_per_iteration(&self) -> f64 {
        if self.per_iteration.is_empty() {
            return 0.0;
        }
        self.per_iteration.iter().sum::<u64>() as f64 / self.per_iteration.len() as f64
    }
}
