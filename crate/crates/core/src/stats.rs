//! Sample statistics used by every "mean ± std" report.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample (n − 1) standard deviation; 0 when fewer than two samples.
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Summary { mean: 0.0, std: 0.0, count: 0 };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Summary { mean, std, count: n }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lane_counts_example() {
        let s = Summary::of(&[3.0, 6.0, 9.0]);
        assert_eq!(s.to_string(), "6.00 ± 3.00");
    }

    #[test]
    fn single_and_empty() {
        assert_eq!(Summary::of(&[5.0]).std, 0.0);
        assert_eq!(Summary::of(&[]).count, 0);
    }
}
