//! k-nearest neighbours over ternary vectors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub points: Vec<Vec<i8>>,
    pub labels: Vec<bool>,
}

/// Squared Euclidean distance; exact in integers for ternary inputs.
pub fn squared_distance(a: &[i8], b: &[i8]) -> i64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = i64::from(x) - i64::from(y);
            d * d
        })
        .sum()
}

impl Knn {
    pub fn fit(x: &[Vec<i8>], y: &[bool], k: usize) -> Self {
        Self {
            k: k.max(1),
            points: x.to_vec(),
            labels: y.to_vec(),
        }
    }

    /// Training indices of the `k` nearest points, nearest first; equal
    /// distances go to the lower index.
    pub fn neighbours(&self, x: &[i8]) -> Vec<usize> {
        let mut order: Vec<(i64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (squared_distance(p, x), i))
            .collect();
        order.sort_unstable();
        order.into_iter().take(self.k).map(|(_, i)| i).collect()
    }

    /// Fraction of the neighbours that are positive.
    pub fn score(&self, x: &[i8]) -> f64 {
        let near = self.neighbours(x);
        if near.is_empty() {
            return 0.0;
        }
        near.iter().filter(|&&i| self.labels[i]).count() as f64 / near.len() as f64
    }
}
