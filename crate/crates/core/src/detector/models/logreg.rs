//! L2-regularized logistic regression fitted by full-batch gradient descent.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            l2: 1e-2,
            epochs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogReg {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogReg {
    fn margin(&self, x: &[i8]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(x)
                .map(|(w, &v)| w * f64::from(v))
                .sum::<f64>()
    }

    pub fn score(&self, x: &[i8]) -> f64 {
        sigmoid(self.margin(x))
    }

    /// Mean log-loss plus `l2/2 · ‖w‖²` (bias unpenalized).
    pub fn loss(&self, x: &[Vec<i8>], y: &[bool], l2: f64) -> f64 {
        let data: f64 = x
            .iter()
            .zip(y)
            .map(|(xi, &yi)| {
                let z = self.margin(xi);
                if yi {
                    softplus(-z)
                } else {
                    softplus(z)
                }
            })
            .sum::<f64>()
            / x.len().max(1) as f64;
        data + 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn fit(x: &[Vec<i8>], y: &[bool], params: LogRegParams) -> Self {
        Self::fit_traced(x, y, params).0
    }

    /// Fits and returns the loss before the first and after every epoch.
    ///
    /// The step is capped at `1/L`, where `L = ¼·max‖(x,1)‖² + l2` bounds the
    /// loss curvature, so each step is a descent step.
    pub fn fit_traced(x: &[Vec<i8>], y: &[bool], params: LogRegParams) -> (Self, Vec<f64>) {
        let dim = x.first().map_or(0, Vec::len);
        let mut model = Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        };
        let mut losses = vec![model.loss(x, y, params.l2)];
        if x.is_empty() {
            return (model, losses);
        }
        let max_norm = x
            .iter()
            .map(|xi| xi.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>() + 1.0)
            .fold(0.0, f64::max);
        let step = params.learning_rate.min(1.0 / (0.25 * max_norm + params.l2));
        let n = x.len() as f64;
        for _ in 0..params.epochs {
            let mut grad_w = vec![0.0; dim];
            let mut grad_b = 0.0;
            for (xi, &yi) in x.iter().zip(y) {
                let residual = model.score(xi) - f64::from(u8::from(yi));
                grad_b += residual;
                for (g, &v) in grad_w.iter_mut().zip(xi) {
                    *g += residual * f64::from(v);
                }
            }
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= step * (g / n + params.l2 * *w);
            }
            model.bias -= step * grad_b / n;
            losses.push(model.loss(x, y, params.l2));
        }
        (model, losses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separates_on_one_coordinate() {
        let x = vec![vec![1, 0], vec![1, -1], vec![-1, 1], vec![-1, 0]];
        let y = vec![true, true, false, false];
        let model = LogReg::fit(&x, &y, LogRegParams::default());
        assert!(model.score(&[1, 0]) > 0.5);
        assert!(model.score(&[-1, 0]) < 0.5);
    }

    #[test]
    fn stable_sigmoid_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn loss_never_increases(
            rows in prop::collection::vec((prop::collection::vec(-1i8..=1, 6), any::<bool>()), 1..30)
        ) {
            let (x, y): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
            let (_, losses) = LogReg::fit_traced(&x, &y, LogRegParams::default());
            for pair in losses.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-12, "{} -> {}", pair[0], pair[1]);
            }
        }
    }
}
