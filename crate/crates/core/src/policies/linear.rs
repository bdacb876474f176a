use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{argmax, softmax, Adam};
use super::{LossCurve, LossRow, PolicyError, TrainConfig};

/// Softmax regression `logits = W x + b`, weights stored input-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub n_in: usize,
    pub n_out: usize,
    pub params: Vec<f64>,
}

impl LinearClassifier {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        LinearClassifier { n_in, n_out, params: vec![0.0; (n_in + 1) * n_out] }
    }

    pub fn random(n_in: usize, n_out: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Self::zeros(n_in, n_out);
        c.params.iter_mut().for_each(|p| *p = rng.gen_range(-scale..scale));
        c
    }

    fn bias(&self) -> &[f64] {
        &self.params[self.n_in * self.n_out..]
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias().to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &self.params[i * self.n_out..(i + 1) * self.n_out];
                for (o, w) in out.iter_mut().zip(row) {
                    *o += xi * w;
                }
            }
        }
        out
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Summed cross-entropy over `batch`, accumulating gradients into `grad`.
    pub fn loss_and_grad(&self, batch: &[(&[f64], usize)], grad: &mut [f64]) -> f64 {
        let mut loss = 0.0;
        let bias = self.n_in * self.n_out;
        for &(x, y) in batch {
            let mut p = self.logits(x);
            let lse = softmax(&mut p);
            let raw = self.logits(x)[y];
            loss += lse - raw;
            p[y] -= 1.0;
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0.0 {
                    for (g, d) in grad[i * self.n_out..(i + 1) * self.n_out].iter_mut().zip(&p) {
                        *g += xi * d;
                    }
                }
            }
            for (g, d) in grad[bias..].iter_mut().zip(&p) {
                *g += d;
            }
        }
        loss
    }

    /// Mean loss and accuracy.
    pub fn evaluate(&self, data: &[(Vec<f64>, usize)]) -> (f64, f64) {
        if data.is_empty() {
            return (0.0, 0.0);
        }
        let mut loss = 0.0;
        let mut correct = 0;
        for (x, y) in data {
            let mut p = self.logits(x);
            let lse = softmax(&mut p);
            loss += lse - self.logits(x)[*y];
            if self.predict(x) == *y {
                correct += 1;
            }
        }
        (loss / data.len() as f64, correct as f64 / data.len() as f64)
    }

    /// Mini-batch Adam on cross-entropy. Rows of the curve come before training (epoch 0) and after each epoch.
    pub fn train(
        &mut self,
        train: &[(Vec<f64>, usize)],
        valid: &[(Vec<f64>, usize)],
        cfg: &TrainConfig,
    ) -> Result<LossCurve, PolicyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut opt = Adam::new(self.params.len(), cfg.lr);
        let mut curve = LossCurve::default();
        let record = |me: &Self, epoch: usize, curve: &mut LossCurve| {
            for (split, data) in [("train", train), ("valid", valid)] {
                if !data.is_empty() {
                    let (loss, accuracy) = me.evaluate(data);
                    curve.rows.push(LossRow { epoch, split: split.into(), loss, accuracy });
                }
            }
        };
        record(self, 0, &mut curve);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut grad = vec![0.0; self.params.len()];
        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut rng);
            for (b, chunk) in order.chunks(cfg.batch.max(1)).enumerate() {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| (train[i].0.as_slice(), train[i].1)).collect();
                let loss = self.loss_and_grad(&batch, &mut grad);
                if !loss.is_finite() {
                    return Err(PolicyError::NonFinite { epoch, batch: b });
                }
                let n = batch.len() as f64;
                grad.iter_mut().for_each(|g| *g /= n);
                if cfg.l2 > 0.0 {
                    for (g, p) in grad.iter_mut().zip(&self.params).take(self.n_in * self.n_out) {
                        *g += cfg.l2 * p;
                    }
                }
                opt.step(&mut self.params, &grad);
            }
            record(self, epoch, &mut curve);
        }
        Ok(curve)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_on_balanced_pair_has_ln2_loss() {
        let clf = LinearClassifier::zeros(2, 2);
        let data = vec![(vec![1.0, 0.0], 0), (vec![0.0, 1.0], 1)];
        let (loss, _) = clf.evaluate(&data);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn learns_a_separable_toy_problem() {
        let data: Vec<(Vec<f64>, usize)> =
            (0..40).map(|i| if i % 2 == 0 { (vec![1.0, 0.2], 0) } else { (vec![0.1, 1.0], 1) }).collect();
        let mut clf = LinearClassifier::zeros(2, 2);
        let cfg = TrainConfig { lr: 0.05, epochs: 20, batch: 8, ..TrainConfig::default() };
        let curve = clf.train(&data, &[], &cfg).unwrap();
        assert!(curve.rows.last().unwrap().accuracy == 1.0);
    }

    #[test]
    fn argmax_is_invariant_to_positive_scaling() {
        let clf = LinearClassifier::random(5, 4, 1.0, 9);
        let mut scaled = clf.clone();
        scaled.params.iter_mut().for_each(|p| *p *= 3.7);
        let x = [0.3, 1.0, 0.0, 2.0, -1.0];
        assert_eq!(clf.predict(&x), scaled.predict(&x));
    }
}
