use serde::{Deserialize, Serialize};

use super::{Real, Result, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Adaptive moment estimation over a fixed, ordered parameter list.
///
/// Moment buffers are allocated on the first step and must keep matching
/// the parameter sizes afterwards.
#[derive(Clone, Debug)]
pub struct Adam<R> {
    config: AdamConfig,
    steps: u64,
    first: Vec<Vec<R>>,
    second: Vec<Vec<R>>,
}

impl<R: Real> Adam<R> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<R>], grads: &[Option<&[R]>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(TensorError::Contract(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.steps == 0 {
            self.first = params.iter().map(|p| vec![R::zero(); p.numel()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(TensorError::Contract(
                "parameter list changed between optimizer steps".into(),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let g = g.ok_or_else(|| TensorError::Contract(format!("missing gradient for parameter {i}")))?;
            if g.len() != p.numel() || self.first[i].len() != p.numel() {
                return Err(TensorError::Dimension {
                    op: "adam",
                    lhs: p.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
        }

        self.steps += 1;
        let t = self.steps as i32;
        let c = &self.config;
        let (b1, b2) = (R::of(c.beta1), R::of(c.beta2));
        let (one_b1, one_b2) = (R::of(1.0 - c.beta1), R::of(1.0 - c.beta2));
        let correct1 = R::of(1.0 - c.beta1.powi(t));
        let correct2 = R::of(1.0 - c.beta2.powi(t));
        let (lr, eps) = (R::of(c.learning_rate), R::of(c.epsilon));

        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i].expect("checked above");
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + one_b1 * g[j];
                v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
                let m_hat = m[j] / correct1;
                let v_hat = v[j] / correct2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
