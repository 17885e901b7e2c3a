use super::{ParamStore, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<F = f32> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig, store: &ParamStore<F>) -> Self {
        let zeros: Vec<Tensor<F>> = store
            .values
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the store's current gradients.
    pub fn step(&mut self, store: &mut ParamStore<F>) {
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (F::lit(c.beta1), F::lit(c.beta2));
        let one = F::one();
        let bc1 = one - F::lit(c.beta1.powi(self.step as i32));
        let bc2 = one - F::lit(c.beta2.powi(self.step as i32));
        let lr = F::lit(c.lr);
        let eps = F::lit(c.eps);
        let ParamStore { values, grads, .. } = store;
        for (((p, g), m), v) in values
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::<f64>::new();
        let id = store
            .add("x", Tensor::from_f64(&[2], &[1.0, -1.0]).unwrap())
            .unwrap();
        store.grads[id].data_mut().copy_from_slice(&[3.0, -0.5]);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store);
        // bias-corrected first step is lr * sign(g)
        let x = store.value(id).data();
        assert!((x[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((x[1] - (-1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParamStore::<f64>::new();
        let id = store
            .add("x", Tensor::from_f64(&[1], &[5.0]).unwrap())
            .unwrap();
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.1,
                ..Default::default()
            },
            &store,
        );
        for _ in 0..500 {
            let x = store.value(id).data()[0];
            store.zero_grads();
            store.grads[id].data_mut()[0] = 2.0 * (x - 2.0);
            adam.step(&mut store);
        }
        assert!((store.value(id).data()[0] - 2.0).abs() < 1e-2);
    }
}
