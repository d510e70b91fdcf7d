//! Adam optimizer with bias correction.

use ndarray::NdFloat;

/// First/second moment estimates per parameter tensor plus the step counter.
/// Slots are allocated lazily on the first step, in visit order.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: NdFloat> Adam<F> {
    /// Defaults: beta1 0.9, beta2 0.999, eps 1e-8.
    pub fn new(lr: F) -> Self {
        Adam {
            lr,
            beta1: F::from(0.9).unwrap(),
            beta2: F::from(0.999).unwrap(),
            eps: F::from(1e-8).unwrap(),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update. The visitor must yield the same
    /// (parameter, gradient) pairs in the same order on every call.
    pub fn step<V>(&mut self, mut visitor: V)
    where
        V: FnMut(&mut dyn FnMut(&mut [F], &[F])),
    {
        self.step += 1;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let bc1 = F::one() - b1.powi(self.step as i32);
        let bc2 = F::one() - b2.powi(self.step as i32);
        let m = &mut self.m;
        let v = &mut self.v;
        let mut idx = 0usize;
        visitor(&mut |w: &mut [F], g: &[F]| {
            if m.len() == idx {
                m.push(vec![F::zero(); w.len()]);
                v.push(vec![F::zero(); w.len()]);
            }
            let ms = &mut m[idx];
            let vs = &mut v[idx];
            debug_assert_eq!(ms.len(), w.len(), "parameter layout changed between steps");
            for i in 0..w.len() {
                ms[i] = b1 * ms[i] + (F::one() - b1) * g[i];
                vs[i] = b2 * vs[i] + (F::one() - b2) * g[i] * g[i];
                let m_hat = ms[i] / bc1;
                let v_hat = vs[i] / bc2;
                w[i] = w[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
            idx += 1;
        });
    }
}
