use super::Real;
use crate::error::{Error, Result};

/// Bias-corrected Adam. Moment buffers are allocated on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update over `(value, grad)` pairs, in a fixed order across calls.
    pub fn step<'a, I>(&mut self, params: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a mut [T], &'a [T])>,
    {
        let params: Vec<_> = params.into_iter().collect();
        if self.m.is_empty() {
            self.m = params.iter().map(|(p, _)| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (i, (p, g)) in params.iter().enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(Error::Shape(format!(
                    "tensor {i}: value {}, grad {}, state {}",
                    p.len(),
                    g.len(),
                    self.m[i].len()
                )));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (c1, c2) = (
            T::lit(1.0 - self.beta1.powi(t)),
            T::lit(1.0 - self.beta2.powi(t)),
        );
        let (lr, eps) = (T::lit(self.lr), T::lit(self.eps));
        for (i, (p, g)) in params.into_iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + (T::one() - b1) * gj;
                v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut st = AdamState::<f64>::new(0.001);
        let mut p = vec![0.3, -0.7];
        let g = vec![0.0, 0.0];
        st.step([(&mut p[..], &g[..])]).unwrap();
        assert_eq!(p, vec![0.3, -0.7]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut st = AdamState::<f64>::new(0.001);
        let mut p = vec![0.0];
        st.step([(&mut p[..], &[0.5][..])]).unwrap();
        assert!((p[0] + 0.001).abs() < 1e-6);
        assert!(st.v[0][0] >= 0.0);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut st = AdamState::<f64>::new(0.01);
        let mut theta = vec![1.0];
        for _ in 0..2000 {
            let g = vec![2.0 * theta[0]];
            st.step([(&mut theta[..], &g[..])]).unwrap();
        }
        assert!(theta[0].abs() < 1e-3, "{}", theta[0]);
        assert_eq!(st.step_count, 2000);
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut st = AdamState::<f32>::new(0.01);
        let mut p = vec![0.0f32; 3];
        assert!(st.step([(&mut p[..], &[1.0f32, 2.0][..])]).is_err());
        st.step([(&mut p[..], &[1.0f32, 2.0, 3.0][..])]).unwrap();
        let mut q = vec![0.0f32; 2];
        assert!(st.step([(&mut q[..], &[1.0f32, 2.0][..])]).is_err());
    }
}
