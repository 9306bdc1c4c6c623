use super::{Mode, Param, Real, Tensor4};
use crate::error::{Error, Result};

/// Per-channel batch normalization over `(batch, time, freq)`.
///
/// Running statistics follow `running = momentum * running + (1 - momentum) * batch`
/// and start at mean 0, variance 1. The running variance uses the unbiased
/// batch estimate; normalization in train mode uses the biased one.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<Cache<T>>,
}

#[derive(Debug, Clone)]
struct Cache<T> {
    x_hat: Tensor4<T>,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize, momentum: f64, eps: f64) -> Self {
        BatchNorm2d {
            channels,
            gamma: Param::new(format!("{name}.gamma"), vec![channels], vec![T::one(); channels]),
            beta: Param::new(format!("{name}.beta"), vec![channels], vec![T::zero(); channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum,
            eps,
            cache: None,
        }
    }

    fn check(&self, x: &Tensor4<T>) -> Result<()> {
        if x.channels() != self.channels {
            return Err(Error::Shape(format!(
                "{}: expected {} channels, got {}",
                self.gamma.name,
                self.channels,
                x.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        self.forward_owned(x.clone(), mode)
    }

    /// Like [`BatchNorm2d::forward`], reusing the buffer of `x` for the output.
    pub fn forward_owned(&mut self, mut x: Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        self.check(&x)?;
        let [b, c, _, _] = x.dims;
        let p = x.plane_len();
        let n = b * p;
        let mut mean = vec![0.0f64; c];
        let mut inv_std = vec![0.0f64; c];
        match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::InvalidArgument(
                        "batch norm training needs at least 2 values per channel".into(),
                    ));
                }
                for ci in 0..c {
                    let mut s = 0.0;
                    for bi in 0..b {
                        s += plane_sum(x.plane(bi, ci), |v| v);
                    }
                    let m = s / n as f64;
                    let mt = T::lit(m);
                    let mut ss = 0.0;
                    for bi in 0..b {
                        ss += plane_sum(x.plane(bi, ci), |v| (v - mt) * (v - mt));
                    }
                    let var = ss / n as f64;
                    mean[ci] = m;
                    inv_std[ci] = 1.0 / (var + self.eps).sqrt();
                    let unbiased = ss / (n - 1) as f64;
                    let mo = self.momentum;
                    self.running_mean[ci] =
                        T::lit(mo * self.running_mean[ci].as_f64() + (1.0 - mo) * m);
                    self.running_var[ci] =
                        T::lit(mo * self.running_var[ci].as_f64() + (1.0 - mo) * unbiased);
                }
            }
            Mode::Eval => {
                for ci in 0..c {
                    mean[ci] = self.running_mean[ci].as_f64();
                    inv_std[ci] = 1.0 / (self.running_var[ci].as_f64() + self.eps).sqrt();
                }
            }
        }
        let mut x_hat = Vec::with_capacity(x.data.len());
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * p;
                let (m, is) = (T::lit(mean[ci]), T::lit(inv_std[ci]));
                let (g, be) = (self.gamma.value[ci], self.beta.value[ci]);
                let plane = &mut x.data[off..off + p];
                x_hat.extend(plane.iter().map(|&v| (v - m) * is));
                for (v, &h) in plane.iter_mut().zip(&x_hat[off..off + p]) {
                    *v = g * h + be;
                }
            }
        }
        let x_hat = Tensor4 { dims: x.dims, data: x_hat };
        let y = x;
        self.cache = Some(Cache {
            x_hat,
            inv_std,
            mode,
        });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::InvalidArgument("batch norm backward before forward".into()))?;
        if dy.dims != cache.x_hat.dims {
            return Err(Error::Shape(format!(
                "{}: upstream gradient dims {:?}",
                self.gamma.name, dy.dims
            )));
        }
        let [b, c, _, _] = dy.dims;
        let p = dy.plane_len();
        let n = (b * p) as f64;
        let mut dx = Tensor4::zeros(dy.dims);
        for ci in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for bi in 0..b {
                let off = (bi * c + ci) * p;
                let g = &dy.data[off..off + p];
                let h = &cache.x_hat.data[off..off + p];
                sum_dy += plane_sum(g, |v| v);
                sum_dy_xhat += g.iter().zip(h).fold(T::zero(), |a, (&g, &h)| a + g * h).as_f64();
            }
            self.gamma.grad[ci] += T::lit(sum_dy_xhat);
            self.beta.grad[ci] += T::lit(sum_dy);
            let scale = self.gamma.value[ci].as_f64() * cache.inv_std[ci];
            // Train: dx = scale/n · (n·dy − Σdy − x̂·Σdy·x̂)
            let (a, c0, c1) = match cache.mode {
                Mode::Train => (scale, scale * sum_dy / n, scale * sum_dy_xhat / n),
                Mode::Eval => (scale, 0.0, 0.0),
            };
            let (a, c0, c1) = (T::lit(a), T::lit(c0), T::lit(c1));
            for bi in 0..b {
                let off = (bi * c + ci) * p;
                let out = &mut dx.data[off..off + p];
                let g = &dy.data[off..off + p];
                let h = &cache.x_hat.data[off..off + p];
                for ((o, &g), &h) in out.iter_mut().zip(g).zip(h) {
                    *o = a * g - c0 - h * c1;
                }
            }
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.gamma, &mut self.beta]
    }
}

/// Sums `f(v)` over a plane in native precision, in chunks folded into f64.
fn plane_sum<T: Real>(xs: &[T], f: impl Fn(T) -> T) -> f64 {
    xs.chunks(256)
        .map(|ch| ch.iter().fold(T::zero(), |a, &v| a + f(v)).as_f64())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4], scale: f64, shift: f64) -> Tensor4<f64> {
        let n = dims.iter().product();
        Tensor4::from_vec(
            dims,
            (0..n).map(|_| shift + scale * rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn channel_stats(t: &Tensor4<f64>, c: usize) -> (f64, f64) {
        let vals: Vec<f64> = (0..t.batch()).flat_map(|b| t.plane(b, c).to_vec()).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        (m, v)
    }

    #[test]
    fn train_output_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, [3, 2, 4, 5], 3.0, 7.0);
        let mut bn = BatchNorm2d::new("bn", 2, 0.9, 1e-5);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for c in 0..2 {
            let (m, v) = channel_stats(&y, c);
            assert!(m.abs() < 1e-6);
            // eps slightly shrinks the variance
            let (_, xv) = channel_stats(&x, c);
            assert!((v - xv / (xv + 1e-5)).abs() < 1e-6);
            assert!((v - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn standardized_input_is_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = random_tensor(&mut rng, [2, 1, 6, 6], 1.0, 0.0);
        let (m, v) = channel_stats(&x, 0);
        x.data.iter_mut().for_each(|e| *e = (*e - m) / v.sqrt());
        let mut bn = BatchNorm2d::new("bn", 1, 0.9, 0.0);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for (a, b) in x.data.iter().zip(&y.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn running_stats_update_and_defaults() {
        let mut bn = BatchNorm2d::<f64>::new("bn", 1, 0.9, 1e-5);
        assert_eq!((bn.running_mean[0], bn.running_var[0]), (0.0, 1.0));
        let x = Tensor4::from_vec([1, 1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean[0] - 0.25).abs() < 1e-12);
        // unbiased variance of 1..4 is 5/3
        assert!((bn.running_var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn eval_mode_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut bn = BatchNorm2d::<f64>::new("bn", 2, 0.9, 1e-5);
        bn.forward(&random_tensor(&mut rng, [2, 2, 3, 3], 2.0, 1.0), Mode::Train)
            .unwrap();
        bn.gamma.value = vec![1.5, -0.5];
        bn.beta.value = vec![0.2, 0.3];
        let a = random_tensor(&mut rng, [1, 2, 3, 3], 1.0, 0.0);
        let b = random_tensor(&mut rng, [1, 2, 3, 3], 1.0, 0.0);
        let zero = Tensor4::zeros([1, 2, 3, 3]);
        let fa = bn.forward(&a, Mode::Eval).unwrap();
        let fb = bn.forward(&b, Mode::Eval).unwrap();
        let f0 = bn.forward(&zero, Mode::Eval).unwrap();
        let sum = Tensor4::from_vec(a.dims, a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect())
            .unwrap();
        let fs = bn.forward(&sum, Mode::Eval).unwrap();
        // f(a+b) - f(0) = (f(a) - f(0)) + (f(b) - f(0))
        for i in 0..fs.data.len() {
            let lhs = fs.data[i] - f0.data[i];
            let rhs = fa.data[i] - f0.data[i] + fb.data[i] - f0.data[i];
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    fn check_backward(mode: Mode) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor(&mut rng, [2, 3, 4, 3], 1.5, 0.5);
        let probe = random_tensor(&mut rng, [2, 3, 4, 3], 1.0, 0.0);
        let mut bn = BatchNorm2d::<f64>::new("bn", 3, 0.9, 1e-5);
        bn.forward(&random_tensor(&mut rng, [2, 3, 4, 3], 1.0, 0.3), Mode::Train)
            .unwrap();
        bn.gamma.value = vec![1.2, 0.7, -0.4];
        bn.beta.value = vec![0.1, 0.0, -0.3];
        let frozen = bn.clone();
        let scalar = |bn: &BatchNorm2d<f64>, x: &Tensor4<f64>| -> f64 {
            let mut b2 = bn.clone();
            let y = b2.forward(x, mode).unwrap();
            y.data.iter().zip(&probe.data).map(|(a, b)| a * b).sum()
        };
        bn.forward(&x, mode).unwrap();
        let dx = bn.backward(&probe).unwrap();
        let rep = grad_check(
            |v| scalar(&frozen, &Tensor4::from_vec(x.dims, v.to_vec()).unwrap()),
            &x.data,
            &dx.data,
            1e-5,
        );
        assert!(rep.max_rel_error < 1e-4, "{mode:?} input {rep:?}");
        let rep = grad_check(
            |v| {
                let mut b2 = frozen.clone();
                b2.gamma.value = v.to_vec();
                scalar(&b2, &x)
            },
            &frozen.gamma.value,
            &bn.gamma.grad,
            1e-5,
        );
        assert!(rep.max_rel_error < 1e-4, "{mode:?} gamma {rep:?}");
        let rep = grad_check(
            |v| {
                let mut b2 = frozen.clone();
                b2.beta.value = v.to_vec();
                scalar(&b2, &x)
            },
            &frozen.beta.value,
            &bn.beta.grad,
            1e-5,
        );
        assert!(rep.max_rel_error < 1e-4, "{mode:?} beta {rep:?}");
    }

    #[test]
    fn train_backward_matches_finite_differences() {
        check_backward(Mode::Train);
    }

    #[test]
    fn eval_backward_matches_finite_differences() {
        check_backward(Mode::Eval);
    }

    #[test]
    fn channel_mismatch_errors() {
        let mut bn = BatchNorm2d::<f32>::new("bn", 2, 0.9, 1e-5);
        assert!(bn.forward(&Tensor4::zeros([1, 3, 2, 2]), Mode::Train).is_err());
    }
}
