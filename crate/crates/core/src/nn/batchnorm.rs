use crate::error::{Error, Result};

use super::tensor::Tensor;

pub const BN_EPS: f32 = 1e-5;
/// Weight kept by the running statistics at each training step.
pub const BN_MOMENTUM: f32 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-channel batch normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnGrads {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

/// What the training-mode backward pass needs from the forward pass.
#[derive(Clone, Debug)]
pub struct BnCache {
    pub(crate) xhat: Tensor,
    pub(crate) inv_std: Vec<f32>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn zero_grads(&self) -> BnGrads {
        BnGrads {
            gamma: vec![0.0; self.channels()],
            beta: vec![0.0; self.channels()],
        }
    }

    fn check(&self, input: &Tensor) -> Result<()> {
        if input.channels() != self.channels() {
            return Err(Error::Shape(format!(
                "batch norm expects {} channels, got {}",
                self.channels(),
                input.channels()
            )));
        }
        Ok(())
    }

    /// Normalizes with the running statistics only.
    pub fn forward_infer(&self, input: &Tensor) -> Result<Tensor> {
        self.check(input)?;
        let [n, c, _, _] = input.shape();
        let p = input.plane_len();
        let mut out = input.clone();
        for b in 0..n {
            let item = out.item_mut(b);
            for ch in 0..c {
                let scale = self.gamma[ch] / (self.running_var[ch] + BN_EPS).sqrt();
                let shift = self.beta[ch] - self.running_mean[ch] * scale;
                for v in &mut item[ch * p..(ch + 1) * p] {
                    *v = *v * scale + shift;
                }
            }
        }
        Ok(out)
    }

    /// Normalizes with batch statistics and folds them into the running
    /// estimates. Batches of a single element are rejected.
    pub fn forward_train(&mut self, input: &Tensor) -> Result<(Tensor, BnCache)> {
        self.check(input)?;
        let [n, c, _, _] = input.shape();
        if n < 2 {
            return Err(Error::Contract("batch norm training needs a batch of at least 2".into()));
        }
        let p = input.plane_len();
        let count = (n * p) as f64;
        let mut xhat = Tensor::zeros(input.shape());
        let mut out = Tensor::zeros(input.shape());
        let mut inv_std = vec![0.0f32; c];
        for ch in 0..c {
            let mut sum = 0.0f64;
            for b in 0..n {
                sum += input.item(b)[ch * p..(ch + 1) * p].iter().map(|&v| v as f64).sum::<f64>();
            }
            let mean = sum / count;
            let mut sq = 0.0f64;
            for b in 0..n {
                sq += input.item(b)[ch * p..(ch + 1) * p]
                    .iter()
                    .map(|&v| (v as f64 - mean).powi(2))
                    .sum::<f64>();
            }
            let var = sq / count;
            let istd = (1.0 / (var + BN_EPS as f64).sqrt()) as f32;
            inv_std[ch] = istd;
            let mean32 = mean as f32;
            for b in 0..n {
                let src = &input.item(b)[ch * p..(ch + 1) * p];
                let xh = &mut xhat.item_mut(b)[ch * p..(ch + 1) * p];
                for (d, &s) in xh.iter_mut().zip(src) {
                    *d = (s - mean32) * istd;
                }
                let o = &mut out.item_mut(b)[ch * p..(ch + 1) * p];
                for (d, &s) in o.iter_mut().zip(&xhat.item(b)[ch * p..(ch + 1) * p]) {
                    *d = self.gamma[ch] * s + self.beta[ch];
                }
            }
            let unbiased = sq / (count - 1.0);
            self.running_mean[ch] = BN_MOMENTUM * self.running_mean[ch] + (1.0 - BN_MOMENTUM) * mean32;
            self.running_var[ch] = BN_MOMENTUM * self.running_var[ch] + (1.0 - BN_MOMENTUM) * unbiased as f32;
        }
        Ok((out, BnCache { xhat, inv_std }))
    }

    /// Training-mode backward pass. Accumulates into `grads`, returns the
    /// input gradient.
    pub fn backward(&self, cache: &BnCache, grad_out: &Tensor, grads: &mut BnGrads) -> Tensor {
        let [n, c, _, _] = grad_out.shape();
        let p = grad_out.plane_len();
        let count = (n * p) as f64;
        let mut grad_in = Tensor::zeros(grad_out.shape());
        for ch in 0..c {
            let mut sum_g = 0.0f64;
            let mut sum_gx = 0.0f64;
            for b in 0..n {
                let g = &grad_out.item(b)[ch * p..(ch + 1) * p];
                let xh = &cache.xhat.item(b)[ch * p..(ch + 1) * p];
                for (&gv, &xv) in g.iter().zip(xh) {
                    sum_g += gv as f64;
                    sum_gx += gv as f64 * xv as f64;
                }
            }
            grads.gamma[ch] += sum_gx as f32;
            grads.beta[ch] += sum_g as f32;
            let k = self.gamma[ch] * cache.inv_std[ch];
            let mean_g = (sum_g / count) as f32;
            let mean_gx = (sum_gx / count) as f32;
            for b in 0..n {
                let g = &grad_out.item(b)[ch * p..(ch + 1) * p];
                let xh = &cache.xhat.item(b)[ch * p..(ch + 1) * p];
                let gi = &mut grad_in.item_mut(b)[ch * p..(ch + 1) * p];
                for ((d, &gv), &xv) in gi.iter_mut().zip(g).zip(xh) {
                    *d = k * (gv - mean_g - xv * mean_gx);
                }
            }
        }
        grad_in
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-2.0..3.0)).collect()).unwrap()
    }

    #[test]
    fn train_output_is_standardized() {
        let mut bn = BatchNorm::new(2);
        let x = random_tensor([3, 2, 4, 4], 1);
        let (y, _) = bn.forward_train(&x).unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|b| y.item(b)[ch * 16..(ch + 1) * 16].to_vec())
                .map(|v| v as f64)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn running_stats_use_momentum() {
        let mut bn = BatchNorm::new(1);
        let x = Tensor::from_vec([2, 1, 1, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        bn.forward_train(&x).unwrap();
        // batch mean 4, unbiased variance 20/3
        assert!((bn.running_mean[0] - 0.4).abs() < 1e-6);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-6);
    }

    #[test]
    fn infer_uses_running_stats_only() {
        let mut bn = BatchNorm::new(1);
        bn.running_mean[0] = 2.0;
        bn.running_var[0] = 4.0 - BN_EPS;
        bn.gamma[0] = 3.0;
        bn.beta[0] = 1.0;
        let x = Tensor::from_vec([1, 1, 1, 3], vec![2.0, 4.0, 0.0]).unwrap();
        let y = bn.forward_infer(&x).unwrap();
        let want = [1.0, 4.0, -2.0];
        for (a, b) in y.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn batch_of_one_rejected_in_training() {
        let mut bn = BatchNorm::new(1);
        assert!(matches!(
            bn.forward_train(&Tensor::zeros([1, 1, 4, 4])),
            Err(Error::Contract(_))
        ));
        assert!(bn.forward_infer(&Tensor::zeros([1, 1, 4, 4])).is_ok());
    }

    #[test]
    fn backward_matches_finite_differences() {
        // loss = <w, bn(x)> with fixed random w
        let x = random_tensor([2, 2, 3, 3], 2);
        let w = random_tensor([2, 2, 3, 3], 3);
        let mut bn = BatchNorm::new(2);
        bn.gamma = vec![1.5, -0.7];
        bn.beta = vec![0.2, 0.1];
        let loss = |bn: &mut BatchNorm, x: &Tensor| -> f64 {
            let (y, _) = bn.clone().forward_train(x).unwrap();
            y.data().iter().zip(w.data()).map(|(a, b)| *a as f64 * *b as f64).sum()
        };
        let (_, cache) = bn.clone().forward_train(&x).unwrap();
        let mut grads = bn.zero_grads();
        let gx = bn.backward(&cache, &w, &mut grads);
        let h = 1e-3f32;
        for i in 0..x.data().len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (loss(&mut bn, &xp) - loss(&mut bn, &xm)) / (2.0 * h as f64);
            assert!((fd - gx.data()[i] as f64).abs() < 2e-3 * (1.0 + fd.abs()), "x[{i}]: {fd} vs {}", gx.data()[i]);
        }
        for ch in 0..2 {
            let mut bp = bn.clone();
            bp.gamma[ch] += h;
            let mut bm = bn.clone();
            bm.gamma[ch] -= h;
            let fd = (loss(&mut bp, &x) - loss(&mut bm, &x)) / (2.0 * h as f64);
            assert!((fd - grads.gamma[ch] as f64).abs() < 2e-3 * (1.0 + fd.abs()));
            let mut bp = bn.clone();
            bp.beta[ch] += h;
            let mut bm = bn.clone();
            bm.beta[ch] -= h;
            let fd = (loss(&mut bp, &x) - loss(&mut bm, &x)) / (2.0 * h as f64);
            assert!((fd - grads.beta[ch] as f64).abs() < 2e-3 * (1.0 + fd.abs()));
        }
    }
}
