//! The quality-enhancement network.
//!
//! ```text
//! h   = F1(I)                       conv in→C, ReLU
//! r   = Res_N(h)                    N × [x + conv_b(ReLU(conv_a(x)))]
//! s   = BN(F2(r)) + h               conv C→C, no activation
//! out = F3(T2(T1(s)))               T1, T2 conv C→C ReLU; F3 conv C→1 ReLU
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::batchnorm::{BatchNorm, BnCache, Mode};
use super::conv::{Activation, Conv2d};
use super::tensor::Tensor;

/// Gain applied to the second conv of every residual block at
/// initialization, keeping the untrained trunk close to identity.
pub const RESIDUAL_INIT_GAIN: f32 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub in_channels: usize,
    pub channels: usize,
    pub blocks: usize,
}

impl NetConfig {
    /// Full-size network: 256 feature channels, 16 residual blocks.
    pub fn paper(in_channels: usize) -> Self {
        NetConfig {
            in_channels,
            channels: 256,
            blocks: 16,
        }
    }

    /// Small network for tests and CPU experiments: 16 channels, 2 blocks.
    pub fn desk(in_channels: usize) -> Self {
        NetConfig {
            in_channels,
            channels: 16,
            blocks: 2,
        }
    }

    /// Number of 3×3 convolutions, which is also the receptive-field radius.
    pub fn conv_count(&self) -> usize {
        2 * self.blocks + 5
    }

    pub fn receptive_radius(&self) -> usize {
        self.conv_count()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.in_channels == 2 || self.in_channels == 3) {
            return Err(Error::Config(format!("in_channels must be 2 or 3, got {}", self.in_channels)));
        }
        if self.channels == 0 {
            return Err(Error::Config("channels must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResBlock {
    pub conv_a: Conv2d,
    pub conv_b: Conv2d,
}

#[derive(Clone, Debug)]
struct Cache {
    input: Tensor,
    head: Tensor,
    /// Input of each residual block, plus the trunk output last.
    trunk: Vec<Tensor>,
    mid: Vec<Tensor>,
    f2: Tensor,
    bn: BnCache,
    sum: Tensor,
    t1: Tensor,
    t2: Tensor,
    out: Tensor,
}

#[derive(Clone, Debug)]
pub struct QENetwork {
    config: NetConfig,
    pub head: Conv2d,
    pub blocks: Vec<ResBlock>,
    pub f2: Conv2d,
    pub bn: BatchNorm,
    pub tail: [Conv2d; 2],
    pub out: Conv2d,
    cache: Option<Cache>,
}

impl PartialEq for QENetwork {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.head == other.head
            && self.blocks == other.blocks
            && self.f2 == other.f2
            && self.bn == other.bn
            && self.tail == other.tail
            && self.out == other.out
    }
}

impl QENetwork {
    /// All parameters zero, batch norm at its neutral state.
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        Ok(QENetwork {
            config,
            head: Conv2d::zeros(config.in_channels, c, Activation::Relu),
            blocks: (0..config.blocks)
                .map(|_| ResBlock {
                    conv_a: Conv2d::zeros(c, c, Activation::Relu),
                    conv_b: Conv2d::zeros(c, c, Activation::None),
                })
                .collect(),
            f2: Conv2d::zeros(c, c, Activation::None),
            bn: BatchNorm::new(c),
            tail: [
                Conv2d::zeros(c, c, Activation::Relu),
                Conv2d::zeros(c, c, Activation::Relu),
            ],
            out: Conv2d::zeros(c, 1, Activation::Relu),
            cache: None,
        })
    }

    /// Plain He-normal initialization from a seeded ChaCha8 stream.
    pub fn he_normal(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.channels;
        let head = Conv2d::init(config.in_channels, c, Activation::Relu, 1.0, &mut rng);
        let blocks = (0..config.blocks)
            .map(|_| ResBlock {
                conv_a: Conv2d::init(c, c, Activation::Relu, 1.0, &mut rng),
                conv_b: Conv2d::init(c, c, Activation::None, RESIDUAL_INIT_GAIN, &mut rng),
            })
            .collect();
        let f2 = Conv2d::init(c, c, Activation::None, 1.0, &mut rng);
        let tail = [
            Conv2d::init(c, c, Activation::Relu, 1.0, &mut rng),
            Conv2d::init(c, c, Activation::Relu, 1.0, &mut rng),
        ];
        let out = Conv2d::init(c, 1, Activation::Relu, 1.0, &mut rng);
        Ok(QENetwork {
            config,
            head,
            blocks,
            f2,
            bn: BatchNorm::new(c),
            tail,
            out,
            cache: None,
        })
    }

    /// Training initialization: He-normal everywhere, except that feature
    /// channel 0 carries the reconstruction channel unchanged from input to
    /// output and the batch-norm scale starts at zero. The untrained network
    /// therefore returns its reconstruction input exactly, and training
    /// learns a correction instead of the identity map.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::he_normal(config, seed)?;
        let c_in = config.in_channels - 2;
        let centre = |layer: &Conv2d, o: usize, i: usize| layer.weight_index(o, i, 1, 1);
        let dirac_row = |layer: &mut Conv2d, src: usize| {
            let row = layer.in_ch * 9;
            layer.weight[..row].fill(0.0);
            let k = centre(layer, 0, src);
            layer.weight[k] = 1.0;
            layer.bias[0] = 0.0;
        };
        dirac_row(&mut net.head, c_in);
        for t in &mut net.tail {
            dirac_row(t, 0);
        }
        dirac_row(&mut net.out, 0);
        net.bn.gamma.fill(0.0);
        Ok(net)
    }

    /// Three-input copy of a two-input (`[C, Q]`) network whose weights on
    /// the added prediction channel are zero, so it computes the same
    /// function while ignoring `P`.
    pub fn with_prediction_input(&self) -> Result<Self> {
        if self.config.in_channels != 2 {
            return Err(Error::Contract("only a two-input network can gain a prediction input".into()));
        }
        let config = NetConfig {
            in_channels: 3,
            ..self.config
        };
        let mut net = self.clone();
        net.config = config;
        net.cache = None;
        let mut head = Conv2d::zeros(3, config.channels, Activation::Relu);
        head.bias = self.head.bias.clone();
        for o in 0..config.channels {
            for i in 0..2 {
                for k in 0..9 {
                    head.weight[(o * 3 + i + 1) * 9 + k] = self.head.weight[(o * 2 + i) * 9 + k];
                }
            }
        }
        net.head = head;
        Ok(net)
    }

    pub fn config(&self) -> NetConfig {
        self.config
    }

    pub fn in_channels(&self) -> usize {
        self.config.in_channels
    }

    /// Every 3×3 convolution in forward order.
    pub fn convs(&self) -> Vec<&Conv2d> {
        let mut v = vec![&self.head];
        for b in &self.blocks {
            v.push(&b.conv_a);
            v.push(&b.conv_b);
        }
        v.push(&self.f2);
        v.extend(self.tail.iter());
        v.push(&self.out);
        v
    }

    pub fn conv_count(&self) -> usize {
        self.convs().len()
    }

    /// Trainable buffers in declaration order (weights then bias per conv,
    /// batch norm γ and β after F2).
    pub fn params(&self) -> Vec<&[f32]> {
        let mut v: Vec<&[f32]> = vec![&self.head.weight, &self.head.bias];
        for b in &self.blocks {
            v.extend([&b.conv_a.weight[..], &b.conv_a.bias, &b.conv_b.weight, &b.conv_b.bias]);
        }
        v.extend([&self.f2.weight[..], &self.f2.bias, &self.bn.gamma, &self.bn.beta]);
        for t in &self.tail {
            v.extend([&t.weight[..], &t.bias]);
        }
        v.extend([&self.out.weight[..], &self.out.bias]);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f32]> {
        let mut v: Vec<&mut [f32]> = vec![&mut self.head.weight, &mut self.head.bias];
        for b in &mut self.blocks {
            v.push(&mut b.conv_a.weight);
            v.push(&mut b.conv_a.bias);
            v.push(&mut b.conv_b.weight);
            v.push(&mut b.conv_b.bias);
        }
        v.push(&mut self.f2.weight);
        v.push(&mut self.f2.bias);
        v.push(&mut self.bn.gamma);
        v.push(&mut self.bn.beta);
        for t in &mut self.tail {
            v.push(&mut t.weight);
            v.push(&mut t.bias);
        }
        v.push(&mut self.out.weight);
        v.push(&mut self.out.bias);
        v
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.params().iter().map(|p| p.len()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_sizes().iter().sum()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.channels() != self.config.in_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {}",
                self.config.in_channels,
                input.channels()
            )));
        }
        Ok(())
    }

    /// Inference-mode forward pass (running batch-norm statistics).
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let h = self.head.forward(input)?;
        let mut x = h.clone();
        for b in &self.blocks {
            let mut y = b.conv_b.forward(&b.conv_a.forward(&x)?)?;
            y.add_assign(&x);
            x = y;
        }
        let mut s = self.bn.forward_infer(&self.f2.forward(&x)?)?;
        drop(x);
        s.add_assign(&h);
        let t = self.tail[1].forward(&self.tail[0].forward(&s)?)?;
        self.out.forward(&t)
    }

    /// Forward pass in the given mode. Train mode uses batch statistics,
    /// updates the running estimates and keeps activations for
    /// [`QENetwork::backward`].
    pub fn forward_mode(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        match mode {
            Mode::Infer => self.forward(input),
            Mode::Train => self.forward_train(input),
        }
    }

    pub fn forward_train(&mut self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        self.cache = None;
        let head = self.head.forward(input)?;
        let mut trunk = vec![head.clone()];
        let mut mid = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let x = trunk.last().expect("non-empty");
            let a = b.conv_a.forward(x)?;
            let mut y = b.conv_b.forward(&a)?;
            y.add_assign(x);
            mid.push(a);
            trunk.push(y);
        }
        let f2 = self.f2.forward(trunk.last().expect("non-empty"))?;
        let (mut sum, bn) = self.bn.forward_train(&f2)?;
        sum.add_assign(&head);
        let t1 = self.tail[0].forward(&sum)?;
        let t2 = self.tail[1].forward(&t1)?;
        let out = self.out.forward(&t2)?;
        self.cache = Some(Cache {
            input: input.clone(),
            head,
            trunk,
            mid,
            f2,
            bn,
            sum,
            t1,
            t2,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Gradients of every parameter (same order as [`QENetwork::params`])
    /// for the loss whose output gradient is `grad_out`. Consumes the
    /// activations kept by the last training forward pass.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Vec<Vec<f32>>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Contract("backward called without a training forward pass".into()))?;
        if grad_out.shape() != cache.out.shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                grad_out.shape(),
                cache.out.shape()
            )));
        }
        let mut g_out = self.out.zero_grads();
        let g = self.out.backward(&cache.t2, &cache.out, grad_out, &mut g_out, true).expect("input grad");
        let mut g_t2 = self.tail[1].zero_grads();
        let g = self.tail[1].backward(&cache.t1, &cache.t2, &g, &mut g_t2, true).expect("input grad");
        let mut g_t1 = self.tail[0].zero_grads();
        // gradient at the skip sum feeds both the batch norm and the head
        let g_sum = self.tail[0].backward(&cache.sum, &cache.t1, &g, &mut g_t1, true).expect("input grad");
        let mut g_bn = self.bn.zero_grads();
        let g = self.bn.backward(&cache.bn, &g_sum, &mut g_bn);
        let mut g_f2 = self.f2.zero_grads();
        let trunk_out = cache.trunk.last().expect("non-empty");
        let mut g = self.f2.backward(trunk_out, &cache.f2, &g, &mut g_f2, true).expect("input grad");
        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate().rev() {
            let x = &cache.trunk[i];
            let a = &cache.mid[i];
            let mut gb = b.conv_b.zero_grads();
            // conv_b has no activation, so its output tensor is not consulted
            let ga = b.conv_b.backward(a, a, &g, &mut gb, true).expect("input grad");
            let mut ga_grads = b.conv_a.zero_grads();
            let gx = b.conv_a.backward(x, a, &ga, &mut ga_grads, true).expect("input grad");
            g.add_assign(&gx);
            block_grads.push((ga_grads, gb));
        }
        block_grads.reverse();
        g.add_assign(&g_sum);
        let mut g_head = self.head.zero_grads();
        self.head.backward(&cache.input, &cache.head, &g, &mut g_head, false);

        let mut out = vec![g_head.weight, g_head.bias];
        for (a, b) in block_grads {
            out.extend([a.weight, a.bias, b.weight, b.bias]);
        }
        out.extend([g_f2.weight, g_f2.bias, g_bn.gamma, g_bn.beta]);
        out.extend([g_t1.weight, g_t1.bias, g_t2.weight, g_t2.bias, g_out.weight, g_out.bias]);
        Ok(out)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_tensor(shape: [usize; 4], seed: u64, lo: f32, hi: f32) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    }

    #[test]
    fn output_shape() {
        let net = QENetwork::new(NetConfig::desk(3), 1).unwrap();
        let out = net.forward(&random_tensor([2, 3, 64, 64], 2, 0.0, 1.0)).unwrap();
        assert_eq!(out.shape(), [2, 1, 64, 64]);
    }

    #[test]
    fn prediction_input_starts_ignored() {
        let two = QENetwork::he_normal(NetConfig::desk(2), 8).unwrap();
        let three = two.with_prediction_input().unwrap();
        assert_eq!(three.in_channels(), 3);
        let x2 = random_tensor([1, 2, 10, 10], 9, 0.0, 1.0);
        let p = random_tensor([1, 1, 10, 10], 10, 0.0, 1.0);
        let mut d = p.data().to_vec();
        d.extend_from_slice(x2.data());
        let x3 = Tensor::from_vec([1, 3, 10, 10], d).unwrap();
        assert_eq!(three.forward(&x3).unwrap(), two.forward(&x2).unwrap());
        assert!(three.with_prediction_input().is_err());
    }

    #[test]
    fn fresh_network_passes_reconstruction_through() {
        for c in [2, 3] {
            let net = QENetwork::new(NetConfig::desk(c), 4).unwrap();
            let x = random_tensor([1, c, 16, 16], 5, 0.0, 1.0);
            let y = net.forward(&x).unwrap();
            for i in 0..256 {
                assert_eq!(y.data()[i], x.data()[(c - 2) * 256 + i]);
            }
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = QENetwork::zeros(NetConfig::desk(2)).unwrap();
        let out = net.forward(&random_tensor([1, 2, 8, 8], 3, 0.0, 1.0)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_count_is_2n_plus_5() {
        for n in [0, 1, 2, 16] {
            let cfg = NetConfig {
                in_channels: 3,
                channels: 2,
                blocks: n,
            };
            let net = QENetwork::zeros(cfg).unwrap();
            assert_eq!(net.conv_count(), 2 * n + 5);
            assert_eq!(cfg.receptive_radius(), 2 * n + 5);
        }
        assert_eq!(NetConfig::paper(3).receptive_radius(), 37);
    }

    #[test]
    fn composition_oracle() {
        // N=1, 4 channels, every layer applied by hand
        let cfg = NetConfig {
            in_channels: 3,
            channels: 4,
            blocks: 1,
        };
        let mut net = QENetwork::new(cfg, 7).unwrap();
        net.bn.running_mean = vec![0.1, -0.2, 0.05, 0.0];
        net.bn.running_var = vec![1.5, 0.5, 2.0, 1.0];
        net.bn.gamma = vec![1.1, 0.9, 1.0, 1.2];
        net.bn.beta = vec![0.0, 0.1, -0.1, 0.2];
        let x = random_tensor([1, 3, 9, 7], 8, 0.0, 1.0);
        let h = net.head.forward(&x).unwrap();
        let a = net.blocks[0].conv_a.forward(&h).unwrap();
        let mut r = net.blocks[0].conv_b.forward(&a).unwrap();
        r.add_assign(&h);
        let mut s = net.bn.forward_infer(&net.f2.forward(&r).unwrap()).unwrap();
        s.add_assign(&h);
        let t = net.tail[1].forward(&net.tail[0].forward(&s).unwrap()).unwrap();
        let want = net.out.forward(&t).unwrap();
        let got = net.forward(&x).unwrap();
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() <= 1e-5);
        }
    }

    #[test]
    fn wrong_channel_count() {
        let net = QENetwork::new(NetConfig::desk(3), 1).unwrap();
        assert!(matches!(net.forward(&Tensor::zeros([1, 2, 8, 8])), Err(Error::Shape(_))));
        assert!(QENetwork::new(NetConfig::desk(4), 1).is_err());
    }

    #[test]
    fn backward_needs_forward() {
        let mut net = QENetwork::new(NetConfig::desk(2), 1).unwrap();
        assert!(matches!(
            net.backward(&Tensor::zeros([2, 1, 4, 4])),
            Err(Error::Contract(_))
        ));
        net.forward_train(&random_tensor([2, 2, 4, 4], 1, 0.0, 1.0)).unwrap();
        net.backward(&Tensor::zeros([2, 1, 4, 4])).unwrap();
        // the cache is consumed
        assert!(net.backward(&Tensor::zeros([2, 1, 4, 4])).is_err());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut net = QENetwork::he_normal(NetConfig::desk(3), 5).unwrap();
        net.forward_train(&random_tensor([2, 3, 8, 8], 6, 0.0, 1.0)).unwrap();
        let grads = net.backward(&Tensor::zeros([2, 1, 8, 8])).unwrap();
        assert_eq!(grads.len(), net.params().len());
        assert!(grads.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicated_batch_element_doubles_its_contribution() {
        // with batch statistics fixed by [x, x, y, y], weighting the loss
        // on (x, x) equals twice the weight on a single x
        let cfg = NetConfig {
            in_channels: 2,
            channels: 3,
            blocks: 1,
        };
        let x = random_tensor([1, 2, 6, 6], 10, 0.0, 1.0);
        let y = random_tensor([1, 2, 6, 6], 11, 0.0, 1.0);
        let batch = Tensor::stack(&[x.clone(), x, y.clone(), y]).unwrap();
        let upstream = random_tensor([1, 1, 6, 6], 12, -1.0, 1.0);
        let zero = Tensor::zeros([1, 1, 6, 6]);
        let run = |parts: [&Tensor; 4]| {
            let mut net = QENetwork::he_normal(cfg, 13).unwrap();
            net.forward_train(&batch).unwrap();
            let g: Vec<Tensor> = parts.iter().map(|t| (*t).clone()).collect();
            net.backward(&Tensor::stack(&g).unwrap()).unwrap()
        };
        let once = run([&upstream, &zero, &zero, &zero]);
        let twice = run([&upstream, &upstream, &zero, &zero]);
        for (a, b) in once.iter().flatten().zip(twice.iter().flatten()) {
            assert!((2.0 * a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{a} {b}");
        }
    }

    #[test]
    fn output_non_negative() {
        let net = QENetwork::he_normal(NetConfig::desk(3), 9).unwrap();
        for seed in 0..5 {
            let out = net.forward(&random_tensor([1, 3, 12, 12], seed, -5.0, 5.0)).unwrap();
            assert!(out.data().iter().all(|&v| v >= 0.0));
        }
    }
}
