//! Test-only reference implementations, written independently of the
//! library's fast paths.
#![allow(dead_code)]

use paqe::nn::{Activation, Conv2d, QENetwork, Tensor, BN_EPS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: [usize; 4], seed: u64, lo: f32, hi: f32) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// f64 activations with shape `(n, c, h, w)`.
#[derive(Clone, Debug)]
pub struct T64 {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl T64 {
    pub fn from_tensor(t: &Tensor) -> Self {
        T64 {
            shape: t.shape(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        let [_, cc, h, w] = self.shape;
        self.data[((n * cc + c) * h + y) * w + x]
    }
}

/// Collects the sign of every ReLU pre-activation so that finite
/// differences straddling a kink can be detected.
#[derive(Default, Clone, PartialEq)]
pub struct Signs(pub Vec<bool>);

/// Direct six-loop convolution in f64.
pub fn conv_ref(x: &T64, w: &[f64], b: &[f64], out_ch: usize, relu: bool, signs: &mut Signs) -> T64 {
    let [n, c, h, wd] = x.shape;
    let mut data = vec![0.0; n * out_ch * h * wd];
    for bi in 0..n {
        for o in 0..out_ch {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = b[o];
                    for i in 0..c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = y as isize + ky as isize - 1;
                                let sx = xx as isize + kx as isize - 1;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                    continue;
                                }
                                acc += w[((o * c + i) * 3 + ky) * 3 + kx] * x.at(bi, i, sy as usize, sx as usize);
                            }
                        }
                    }
                    if relu {
                        signs.0.push(acc > 0.0);
                        acc = acc.max(0.0);
                    }
                    data[((bi * out_ch + o) * h + y) * wd + xx] = acc;
                }
            }
        }
    }
    T64 {
        shape: [n, out_ch, h, wd],
        data,
    }
}

pub fn conv_oracle(x: &Tensor, layer: &Conv2d) -> Tensor {
    let w: Vec<f64> = layer.weight.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = layer.bias.iter().map(|&v| v as f64).collect();
    let y = conv_ref(
        &T64::from_tensor(x),
        &w,
        &b,
        layer.out_ch,
        layer.activation == Activation::Relu,
        &mut Signs::default(),
    );
    Tensor::from_vec(y.shape, y.data.iter().map(|&v| v as f32).collect()).unwrap()
}

/// Batch norm with batch statistics (biased variance).
fn bn_train_ref(x: &T64, gamma: &[f64], beta: &[f64]) -> T64 {
    let [n, c, h, w] = x.shape;
    let mut out = x.clone();
    let count = (n * h * w) as f64;
    for ch in 0..c {
        let vals: Vec<f64> = (0..n)
            .flat_map(|b| (0..h * w).map(move |i| (b, i)))
            .map(|(b, i)| x.data[(b * c + ch) * h * w + i])
            .collect();
        let mean = vals.iter().sum::<f64>() / count;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
        for b in 0..n {
            for i in 0..h * w {
                let k = (b * c + ch) * h * w + i;
                out.data[k] = gamma[ch] * (x.data[k] - mean) / (var + BN_EPS as f64).sqrt() + beta[ch];
            }
        }
    }
    out
}

fn add(a: &mut T64, b: &T64) {
    for (x, y) in a.data.iter_mut().zip(&b.data) {
        *x += y;
    }
}

/// Training-mode forward pass of the network built from `params`
/// (same buffer order as `QENetwork::params`).
pub fn net_forward_ref(net: &QENetwork, params: &[Vec<f64>], x: &T64, signs: &mut Signs) -> T64 {
    let cfg = net.config();
    let c = cfg.channels;
    let mut k = 0;
    let mut next = |_: ()| {
        k += 2;
        (&params[k - 2], &params[k - 1])
    };
    let (w, b) = next(());
    let head = conv_ref(x, w, b, c, true, signs);
    let mut t = head.clone();
    for _ in 0..cfg.blocks {
        let (wa, ba) = next(());
        let a = conv_ref(&t, wa, ba, c, true, signs);
        let (wb, bb) = next(());
        let mut y = conv_ref(&a, wb, bb, c, false, signs);
        add(&mut y, &t);
        t = y;
    }
    let (w, b) = next(());
    let f2 = conv_ref(&t, w, b, c, false, signs);
    let (g, be) = next(());
    let mut s = bn_train_ref(&f2, g, be);
    add(&mut s, &head);
    let (w, b) = next(());
    let t1 = conv_ref(&s, w, b, c, true, signs);
    let (w, b) = next(());
    let t2 = conv_ref(&t1, w, b, c, true, signs);
    let (w, b) = next(());
    conv_ref(&t2, w, b, 1, true, signs)
}

pub struct GradReport {
    pub checked: usize,
    pub skipped_at_kinks: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

/// Relative error with a floor on the denominator so that gradients that
/// are numerically zero do not blow up the ratio.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compares the library's analytic gradients of `L = <u, net(x)>` with
/// central differences of the f64 reference at step `h`.
///
/// Parameters whose ±h perturbation flips any ReLU are skipped: the
/// difference quotient straddles a kink there. The relative-error floor is
/// `floor_frac` times the largest numeric gradient.
pub fn check_network_gradients(net: &mut QENetwork, x: &Tensor, u: &Tensor, h: f64, floor_frac: f64) -> GradReport {
    net.forward_train(x).unwrap();
    let analytic = net.backward(u).unwrap();
    let params: Vec<Vec<f64>> = net.params().iter().map(|p| p.iter().map(|&v| v as f64).collect()).collect();
    let x64 = T64::from_tensor(x);
    let u64v: Vec<f64> = u.data().iter().map(|&v| v as f64).collect();
    let loss = |p: &[Vec<f64>], s: &mut Signs| -> f64 {
        let y = net_forward_ref(net, p, &x64, s);
        y.data.iter().zip(&u64v).map(|(a, b)| a * b).sum()
    };
    let mut pairs = Vec::new();
    let mut skipped = 0;
    let mut work = params.clone();
    for (bi, buf) in params.iter().enumerate() {
        for i in 0..buf.len() {
            work[bi][i] = buf[i] + h;
            let mut sp = Signs::default();
            let lp = loss(&work, &mut sp);
            work[bi][i] = buf[i] - h;
            let mut sm = Signs::default();
            let lm = loss(&work, &mut sm);
            work[bi][i] = buf[i];
            if sp != sm {
                skipped += 1;
                continue;
            }
            pairs.push((bi, i, analytic[bi][i] as f64, (lp - lm) / (2.0 * h)));
        }
    }
    let scale = pairs.iter().map(|p| p.3.abs()).fold(0.0, f64::max);
    let mut report = GradReport {
        checked: pairs.len(),
        skipped_at_kinks: skipped,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    for (bi, i, an, fd) in pairs {
        let e = rel_err(an, fd, floor_frac * scale);
        if e > report.max_rel_err {
            report.max_rel_err = e;
            report.worst = format!("buffer {bi} index {i}: analytic {an:e} numeric {fd:e}");
        }
    }
    report
}
