pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment estimates for a list of parameter buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    step: u64,
}

impl AdamState {
    /// Zeroed moments shaped like `params`.
    pub fn new(sizes: &[usize]) -> Self {
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of every buffer in `params`.
pub fn adam_step(params: &mut [&mut [f32]], grads: &[Vec<f32>], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient count");
    assert_eq!(params.len(), state.m.len(), "optimizer state size");
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (k, p) in params.iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[k], &mut state.v[k], &grads[k]);
        assert_eq!(p.len(), g.len(), "buffer {k} size");
        for i in 0..p.len() {
            let gi = g[i] as f64;
            let mi = BETA1 * m[i] as f64 + (1.0 - BETA1) * gi;
            let vi = BETA2 * v[i] as f64 + (1.0 - BETA2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let mhat = mi / c1;
            let vhat = vi / c2;
            p[i] = (p[i] as f64 - lr * mhat / (vhat.sqrt() + ADAM_EPS)) as f32;
        }
    }
}
