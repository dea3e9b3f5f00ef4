use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Mean absolute error and its subgradient `sign(pred - target) / count`,
/// with `sign(0) = 0`.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "loss shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let count = pred.data().len();
    if count == 0 {
        return Err(Error::Shape("loss of an empty tensor".into()));
    }
    let inv = 1.0 / count as f32;
    let mut grad = Tensor::zeros(pred.shape());
    let mut sum = 0.0f64;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        sum += d.abs() as f64;
        *g = if d > 0.0 {
            inv
        } else if d < 0.0 {
            -inv
        } else {
            0.0
        };
    }
    Ok(((sum / count as f64) as f32, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_is_zero() {
        let t = Tensor::from_vec([1, 1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (l, g) = l1_loss(&t, &t).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_offset() {
        let a = Tensor::from_vec([1, 1, 1, 4], vec![1.0; 4]).unwrap();
        let b = Tensor::from_vec([1, 1, 1, 4], vec![0.5; 4]).unwrap();
        let (l, g) = l1_loss(&a, &b).unwrap();
        assert_eq!(l, 0.5);
        assert!(g.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn random_pair_matches_elementwise_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f32> = (0..300).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f32> = (0..300).map(|_| rng.random_range(0.0..1.0)).collect();
        let oracle = a.iter().zip(&b).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / 300.0;
        let ta = Tensor::from_vec([3, 1, 10, 10], a).unwrap();
        let tb = Tensor::from_vec([3, 1, 10, 10], b).unwrap();
        let (l, _) = l1_loss(&ta, &tb).unwrap();
        assert!((l as f64 - oracle).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch() {
        assert!(l1_loss(&Tensor::zeros([1, 1, 2, 2]), &Tensor::zeros([1, 1, 2, 3])).is_err());
    }
}
