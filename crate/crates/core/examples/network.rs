//! The enhancement network on its own: shapes, a few Adam steps on random
//! data, and a weight-file round trip.

use paqe::nn::{l1_loss, weights_from_bytes, weights_to_bytes, NetConfig, QENetwork, Tensor};
use paqe::training::Trainer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> paqe::Result<()> {
    let cfg = NetConfig::desk(3);
    let net = QENetwork::new(cfg, 1)?;
    println!(
        "{} convolutions, receptive radius {}, {} parameters",
        net.conv_count(),
        cfg.receptive_radius(),
        net.param_count()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut rand = |shape: [usize; 4]| {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    };
    let x = rand([4, 3, 24, 24]);
    let target = rand([4, 1, 24, 24]);
    let mut trainer = Trainer::new(net);
    for step in 0..5 {
        let loss = trainer.step(&x, &target, 1e-3)?;
        println!("step {step}: L1 {loss:.5}");
    }
    let (after, _) = l1_loss(&trainer.net.forward(&x)?, &target)?;
    println!("inference-mode L1 {after:.5}");

    let bytes = weights_to_bytes(&trainer.net);
    assert_eq!(weights_from_bytes(&bytes)?, trainer.net);
    println!("weight container: {} bytes, round trip exact", bytes.len());
    Ok(())
}
