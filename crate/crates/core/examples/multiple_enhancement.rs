//! Two static frames, both enhanced in the loop: the second frame is coded
//! entirely as skip from the enhanced first frame, so enhancing it applies
//! the model a second time.

use paqe::enhance::ModelTriple;
use paqe::ilf::multiple_enhancement_trace;
use paqe::metrics::psnr;
use paqe::nn::{NetConfig, QENetwork};
use paqe::synth::static_clip;

fn main() -> paqe::Result<()> {
    let models = match std::env::args().nth(1) {
        Some(dir) => ModelTriple::load(dir)?,
        None => {
            // pass-through networks with a small brightness lift
            let lifted = |c| -> paqe::Result<QENetwork> {
                let mut n = QENetwork::new(NetConfig::desk(c), 0)?;
                n.out.bias[0] += 2.0 / 1023.0;
                Ok(n)
            };
            ModelTriple::new(lifted(3)?, lifted(3)?, lifted(2)?)?
        }
    };
    let frames = static_clip(64, 64, 2, 21);
    let c = multiple_enhancement_trace(&frames, 37, &models)?;
    println!("non-skip blocks in frame 2: {}", c.non_skip.len());
    println!("C2 == P2:            {}", c.recon_is_prediction());
    println!("P2 == enhanced C1:   {}", c.prediction_is_enhanced_reference());
    println!("Ĉ2 == f(f(C1)):      {}", c.enhanced_twice());
    println!(
        "Y-PSNR  C1 {:.2}  Ĉ1 {:.2}  Ĉ2 {:.2}",
        psnr(&c.c1.y, &frames[0].y)?,
        psnr(&c.c1_hat.y, &frames[0].y)?,
        psnr(&c.c2_hat.y, &frames[1].y)?
    );
    Ok(())
}
