//! Decoder-side enhancement of a held-out clip with trained models, aware
//! versus unaware, per block type.
//!
//!     cargo run --release --example train_desk -- models/
//!     cargo run --release --example post_processing -- models/

use std::collections::BTreeMap;

use paqe::codec::{encode_sequence, EncoderConfig};
use paqe::enhance::{enhance_sequence, ModelTriple, PostMethod};
use paqe::metrics::psnr;
use paqe::synth::{generate_clip, ClipSpec};

fn main() -> paqe::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "models".into());
    let models = ModelTriple::load(&dir)?;
    let clip = generate_clip(&ClipSpec::new(64, 64, 17, 5000));
    let enc = EncoderConfig {
        gop_size: 8,
        intra_period: 16,
        ..EncoderConfig::default().with_qp(37)
    };
    let coded = encode_sequence(&clip, &enc)?;
    let aware = enhance_sequence(&coded.recon, Some(&coded.pred), &coded.meta, &models, PostMethod::Aware)?;
    let unaware = enhance_sequence(&coded.recon, None, &coded.meta, &models, PostMethod::Unaware)?;

    let mut mean = [0.0; 3];
    for (i, o) in clip.iter().enumerate() {
        for (k, v) in [&coded.recon, &aware, &unaware].iter().enumerate() {
            mean[k] += psnr(&v[i].y, &o.y)? / clip.len() as f64;
        }
    }
    println!("Y-PSNR recon {:.3}, aware {:+.3} dB, unaware {:+.3} dB", mean[0], mean[1] - mean[0], mean[2] - mean[0]);

    // squared error per (frame type, block type)
    let mut acc: BTreeMap<String, [f64; 4]> = BTreeMap::new();
    for m in &coded.meta {
        let poc = m.poc as usize;
        for b in &m.blocks {
            let e = acc.entry(format!("{:?}/{}", m.frame_type, b.block_type)).or_default();
            for y in b.y as usize..(b.y + b.h) as usize {
                for x in b.x as usize..(b.x + b.w) as usize {
                    let o = clip[poc].y.get(x, y) as f64;
                    for (k, v) in [&coded.recon, &aware, &unaware].iter().enumerate() {
                        e[k] += (v[poc].y.get(x, y) as f64 - o).powi(2);
                    }
                    e[3] += 1.0;
                }
            }
        }
    }
    println!("{:<10} {:>6} {:>8} {:>8} {:>8}", "blocks", "pixels", "recon", "aware", "unaware");
    for (k, e) in acc {
        println!("{k:<10} {:>6} {:>8.2} {:>8.2} {:>8.2}", e[3], e[0] / e[3], e[1] / e[3], e[2] / e[3]);
    }
    Ok(())
}
