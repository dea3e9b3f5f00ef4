//! Encode a clip with the hierarchical-B toy codec, decode it from the
//! sidecars and print per-frame statistics.

use paqe::codec::{decode_sequence, encode_sequence, EncoderConfig};
use paqe::coding_meta::BlockType;
use paqe::metrics::psnr;
use paqe::synth::{generate_clip, ClipSpec};

fn main() -> paqe::Result<()> {
    let clip = generate_clip(&ClipSpec::new(64, 64, 17, 11));
    let cfg = EncoderConfig {
        gop_size: 8,
        intra_period: 16,
        ..EncoderConfig::default().with_qp(37)
    };
    let out = encode_sequence(&clip, &cfg)?;
    println!("poc type tid  qp   bits  intra inter skip  psnr_y");
    for m in &out.meta {
        let count = |t| m.blocks.iter().filter(|b| b.block_type == t).count();
        let poc = m.poc as usize;
        println!(
            "{:>3} {:?}    {:>3} {:>3} {:>6}  {:>5} {:>5} {:>4}  {:.2}",
            m.poc,
            m.frame_type,
            m.temporal_layer,
            cfg.frame_qp(m.temporal_layer),
            out.rates[poc].bits,
            count(BlockType::Intra),
            count(BlockType::Inter),
            count(BlockType::Skip),
            psnr(&out.recon[poc].y, &clip[poc].y)?
        );
    }
    let dec = decode_sequence(&out.meta, &out.residual, 64, 64, None)?;
    assert_eq!(dec.recon, out.recon);
    println!("decoder matches encoder; {} bits total", out.total_bits());
    Ok(())
}
