//! Coding metadata of one inter frame: the JSONL record, its QP map and the
//! block-type mask that drives model dispatch.

use paqe::codec::{encode_sequence, EncoderConfig};
use paqe::coding_meta::{build_block_type_mask, build_qp_map, serialize_meta, BlockType};
use paqe::synth::{generate_clip, ClipSpec};

fn main() -> paqe::Result<()> {
    let clip = generate_clip(&ClipSpec::new(64, 32, 5, 3));
    let cfg = EncoderConfig {
        gop_size: 4,
        intra_period: 0,
        ..EncoderConfig::default().with_qp(32)
    };
    let out = encode_sequence(&clip, &cfg)?;
    let meta = out.meta_for(2).expect("poc 2");
    let line = serialize_meta(std::slice::from_ref(meta));
    println!("{}...", &line[..line.len().min(160)]);

    let qp = build_qp_map(meta, 64, 32)?;
    let mask = build_block_type_mask(meta, 64, 32)?;
    println!("qp map (x63), sampled every 8x4:");
    for y in (0..32).step_by(4) {
        let row: Vec<String> = (0..64).step_by(8).map(|x| format!("{:>3.0}", qp.values[y * 64 + x] * 63.0)).collect();
        println!("  {}", row.join(""));
    }
    println!("block types (I intra, P inter, . skip):");
    for y in (0..32).step_by(4) {
        let row: String = (0..64)
            .step_by(4)
            .map(|x| match mask[y * 64 + x] {
                BlockType::Intra => 'I',
                BlockType::Inter => 'P',
                BlockType::Skip => '.',
            })
            .collect();
        println!("  {row}");
    }
    Ok(())
}
