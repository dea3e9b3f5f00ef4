//! Toy block-based hybrid codec.
//!
//! Spatial-domain quantization, a five-mode intra predictor, integer-pel
//! motion compensation with skip, R-D decisions `J = D + λR` and a dyadic
//! hierarchical GOP with per-layer QP offsets. Rate is a bit-count proxy.

pub mod config;
pub mod decoder;
pub mod encoder;
pub mod gop;
pub mod inter;
pub mod intra;
pub mod quant;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub use config::{lambda_of_qp, EncoderConfig, DEFAULT_LAMBDA_SCALE};
pub use decoder::{decode_sequence, parse_residual, serialize_residual, DecodeOutput};
pub use encoder::{
    encode_sequence, encode_sequence_with, BlockChoice, BlockResidual, EncodeOutput, FrameEnhancer,
    FrameRate, LoopFilter, LoopFilterInput,
};
pub use gop::{coding_order, FramePlan};
pub use inter::{motion_search, MotionVector};
pub use intra::{intra_predict_block, rd_select_intra_mode, IntraMode, Neighbors, RdDecision};
pub use quant::{dequantize, quant_step, quantize_residual};

use crate::coding_meta::{parse_meta, serialize_meta, FrameMeta};
use crate::error::{Error, Result};
use crate::frame_io::{read_raw_video, write_raw_video, Frame420};

/// File set written for an encoded stream called `name`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArtifactPaths {
    pub recon: PathBuf,
    pub pred: PathBuf,
    pub meta: PathBuf,
    pub residual: PathBuf,
    pub rates: PathBuf,
}

impl ArtifactPaths {
    pub fn new(dir: impl AsRef<Path>, name: &str) -> Self {
        let dir = dir.as_ref();
        ArtifactPaths {
            recon: dir.join(format!("{name}.recon.yuv")),
            pred: dir.join(format!("{name}.pred.yuv")),
            meta: dir.join(format!("{name}.meta.jsonl")),
            residual: dir.join(format!("{name}.residual.bin")),
            rates: dir.join(format!("{name}.rates.csv")),
        }
    }
}

/// Writes recon, prediction, metadata, residual and rate files.
pub fn write_artifacts(out: &EncodeOutput, dir: impl AsRef<Path>, name: &str) -> Result<ArtifactPaths> {
    let paths = ArtifactPaths::new(dir, name);
    write_raw_video(&out.recon, &paths.recon)?;
    write_raw_video(&out.pred, &paths.pred)?;
    fs::write(&paths.meta, serialize_meta(&out.meta)).map_err(|e| Error::io(&paths.meta, e))?;
    fs::write(&paths.residual, serialize_residual(&out.residual)).map_err(|e| Error::io(&paths.residual, e))?;
    let mut rates = fs::File::create(&paths.rates).map_err(|e| Error::io(&paths.rates, e))?;
    let mut text = String::from("poc,bits\n");
    for r in &out.rates {
        text.push_str(&format!("{},{}\n", r.poc, r.bits));
    }
    rates.write_all(text.as_bytes()).map_err(|e| Error::io(&paths.rates, e))?;
    Ok(paths)
}

pub fn read_meta_file(path: impl AsRef<Path>) -> Result<Vec<FrameMeta>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_meta(&text)
}

/// Reads a raw stream, naming the file when it does not exist.
pub fn read_stream(path: impl AsRef<Path>, width: usize, height: usize) -> Result<Vec<Frame420>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    read_raw_video(path, width, height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding_meta::{BlockType, FrameType};
    use crate::synth::{generate_clip, static_clip, ClipSpec};

    fn small_cfg(qp: u8) -> EncoderConfig {
        EncoderConfig {
            gop_size: 8,
            intra_period: 16,
            ..EncoderConfig::default()
        }
        .with_qp(qp)
    }

    #[test]
    fn static_gray_is_all_skip() {
        let frames: Vec<Frame420> = (0..9).map(|p| Frame420::filled(32, 32, 600, p)).collect();
        let out = encode_sequence(&frames, &small_cfg(32)).unwrap();
        for m in &out.meta {
            if m.frame_type == FrameType::B {
                assert!(m.blocks.iter().all(|b| b.block_type == BlockType::Skip), "poc {}", m.poc);
            }
        }
        for f in &out.recon {
            assert!(f.same_pixels(&out.recon[0]));
        }
    }

    #[test]
    fn qp4_with_flat_offsets_is_lossless() {
        let frames = generate_clip(&ClipSpec::new(32, 32, 5, 3));
        let cfg = EncoderConfig {
            layer_qp_offsets: vec![0],
            ..small_cfg(4)
        };
        let out = encode_sequence(&frames, &cfg).unwrap();
        for (r, o) in out.recon.iter().zip(&frames) {
            assert!(r.same_pixels(o), "poc {}", o.poc);
        }
    }

    #[test]
    fn cascade_never_refers_to_finer_qp() {
        let frames = generate_clip(&ClipSpec::new(32, 32, 17, 5));
        let cfg = EncoderConfig::default().with_qp(37);
        assert_eq!(cfg.layer_qp_offsets, vec![-4, -2, 0, 1, 2]);
        let out = encode_sequence(&frames, &cfg).unwrap();
        let qp_of = |poc: u32| out.meta_for(poc).unwrap().blocks[0].qp;
        for plan in coding_order(17, cfg.gop_size, cfg.intra_period) {
            for r in &plan.refs {
                assert!(qp_of(plan.poc) >= qp_of(*r));
            }
        }
        assert_eq!(qp_of(0), 33);
        assert_eq!(qp_of(8), 35);
        assert_eq!(qp_of(4), 37);
    }

    #[test]
    fn skip_blocks_copy_prediction_and_store_no_residual() {
        let mut frames = generate_clip(&ClipSpec::new(48, 32, 9, 11).with_motion(0.5));
        frames.truncate(9);
        let out = encode_sequence(&frames, &small_cfg(42)).unwrap();
        let non_skip: usize = out
            .meta
            .iter()
            .map(|m| m.blocks.iter().filter(|b| b.block_type != BlockType::Skip).count())
            .sum();
        assert_eq!(non_skip, out.residual.len());
        let mut skip_seen = 0;
        for m in &out.meta {
            let recon = &out.recon[m.poc as usize];
            let pred = &out.pred[m.poc as usize];
            for b in m.blocks.iter().filter(|b| b.block_type == BlockType::Skip) {
                skip_seen += 1;
                for y in b.y..b.y + b.h {
                    for x in b.x..b.x + b.w {
                        assert_eq!(recon.y.get(x as usize, y as usize), pred.y.get(x as usize, y as usize));
                    }
                }
            }
        }
        assert!(skip_seen > 0);
    }

    #[test]
    fn decoder_replays_encoder_over_three_gops() {
        let frames = generate_clip(&ClipSpec::new(48, 32, 25, 7));
        let out = encode_sequence(&frames, &small_cfg(32)).unwrap();
        let bytes = serialize_residual(&out.residual);
        let residual = parse_residual(&bytes, &out.meta).unwrap();
        let dec = decode_sequence(&out.meta, &residual, 48, 32, None).unwrap();
        assert_eq!(dec.recon, out.recon);
        assert_eq!(dec.pred, out.pred);
    }

    #[test]
    fn truncated_residual_is_rejected() {
        let frames = generate_clip(&ClipSpec::new(32, 32, 3, 2));
        let out = encode_sequence(&frames, &small_cfg(32)).unwrap();
        let mut bytes = serialize_residual(&out.residual);
        bytes.truncate(bytes.len() - 2);
        assert!(matches!(parse_residual(&bytes, &out.meta), Err(Error::Malformed(_))));
        let short = &out.residual[..out.residual.len() - 1];
        assert!(decode_sequence(&out.meta, short, 32, 32, None).is_err());
    }

    #[test]
    fn rate_falls_as_qp_rises() {
        let frames = generate_clip(&ClipSpec::new(64, 64, 9, 21));
        let rates: Vec<u64> = [22u8, 27, 32, 37, 42]
            .iter()
            .map(|&q| encode_sequence(&frames, &small_cfg(q)).unwrap().total_bits())
            .collect();
        assert!(rates.windows(2).all(|w| w[0] > w[1]), "{rates:?}");
    }

    #[test]
    fn decision_records_are_consistent() {
        let frames = static_clip(32, 32, 3, 4);
        let out = encode_sequence(&frames, &small_cfg(37)).unwrap();
        for m in &out.meta {
            m.validate(32, 32).unwrap();
            if m.frame_type == FrameType::I {
                assert!(m.blocks.iter().all(|b| b.block_type == BlockType::Intra));
            }
        }
    }

    #[test]
    fn empty_and_mismatched_inputs_fail() {
        assert!(encode_sequence(&[], &EncoderConfig::default()).is_err());
        let frames = [Frame420::filled(16, 16, 0, 0), Frame420::filled(32, 16, 0, 1)];
        assert!(encode_sequence(&frames, &EncoderConfig::default()).is_err());
    }

    #[test]
    fn artifacts_round_trip() {
        let frames = generate_clip(&ClipSpec::new(32, 32, 4, 8));
        let out = encode_sequence(&frames, &small_cfg(30)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_artifacts(&out, dir.path(), "clip").unwrap();
        let meta = read_meta_file(&paths.meta).unwrap();
        assert_eq!(meta, out.meta);
        let residual = parse_residual(&std::fs::read(&paths.residual).unwrap(), &meta).unwrap();
        let dec = decode_sequence(&meta, &residual, 32, 32, None).unwrap();
        assert_eq!(dec.recon, read_stream(&paths.recon, 32, 32).unwrap());
        let rates = std::fs::read_to_string(&paths.rates).unwrap();
        assert!(rates.starts_with("poc,bits\n0,"));
    }
}
