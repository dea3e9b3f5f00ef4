use std::collections::HashMap;

use crate::coding_meta::{BlockType, FrameMeta};
use crate::error::{Error, Result};
use crate::frame_io::{Frame420, PlaneId};

use super::encoder::{paste, predict, scale_rect, BlockChoice, BlockResidual, FrameEnhancer};
use super::intra::reconstruct;

/// Decoded frames in POC order.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutput {
    pub recon: Vec<Frame420>,
    pub pred: Vec<Frame420>,
}

/// Serializes residual levels as little-endian i16, block by block (Y, U, V).
pub fn serialize_residual(residual: &[BlockResidual]) -> Vec<u8> {
    let mut out = Vec::new();
    for b in residual {
        for l in b.y.iter().chain(&b.u).chain(&b.v) {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    out
}

/// Splits a residual sidecar into blocks using the geometry in `meta`.
pub fn parse_residual(bytes: &[u8], meta: &[FrameMeta]) -> Result<Vec<BlockResidual>> {
    if bytes.len() % 2 != 0 {
        return Err(Error::Malformed("residual sidecar has an odd byte count".into()));
    }
    let mut words = bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]));
    let mut out = Vec::new();
    for frame in meta {
        for b in frame.blocks.iter().filter(|b| b.block_type != BlockType::Skip) {
            let mut take = |n: usize| -> Result<Vec<i16>> {
                let v: Vec<i16> = words.by_ref().take(n).collect();
                if v.len() != n {
                    return Err(Error::Malformed(format!(
                        "residual sidecar truncated at poc {} block ({}, {})",
                        frame.poc, b.x, b.y
                    )));
                }
                Ok(v)
            };
            let luma = (b.w * b.h) as usize;
            let chroma = luma / 4;
            out.push(BlockResidual {
                y: take(luma)?,
                u: take(chroma)?,
                v: take(chroma)?,
            });
        }
    }
    if words.next().is_some() {
        return Err(Error::Malformed("residual sidecar has trailing data".into()));
    }
    Ok(out)
}

/// Rebuilds the reconstruction from metadata and residual levels.
///
/// Frames whose `ilf_flag` is set are passed through `enhancer` before they
/// are stored as references, exactly as the encoder did.
pub fn decode_sequence(
    meta: &[FrameMeta],
    residual: &[BlockResidual],
    width: usize,
    height: usize,
    enhancer: Option<&dyn FrameEnhancer>,
) -> Result<DecodeOutput> {
    let mut dpb: HashMap<u32, Frame420> = HashMap::new();
    let mut preds: HashMap<u32, Frame420> = HashMap::new();
    let mut levels = residual.iter();

    for frame_meta in meta {
        frame_meta.validate(width, height)?;
        let mut refs_needed: Vec<u32> = Vec::new();
        for b in &frame_meta.blocks {
            if let BlockChoice::Inter { ref_poc, .. } | BlockChoice::Skip { ref_poc, .. } =
                BlockChoice::from_record(b)?
            {
                if !refs_needed.contains(&ref_poc) {
                    refs_needed.push(ref_poc);
                }
            }
        }
        let refs: Vec<(u32, &Frame420)> = refs_needed
            .iter()
            .map(|p| {
                dpb.get(p)
                    .map(|f| (*p, f))
                    .ok_or_else(|| Error::Malformed(format!("poc {} references undecoded poc {p}", frame_meta.poc)))
            })
            .collect::<Result<_>>()?;

        let mut recon = Frame420::filled(width, height, 0, frame_meta.poc);
        let mut pred = Frame420::filled(width, height, 0, frame_meta.poc);
        for b in &frame_meta.blocks {
            let choice = BlockChoice::from_record(b)?;
            let block_levels = match choice {
                BlockChoice::Skip { .. } => None,
                _ => Some(levels.next().ok_or_else(|| {
                    Error::Malformed(format!("residual missing for poc {} block ({}, {})", frame_meta.poc, b.x, b.y))
                })?),
            };
            for plane in PlaneId::ALL {
                let (px, py, pw, ph) = scale_rect(plane, b.x as usize, b.y as usize, b.w as usize, b.h as usize);
                let p = predict(choice, &recon, &refs, plane, px, py, pw, ph)?;
                let rec = match block_levels {
                    None => p.clone(),
                    Some(l) => {
                        let l = l.plane(plane);
                        if l.len() != pw * ph {
                            return Err(Error::Malformed(format!(
                                "residual size mismatch at poc {} block ({}, {})",
                                frame_meta.poc, b.x, b.y
                            )));
                        }
                        reconstruct(&p, l, b.qp)
                    }
                };
                paste(pred.plane_mut(plane), &p, px, py, pw, ph);
                paste(recon.plane_mut(plane), &rec, px, py, pw, ph);
            }
        }
        if frame_meta.ilf_flag {
            let enhancer = enhancer.ok_or_else(|| {
                Error::Contract(format!("poc {} is loop-filtered but no enhancer was supplied", frame_meta.poc))
            })?;
            recon = enhancer.enhance(&recon, &pred, frame_meta)?;
            recon.poc = frame_meta.poc;
        }
        preds.insert(frame_meta.poc, pred);
        dpb.insert(frame_meta.poc, recon);
    }
    if levels.next().is_some() {
        return Err(Error::Malformed("more residual blocks than non-skip blocks in metadata".into()));
    }

    let n = meta.len() as u32;
    let mut recon_out = Vec::with_capacity(meta.len());
    let mut pred_out = Vec::with_capacity(meta.len());
    for poc in 0..n {
        recon_out.push(dpb.remove(&poc).ok_or_else(|| Error::Malformed(format!("poc {poc} missing from metadata")))?);
        pred_out.push(preds.remove(&poc).expect("pred stored with recon"));
    }
    Ok(DecodeOutput {
        recon: recon_out,
        pred: pred_out,
    })
}
