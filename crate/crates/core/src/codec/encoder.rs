use std::collections::HashMap;

use crate::coding_meta::{BlockRecord, BlockType, FrameMeta, FrameType, ModeInfo};
use crate::error::{Error, Result};
use crate::frame_io::{Frame420, Plane, PlaneId};

use super::config::EncoderConfig;
use super::gop::{coding_order, FramePlan};
use super::inter::{motion_compensate, motion_search, MotionVector};
use super::intra::{
    code_residual, intra_predict_block, rd_cost, rd_select_intra_mode, reconstruct, sse, IntraMode,
    Neighbors, RdDecision,
};
use super::quant::{quantize_residual, residual_bits};

/// Bits charged for an inter mode before motion and residual.
pub const INTER_MODE_BITS: u32 = 3;
/// Total bits charged for a skip block.
pub const SKIP_BITS: u32 = 1;

/// Quantized residual levels of one non-skip block, per plane.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BlockResidual {
    pub y: Vec<i16>,
    pub u: Vec<i16>,
    pub v: Vec<i16>,
}

impl BlockResidual {
    pub fn plane(&self, id: PlaneId) -> &[i16] {
        match id {
            PlaneId::Y => &self.y,
            PlaneId::U => &self.u,
            PlaneId::V => &self.v,
        }
    }
}

/// Candidate coding choice for a luma block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockChoice {
    Intra(IntraMode),
    Inter { mv: MotionVector, ref_poc: u32 },
    Skip { mv: MotionVector, ref_poc: u32 },
}

impl BlockChoice {
    pub fn block_type(self) -> BlockType {
        match self {
            BlockChoice::Intra(_) => BlockType::Intra,
            BlockChoice::Inter { .. } => BlockType::Inter,
            BlockChoice::Skip { .. } => BlockType::Skip,
        }
    }

    pub fn mode_info(self) -> ModeInfo {
        match self {
            BlockChoice::Intra(m) => ModeInfo::Intra { ipm: m.index() },
            BlockChoice::Inter { mv, ref_poc } | BlockChoice::Skip { mv, ref_poc } => ModeInfo::Inter {
                mv: [mv.dx, mv.dy],
                ref_poc,
            },
        }
    }

    pub(crate) fn from_record(b: &BlockRecord) -> Result<Self> {
        match (b.block_type, b.mode) {
            (BlockType::Intra, Some(ModeInfo::Intra { ipm })) => IntraMode::from_index(ipm)
                .map(BlockChoice::Intra)
                .ok_or_else(|| Error::Malformed(format!("unknown intra mode {ipm}"))),
            (BlockType::Inter, Some(ModeInfo::Inter { mv, ref_poc })) => Ok(BlockChoice::Inter {
                mv: MotionVector::new(mv[0], mv[1]),
                ref_poc,
            }),
            (BlockType::Skip, Some(ModeInfo::Inter { mv, ref_poc })) => Ok(BlockChoice::Skip {
                mv: MotionVector::new(mv[0], mv[1]),
                ref_poc,
            }),
            _ => Err(Error::Malformed(format!(
                "block at ({}, {}) lacks usable mode information",
                b.x, b.y
            ))),
        }
    }
}

/// Everything a post-reconstruction loop stage sees for one frame.
pub struct LoopFilterInput<'a> {
    pub plan: &'a FramePlan,
    pub original: &'a Frame420,
    pub recon: &'a Frame420,
    pub pred: &'a Frame420,
    pub meta: &'a FrameMeta,
}

/// Hook run after a frame is reconstructed and before it enters the
/// reference buffer. Returning a frame replaces the reconstruction (and sets
/// the frame's `ilf_flag`).
pub trait LoopFilter {
    fn apply(&mut self, input: &LoopFilterInput<'_>) -> Result<Option<Frame420>>;

    /// Per-frame signalling cost added to the rate proxy.
    fn signalling_bits(&self) -> u32 {
        0
    }
}

/// Deterministic frame-level enhancement replayed by the decoder for frames
/// whose `ilf_flag` is set.
pub trait FrameEnhancer {
    fn enhance(&self, recon: &Frame420, pred: &Frame420, meta: &FrameMeta) -> Result<Frame420>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameRate {
    pub poc: u32,
    pub bits: u64,
}

/// Result of encoding a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodeOutput {
    /// Reconstructed frames (after any loop stage), in POC order.
    pub recon: Vec<Frame420>,
    /// Prediction signal per frame, in POC order.
    pub pred: Vec<Frame420>,
    /// Side information, in coding order.
    pub meta: Vec<FrameMeta>,
    /// Residual levels of every non-skip block, in metadata order.
    pub residual: Vec<BlockResidual>,
    /// Rate proxy per frame, in POC order.
    pub rates: Vec<FrameRate>,
}

impl EncodeOutput {
    pub fn total_bits(&self) -> u64 {
        self.rates.iter().map(|r| r.bits).sum()
    }

    pub fn meta_for(&self, poc: u32) -> Option<&FrameMeta> {
        self.meta.iter().find(|m| m.poc == poc)
    }
}

pub fn encode_sequence(frames: &[Frame420], config: &EncoderConfig) -> Result<EncodeOutput> {
    encode_sequence_with(frames, config, None)
}

/// Encodes with an optional in-loop stage.
pub fn encode_sequence_with(
    frames: &[Frame420],
    config: &EncoderConfig,
    mut loop_filter: Option<&mut dyn LoopFilter>,
) -> Result<EncodeOutput> {
    config.validate()?;
    let first = frames
        .first()
        .ok_or_else(|| Error::Contract("cannot encode an empty sequence".into()))?;
    let (width, height) = (first.width(), first.height());
    if frames.iter().any(|f| f.width() != width || f.height() != height) {
        return Err(Error::Contract("all frames must share dimensions".into()));
    }

    let plans = coding_order(frames.len(), config.gop_size, config.intra_period);
    let mut dpb: HashMap<u32, Frame420> = HashMap::new();
    let mut preds: HashMap<u32, Frame420> = HashMap::new();
    let mut metas = Vec::with_capacity(plans.len());
    let mut residual = Vec::new();
    let mut rates = Vec::with_capacity(plans.len());

    for plan in &plans {
        let original = &frames[plan.poc as usize];
        let refs: Vec<(u32, &Frame420)> = plan.refs.iter().map(|p| (*p, &dpb[p])).collect();
        let qp = config.frame_qp(plan.temporal_layer);
        let coded = encode_frame(original, plan, &refs, qp, config)?;
        let mut meta = coded.meta;
        let mut recon = coded.recon;
        let mut bits = coded.bits;
        if let Some(filter) = loop_filter.as_deref_mut() {
            bits += filter.signalling_bits() as u64;
            let input = LoopFilterInput {
                plan,
                original,
                recon: &recon,
                pred: &coded.pred,
                meta: &meta,
            };
            if let Some(filtered) = filter.apply(&input)? {
                recon = filtered;
                recon.poc = plan.poc;
                meta.ilf_flag = true;
            }
        }
        residual.extend(coded.residual);
        rates.push(FrameRate { poc: plan.poc, bits });
        preds.insert(plan.poc, coded.pred);
        dpb.insert(plan.poc, recon);
        metas.push(meta);
    }

    rates.sort_by_key(|r| r.poc);
    let mut recon_out = Vec::with_capacity(frames.len());
    let mut pred_out = Vec::with_capacity(frames.len());
    for poc in 0..frames.len() as u32 {
        recon_out.push(dpb.remove(&poc).expect("every frame is coded"));
        pred_out.push(preds.remove(&poc).expect("every frame is coded"));
    }
    Ok(EncodeOutput {
        recon: recon_out,
        pred: pred_out,
        meta: metas,
        residual,
        rates,
    })
}

struct CodedFrame {
    recon: Frame420,
    pred: Frame420,
    meta: FrameMeta,
    residual: Vec<BlockResidual>,
    bits: u64,
}

/// Raster-order block grid of a frame; edge blocks shrink to fit.
pub fn block_grid(width: usize, height: usize, block_size: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for y in (0..height).step_by(block_size) {
        for x in (0..width).step_by(block_size) {
            out.push((x, y, block_size.min(width - x), block_size.min(height - y)));
        }
    }
    out
}

fn encode_frame(
    original: &Frame420,
    plan: &FramePlan,
    refs: &[(u32, &Frame420)],
    qp: u8,
    config: &EncoderConfig,
) -> Result<CodedFrame> {
    let (width, height) = (original.width(), original.height());
    let lambda = config.lambda(qp)?;
    let mut recon = Frame420::filled(width, height, 0, plan.poc);
    let mut pred = Frame420::filled(width, height, 0, plan.poc);
    let mut blocks = Vec::new();
    let mut residual = Vec::new();
    let mut bits = 0u64;

    for (x, y, w, h) in block_grid(width, height, config.block_size) {
        let orig_y = original.y.crop(x, y, w, h);
        let orig_y = orig_y.data();

        let neighbors = Neighbors::gather(&recon.y, x, y, w, h);
        let (intra, intra_block) = rd_select_intra_mode(orig_y, &neighbors, w, h, qp, lambda);
        let mut best = (
            RdDecision::new(BlockChoice::Intra(intra.mode), intra.distortion, intra.rate, lambda),
            Some(intra_block.levels),
        );

        if plan.frame_type == FrameType::B {
            let mut skips = Vec::with_capacity(refs.len());
            for &(ref_poc, reference) in refs {
                let (mv, _) = motion_search(orig_y, &reference.y, x, y, w, h, config.search_range);
                let mc = motion_compensate(&reference.y, x, y, w, h, mv);
                skips.push((mv, ref_poc, sse(orig_y, &mc)));
                let (coded, d) = code_residual(orig_y, mc, qp);
                let rate = INTER_MODE_BITS + mv.bits() + residual_bits(&coded.levels);
                if rd_cost(d, rate, lambda) < best.0.cost {
                    best = (
                        RdDecision::new(BlockChoice::Inter { mv, ref_poc }, d, rate, lambda),
                        Some(coded.levels),
                    );
                }
            }
            for (mv, ref_poc, d) in skips {
                if rd_cost(d, SKIP_BITS, lambda) < best.0.cost {
                    best = (
                        RdDecision::new(BlockChoice::Skip { mv, ref_poc }, d, SKIP_BITS, lambda),
                        None,
                    );
                }
            }
        }

        let (decision, luma_levels) = best;
        let choice = decision.mode;
        bits += decision.rate as u64;

        let mut block_res = BlockResidual::default();
        for plane in PlaneId::ALL {
            let (px, py, pw, ph) = scale_rect(plane, x, y, w, h);
            let p = predict(choice, &recon, refs, plane, px, py, pw, ph)?;
            let rec = match (plane, choice) {
                (_, BlockChoice::Skip { .. }) => p.clone(),
                (PlaneId::Y, _) => {
                    let levels = luma_levels.clone().expect("non-skip blocks carry levels");
                    let rec = reconstruct(&p, &levels, qp);
                    block_res.y = levels;
                    rec
                }
                (_, _) => {
                    let orig_c = original.plane(plane).crop(px, py, pw, ph);
                    let resid: Vec<i32> = orig_c
                        .data()
                        .iter()
                        .zip(&p)
                        .map(|(&o, &q)| o as i32 - q as i32)
                        .collect();
                    let levels = quantize_residual(&resid, qp);
                    bits += levels.iter().filter(|&&l| l != 0).count() as u64 * 6;
                    let rec = reconstruct(&p, &levels, qp);
                    if plane == PlaneId::U {
                        block_res.u = levels;
                    } else {
                        block_res.v = levels;
                    }
                    rec
                }
            };
            paste(pred.plane_mut(plane), &p, px, py, pw, ph);
            paste(recon.plane_mut(plane), &rec, px, py, pw, ph);
        }
        if !matches!(choice, BlockChoice::Skip { .. }) {
            residual.push(block_res);
        }
        blocks.push(BlockRecord {
            x: x as u32,
            y: y as u32,
            w: w as u32,
            h: h as u32,
            block_type: choice.block_type(),
            qp,
            mode: Some(choice.mode_info()),
        });
    }

    let meta = FrameMeta {
        poc: plan.poc,
        frame_type: plan.frame_type,
        temporal_layer: plan.temporal_layer,
        base_qp: config.base_qp,
        ilf_flag: false,
        blocks,
    };
    Ok(CodedFrame {
        recon,
        pred,
        meta,
        residual,
        bits,
    })
}

pub(crate) fn scale_rect(plane: PlaneId, x: usize, y: usize, w: usize, h: usize) -> (usize, usize, usize, usize) {
    if plane.is_chroma() {
        (x / 2, y / 2, w / 2, h / 2)
    } else {
        (x, y, w, h)
    }
}

/// Prediction of one plane of a block under `choice`, using the partially
/// reconstructed current frame for intra and the reference set for inter.
#[allow(clippy::too_many_arguments)]
pub(crate) fn predict(
    choice: BlockChoice,
    current: &Frame420,
    refs: &[(u32, &Frame420)],
    plane: PlaneId,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> Result<Vec<u16>> {
    Ok(match choice {
        BlockChoice::Intra(mode) => {
            let n = Neighbors::gather(current.plane(plane), x, y, w, h);
            intra_predict_block(&n, mode, w, h)
        }
        BlockChoice::Inter { mv, ref_poc } | BlockChoice::Skip { mv, ref_poc } => {
            let reference = refs
                .iter()
                .find(|(p, _)| *p == ref_poc)
                .map(|(_, f)| *f)
                .ok_or_else(|| Error::Malformed(format!("reference poc {ref_poc} is not available")))?;
            let mv = if plane.is_chroma() { mv.chroma() } else { mv };
            motion_compensate(reference.plane(plane), x, y, w, h, mv)
        }
    })
}

pub(crate) fn paste(dst: &mut Plane, src: &[u16], x: usize, y: usize, w: usize, h: usize) {
    for r in 0..h {
        for c in 0..w {
            dst.set(x + c, y + r, src[r * w + c] as i32);
        }
    }
}
