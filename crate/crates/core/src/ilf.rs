//! Enhancement inside the coding loop: enhanced frames replace their
//! reconstruction in the reference buffer, either for a fixed set of
//! temporal layers or per frame when it lowers the luma MSE.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::codec::{encode_sequence_with, EncodeOutput, EncoderConfig, FrameEnhancer, LoopFilter, LoopFilterInput};
use crate::coding_meta::{BlockType, FrameMeta, FrameType};
use crate::error::{Error, Result};
use crate::frame_io::{Frame420, PlaneId};
use crate::metrics::{mean_psnr, mse, psnr_from_mse, RdRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IlfMode {
    /// No in-loop enhancement.
    Ref,
    /// I-frames only.
    CI,
    /// I-frames and every frame with temporal layer ≤ j.
    C(u8),
    /// Every frame, kept only when its luma MSE drops.
    Adaptive,
}

impl IlfMode {
    pub const ALL: [IlfMode; 8] = [
        IlfMode::Ref,
        IlfMode::CI,
        IlfMode::C(0),
        IlfMode::C(1),
        IlfMode::C(2),
        IlfMode::C(3),
        IlfMode::C(4),
        IlfMode::Adaptive,
    ];

    /// The fixed configurations.
    pub const FIXED: [IlfMode; 6] = [
        IlfMode::CI,
        IlfMode::C(0),
        IlfMode::C(1),
        IlfMode::C(2),
        IlfMode::C(3),
        IlfMode::C(4),
    ];

    pub fn label(self) -> String {
        match self {
            IlfMode::Ref => "REF".into(),
            IlfMode::CI => "C_I".into(),
            IlfMode::C(j) => format!("C_{j}"),
            IlfMode::Adaptive => "ADAPTIVE".into(),
        }
    }

    /// Whether the mode runs the enhancer on this frame at all.
    pub fn selects(self, frame_type: FrameType, temporal_layer: u32) -> bool {
        match self {
            IlfMode::Ref => false,
            IlfMode::CI => frame_type == FrameType::I,
            IlfMode::C(j) => frame_type == FrameType::I || temporal_layer <= j as u32,
            IlfMode::Adaptive => true,
        }
    }
}

impl fmt::Display for IlfMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for IlfMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let l = s.to_ascii_lowercase().replace('_', "");
        Ok(match l.as_str() {
            "ref" => IlfMode::Ref,
            "ci" => IlfMode::CI,
            "adaptive" => IlfMode::Adaptive,
            _ => match l.strip_prefix('c').and_then(|d| d.parse::<u8>().ok()) {
                Some(j) if j <= 4 => IlfMode::C(j),
                _ => {
                    return Err(Error::Config(format!(
                        "unknown ILF mode '{s}' (ref, ci, c0..c4, adaptive)"
                    )))
                }
            },
        })
    }
}

/// Per-frame record of the in-loop stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IlfDecision {
    pub poc: u32,
    /// Luma MSE of the reconstruction against the original.
    pub mse_before: f64,
    /// Luma MSE after enhancement; equals `mse_before` if not evaluated.
    pub mse_after: f64,
    pub flag: bool,
}

struct IlfStage<'a> {
    mode: IlfMode,
    enhancer: Option<&'a dyn FrameEnhancer>,
    decisions: Vec<IlfDecision>,
}

impl LoopFilter for IlfStage<'_> {
    fn apply(&mut self, input: &LoopFilterInput<'_>) -> Result<Option<Frame420>> {
        let before = mse(&input.recon.y, &input.original.y)?;
        let mut decision = IlfDecision {
            poc: input.plan.poc,
            mse_before: before,
            mse_after: before,
            flag: false,
        };
        let mut kept = None;
        if self.mode.selects(input.plan.frame_type, input.plan.temporal_layer) {
            let enhancer = self
                .enhancer
                .ok_or_else(|| Error::Contract("in-loop enhancement requested without models".into()))?;
            let enhanced = enhancer.enhance(input.recon, input.pred, input.meta)?;
            decision.mse_after = mse(&enhanced.y, &input.original.y)?;
            decision.flag = self.mode != IlfMode::Adaptive || decision.mse_after < before;
            if decision.flag {
                kept = Some(enhanced);
            }
        }
        self.decisions.push(decision);
        Ok(kept)
    }

    fn signalling_bits(&self) -> u32 {
        u32::from(self.mode != IlfMode::Ref)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IlfOutput {
    pub encoded: EncodeOutput,
    /// One decision per frame, in POC order.
    pub decisions: Vec<IlfDecision>,
}

/// Encodes with the in-loop stage. `enhancer` may be omitted only in REF
/// mode; REF output is identical to the plain encoder.
pub fn encode_with_ilf(
    frames: &[Frame420],
    config: &EncoderConfig,
    mode: IlfMode,
    enhancer: Option<&dyn FrameEnhancer>,
) -> Result<IlfOutput> {
    if mode == IlfMode::Ref {
        let encoded = encode_sequence_with(frames, config, None)?;
        let decisions = encoded
            .recon
            .iter()
            .zip(frames)
            .map(|(r, o)| {
                let m = mse(&r.y, &o.y)?;
                Ok(IlfDecision {
                    poc: r.poc,
                    mse_before: m,
                    mse_after: m,
                    flag: false,
                })
            })
            .collect::<Result<_>>()?;
        return Ok(IlfOutput { encoded, decisions });
    }
    if enhancer.is_none() {
        return Err(Error::Contract(format!("ILF mode {mode} needs models")));
    }
    let mut stage = IlfStage {
        mode,
        enhancer,
        decisions: Vec::new(),
    };
    let encoded = encode_sequence_with(frames, config, Some(&mut stage))?;
    let mut decisions = stage.decisions;
    decisions.sort_by_key(|d| d.poc);
    Ok(IlfOutput { encoded, decisions })
}

pub fn decisions_csv(decisions: &[IlfDecision]) -> String {
    let mut s = String::from("poc,mse_before,mse_after,flag\n");
    for d in decisions {
        let _ = writeln!(s, "{},{},{},{}", d.poc, d.mse_before, d.mse_after, u8::from(d.flag));
    }
    s
}

pub fn write_decisions(decisions: &[IlfDecision], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, decisions_csv(decisions)).map_err(|e| Error::io(path, e))
}

/// Coder settings for the two-frame multiple-enhancement experiment: one
/// I-frame followed by one B-frame at the same qp. Motion search is off, so
/// static content is predicted from the co-located reference block.
pub fn two_frame_config(base_qp: u8) -> EncoderConfig {
    EncoderConfig {
        gop_size: 2,
        intra_period: 0,
        layer_qp_offsets: vec![0; 5],
        search_range: 0,
        ..EncoderConfig::default().with_qp(base_qp)
    }
}

/// Intermediate signals of the two-frame chain, frame 1 intra and frame 2
/// predicted from the enhanced frame 1.
#[derive(Clone, Debug)]
pub struct EnhancementChain {
    pub c1: Frame420,
    pub c1_hat: Frame420,
    pub p2: Frame420,
    pub c2: Frame420,
    pub c2_hat: Frame420,
    /// The enhancer applied to `c1_hat` with frame 2's side information.
    pub twice: Frame420,
    /// Blocks of frame 2 that were not coded as skip, as (x, y, type).
    pub non_skip: Vec<(u32, u32, BlockType)>,
}

impl EnhancementChain {
    pub fn all_skip(&self) -> bool {
        self.non_skip.is_empty()
    }

    /// Frame 2 reconstruction equals its prediction (no residual).
    pub fn recon_is_prediction(&self) -> bool {
        self.c2.same_pixels(&self.p2)
    }

    /// Frame 2 prediction equals the enhanced frame 1.
    pub fn prediction_is_enhanced_reference(&self) -> bool {
        self.p2.same_pixels(&self.c1_hat)
    }

    /// The enhanced frame 2 equals the enhancer applied twice to frame 1.
    pub fn enhanced_twice(&self) -> bool {
        self.c2_hat.same_pixels(&self.twice)
    }

    pub fn holds(&self) -> bool {
        self.all_skip() && self.recon_is_prediction() && self.prediction_is_enhanced_reference() && self.enhanced_twice()
    }
}

/// Encodes two frames with both enhanced in the loop and records the chain.
/// Content that is not static shows up in `non_skip` instead of failing.
pub fn multiple_enhancement_trace(
    frames: &[Frame420],
    base_qp: u8,
    enhancer: &dyn FrameEnhancer,
) -> Result<EnhancementChain> {
    if frames.len() != 2 {
        return Err(Error::Contract(format!("expected 2 frames, got {}", frames.len())));
    }
    let cfg = two_frame_config(base_qp);
    let plain = encode_with_ilf(&frames[..1], &cfg, IlfMode::Ref, None)?;
    let c1 = plain.encoded.recon[0].clone();
    let out = encode_with_ilf(frames, &cfg, IlfMode::C(4), Some(enhancer))?;
    let enc = out.encoded;
    let meta2: &FrameMeta = enc
        .meta_for(1)
        .ok_or_else(|| Error::Contract("second frame missing from the encode".into()))?;
    let c1_hat = enc.recon[0].clone();
    let p2 = enc.pred[1].clone();
    // the unenhanced reconstruction of frame 2 is the prediction plus residual;
    // with all blocks skipped it is the prediction itself
    let mut unenhanced = meta2.clone();
    unenhanced.ilf_flag = false;
    let decoded = crate::codec::decode_sequence(
        &enc.meta.iter().map(|m| if m.poc == 1 { unenhanced.clone() } else { m.clone() }).collect::<Vec<_>>(),
        &enc.residual,
        c1.width(),
        c1.height(),
        Some(enhancer),
    )?;
    let c2 = decoded.recon[1].clone();
    let twice = enhancer.enhance(&c1_hat, &p2, meta2)?;
    let non_skip = meta2
        .blocks
        .iter()
        .filter(|b| b.block_type != BlockType::Skip)
        .map(|b| (b.x, b.y, b.block_type))
        .collect();
    Ok(EnhancementChain {
        c2_hat: enc.recon[1].clone(),
        c1,
        c1_hat,
        p2,
        c2,
        twice,
        non_skip,
    })
}

/// One frame of one encode in a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub mode: IlfMode,
    pub qp: u8,
    pub poc: u32,
    pub bits: u64,
    pub mse_y: f64,
    pub psnr_y: f64,
    pub flag: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    /// |modes| × |qps| × |frames| rows.
    pub frames: Vec<SweepRow>,
    /// Per mode and qp: total bits and mean luma PSNR.
    pub rd: Vec<RdRow>,
}

impl SweepResult {
    pub fn rd_for(&self, mode: IlfMode) -> Vec<&RdRow> {
        let label = mode.label();
        self.rd.iter().filter(|r| r.label == label).collect()
    }

    /// Mean luma PSNR over all qps of a mode.
    pub fn mean_quality(&self, mode: IlfMode) -> Option<f64> {
        let q: Vec<f64> = self.rd_for(mode).iter().map(|r| r.quality).collect();
        mean_psnr(&q)
    }

    pub fn frame(&self, mode: IlfMode, qp: u8, poc: u32) -> Option<&SweepRow> {
        self.frames.iter().find(|r| r.mode == mode && r.qp == qp && r.poc == poc)
    }
}

/// Encodes `frames` at every qp under every mode.
pub fn run_ilf_sweep(
    frames: &[Frame420],
    config: &EncoderConfig,
    enhancer: Option<&dyn FrameEnhancer>,
    qps: &[u8],
    modes: &[IlfMode],
) -> Result<SweepResult> {
    let mut out = SweepResult::default();
    for &mode in modes {
        for &qp in qps {
            let cfg = config.clone().with_qp(qp);
            let res = encode_with_ilf(frames, &cfg, mode, enhancer)?;
            let mut psnrs = Vec::with_capacity(frames.len());
            for (d, rate) in res.decisions.iter().zip(&res.encoded.rates) {
                let mse_y = mse(&res.encoded.recon[d.poc as usize].y, &frames[d.poc as usize].y)?;
                let psnr_y = psnr_from_mse(mse_y);
                psnrs.push(psnr_y);
                out.frames.push(SweepRow {
                    mode,
                    qp,
                    poc: d.poc,
                    bits: rate.bits,
                    mse_y,
                    psnr_y,
                    flag: res.encoded.meta_for(d.poc).is_some_and(|m| m.ilf_flag),
                });
            }
            out.rd.push(RdRow {
                label: mode.label(),
                qp,
                rate_bits: res.encoded.total_bits() as f64,
                quality: mean_psnr(&psnrs).unwrap_or(f64::INFINITY),
                seconds: None,
            });
        }
    }
    Ok(out)
}

pub fn sweep_frames_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("mode,qp,poc,bits,mse_y,psnr_y,flag\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.mode,
            r.qp,
            r.poc,
            r.bits,
            r.mse_y,
            r.psnr_y,
            u8::from(r.flag)
        );
    }
    s
}

/// Enhancer that returns the reconstruction unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityEnhancer;

impl FrameEnhancer for IdentityEnhancer {
    fn enhance(&self, recon: &Frame420, _pred: &Frame420, _meta: &FrameMeta) -> Result<Frame420> {
        Ok(recon.clone())
    }
}

/// Adversarial enhancer: the reconstruction plus deterministic pseudo-random
/// noise of ±`amplitude` on every sample.
#[derive(Clone, Copy, Debug)]
pub struct NoisyIdentity {
    pub amplitude: u16,
    pub seed: u64,
}

impl FrameEnhancer for NoisyIdentity {
    fn enhance(&self, recon: &Frame420, _pred: &Frame420, _meta: &FrameMeta) -> Result<Frame420> {
        let mut out = recon.clone();
        let span = 2 * self.amplitude as u64 + 1;
        for (pi, id) in PlaneId::ALL.into_iter().enumerate() {
            let p = out.plane_mut(id);
            let (w, h) = (p.width(), p.height());
            for y in 0..h {
                for x in 0..w {
                    let mut z = self.seed ^ ((recon.poc as u64) << 40) ^ ((pi as u64) << 36) ^ ((y * w + x) as u64);
                    // splitmix64 finalizer
                    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
                    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
                    z ^= z >> 31;
                    let n = (z % span) as i32 - self.amplitude as i32;
                    let v = p.get(x, y) as i32 + n;
                    p.set(x, y, v);
                }
            }
        }
        Ok(out)
    }
}
