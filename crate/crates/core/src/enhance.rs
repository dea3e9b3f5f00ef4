//! Decoder-side enhancement of reconstructed frames.
//!
//! Intra frames go through the intra model in one pass. Inter frames are
//! enhanced block by block: intra blocks with the intra model, inter blocks
//! with the inter model, skip blocks with the prediction-unaware model. Each
//! block is processed together with a halo as wide as the model's receptive
//! field (clipped at the frame border), so the result is identical to running
//! the three models over the whole frame and compositing by block type.

use std::fs;
use std::path::{Path, PathBuf};

use crate::codec::FrameEnhancer;
use crate::coding_meta::{build_block_type_mask_for, build_qp_map_for, BlockType, FrameMeta, FrameType, QpMap};
use crate::error::{Error, Result};
use crate::frame_io::{Frame420, Plane, PlaneId, MAX_SAMPLE};
use crate::nn::{load_weights, save_weights, QENetwork, Tensor};

/// Largest tile side used for whole-frame inference; bigger frames are
/// processed in haloed tiles, which gives the same output.
pub const MAX_TILE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Intra,
    Inter,
    Unaware,
}

impl ModelKind {
    pub fn file_name(self) -> &'static str {
        match self {
            ModelKind::Intra => "intra.paqe",
            ModelKind::Inter => "inter.paqe",
            ModelKind::Unaware => "unaware.paqe",
        }
    }

    pub fn in_channels(self) -> usize {
        match self {
            ModelKind::Unaware => 2,
            _ => 3,
        }
    }

    /// Model responsible for a block of the given type inside an inter frame.
    pub fn for_block(t: BlockType) -> Self {
        match t {
            BlockType::Intra => ModelKind::Intra,
            BlockType::Inter => ModelKind::Inter,
            BlockType::Skip => ModelKind::Unaware,
        }
    }
}

/// The three deployed networks, shared by all colour planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelTriple {
    pub intra: QENetwork,
    pub inter: QENetwork,
    pub unaware: QENetwork,
}

impl ModelTriple {
    pub fn new(intra: QENetwork, inter: QENetwork, unaware: QENetwork) -> Result<Self> {
        let t = ModelTriple { intra, inter, unaware };
        for kind in [ModelKind::Intra, ModelKind::Inter, ModelKind::Unaware] {
            let got = t.get(kind).in_channels();
            if got != kind.in_channels() {
                return Err(Error::Contract(format!(
                    "{kind:?} model takes {got} input channels, expected {}",
                    kind.in_channels()
                )));
            }
        }
        Ok(t)
    }

    pub fn get(&self, kind: ModelKind) -> &QENetwork {
        match kind {
            ModelKind::Intra => &self.intra,
            ModelKind::Inter => &self.inter,
            ModelKind::Unaware => &self.unaware,
        }
    }

    pub fn paths(dir: impl AsRef<Path>) -> [PathBuf; 3] {
        let d = dir.as_ref();
        [ModelKind::Intra, ModelKind::Inter, ModelKind::Unaware].map(|k| d.join(k.file_name()))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let [a, b, c] = Self::paths(dir);
        save_weights(&self.intra, a)?;
        save_weights(&self.inter, b)?;
        save_weights(&self.unaware, c)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let [a, b, c] = Self::paths(dir);
        Self::new(load_weights(a)?, load_weights(b)?, load_weights(c)?)
    }
}

impl FrameEnhancer for ModelTriple {
    fn enhance(&self, recon: &Frame420, pred: &Frame420, meta: &FrameMeta) -> Result<Frame420> {
        enhance_frame420(recon, pred, meta, self, None)
    }
}

/// One network invocation recorded by the tracing hooks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelCall {
    pub plane: PlaneId,
    pub kind: ModelKind,
    /// Address of the network used, to check that planes share instances.
    pub model_addr: usize,
    /// Output rectangle (x, y, w, h) on the plane grid.
    pub rect: (usize, usize, usize, usize),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EnhanceTrace {
    pub calls: Vec<ModelCall>,
}

/// Per-plane inputs for one enhancement request.
#[derive(Clone, Copy)]
pub struct PlaneInputs<'a> {
    pub recon: &'a Plane,
    pub pred: Option<&'a Plane>,
    pub qp: &'a QpMap,
}

impl<'a> PlaneInputs<'a> {
    pub fn new(recon: &'a Plane, pred: Option<&'a Plane>, qp: &'a QpMap) -> Result<Self> {
        if qp.width != recon.width() || qp.height != recon.height() {
            return Err(Error::Shape(format!(
                "qp map {}x{} does not match plane {}x{}",
                qp.width,
                qp.height,
                recon.width(),
                recon.height()
            )));
        }
        if let Some(p) = pred {
            if !p.same_dims(recon) {
                return Err(Error::Shape(format!(
                    "prediction {}x{} does not match reconstruction {}x{}",
                    p.width(),
                    p.height(),
                    recon.width(),
                    recon.height()
                )));
            }
        }
        Ok(PlaneInputs { recon, pred, qp })
    }

    fn width(&self) -> usize {
        self.recon.width()
    }

    fn height(&self) -> usize {
        self.recon.height()
    }
}

/// Packs `[P, C, Q]` (with prediction) or `[C, Q]` into a `(1, c, h, w)`
/// tensor; samples are divided by 1023.
pub fn assemble_input(recon: &Plane, pred: Option<&Plane>, qp: &QpMap) -> Result<Tensor> {
    let inputs = PlaneInputs::new(recon, pred, qp)?;
    Ok(assemble_region(&inputs, 0, 0, recon.width(), recon.height()))
}

fn assemble_region(inp: &PlaneInputs<'_>, x0: usize, y0: usize, w: usize, h: usize) -> Tensor {
    let c = if inp.pred.is_some() { 3 } else { 2 };
    let mut data = Vec::with_capacity(c * w * h);
    let scale = MAX_SAMPLE as f32;
    if let Some(p) = inp.pred {
        for y in y0..y0 + h {
            data.extend(p.data()[y * p.width() + x0..y * p.width() + x0 + w].iter().map(|&v| v as f32 / scale));
        }
    }
    let r = inp.recon;
    for y in y0..y0 + h {
        data.extend(r.data()[y * r.width() + x0..y * r.width() + x0 + w].iter().map(|&v| v as f32 / scale));
    }
    for y in y0..y0 + h {
        data.extend(inp.qp.values[y * inp.qp.width + x0..y * inp.qp.width + x0 + w].iter().map(|&v| v as f32));
    }
    Tensor::from_vec([1, c, h, w], data).expect("finite inputs")
}

/// Maps a network output in [0, 1] back to a sample: clamp, scale by 1023,
/// round half up.
#[inline]
pub fn to_sample(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * MAX_SAMPLE as f32 + 0.5).floor() as u16
}

/// Runs `model` and returns the enhanced samples of rectangle
/// `(x, y, w, h)`, feeding it the rectangle plus a halo of the model's
/// receptive radius clipped to the plane.
fn run_rect(
    model: &QENetwork,
    inp: &PlaneInputs<'_>,
    (x, y, w, h): (usize, usize, usize, usize),
) -> Result<Vec<u16>> {
    let want = model.in_channels();
    let have = if inp.pred.is_some() { 3 } else { 2 };
    if want != have {
        return Err(Error::Contract(format!(
            "model takes {want} input channels but the request provides {have}"
        )));
    }
    let r = model.config().receptive_radius();
    let hx0 = x.saturating_sub(r);
    let hy0 = y.saturating_sub(r);
    let hx1 = (x + w + r).min(inp.width());
    let hy1 = (y + h + r).min(inp.height());
    let input = assemble_region(inp, hx0, hy0, hx1 - hx0, hy1 - hy0);
    let out = model.forward(&input)?;
    let ow = hx1 - hx0;
    let mut samples = Vec::with_capacity(w * h);
    for yy in 0..h {
        let row = (y - hy0 + yy) * ow + (x - hx0);
        samples.extend(out.data()[row..row + w].iter().map(|&v| to_sample(v)));
    }
    Ok(samples)
}

fn paste_rect(dst: &mut Plane, samples: &[u16], (x, y, w, h): (usize, usize, usize, usize)) {
    for yy in 0..h {
        for xx in 0..w {
            dst.set(x + xx, y + yy, samples[yy * w + xx] as i32);
        }
    }
}

/// Whole-plane inference with one model, tiled at [`MAX_TILE`].
pub fn enhance_full(
    model: &QENetwork,
    inp: &PlaneInputs<'_>,
    plane: PlaneId,
    kind: ModelKind,
    mut trace: Option<&mut EnhanceTrace>,
) -> Result<Plane> {
    let (w, h) = (inp.width(), inp.height());
    let mut out = Plane::filled(w, h, 0);
    for ty in (0..h).step_by(MAX_TILE) {
        for tx in (0..w).step_by(MAX_TILE) {
            let rect = (tx, ty, MAX_TILE.min(w - tx), MAX_TILE.min(h - ty));
            let s = run_rect(model, inp, rect)?;
            paste_rect(&mut out, &s, rect);
            if let Some(t) = trace.as_deref_mut() {
                t.calls.push(ModelCall {
                    plane,
                    kind,
                    model_addr: model as *const QENetwork as usize,
                    rect,
                });
            }
        }
    }
    Ok(out)
}

fn require_pred<'a>(pred: Option<&'a Plane>) -> Result<&'a Plane> {
    pred.ok_or_else(|| Error::Contract("prediction-aware enhancement needs the prediction plane".into()))
}

/// Enhances an intra-coded plane with the intra model.
pub fn enhance_intra_plane(
    inp: &PlaneInputs<'_>,
    plane: PlaneId,
    models: &ModelTriple,
    trace: Option<&mut EnhanceTrace>,
) -> Result<Plane> {
    require_pred(inp.pred)?;
    enhance_full(&models.intra, inp, plane, ModelKind::Intra, trace)
}

/// Block-level dispatch over an inter-coded plane.
pub fn enhance_inter_plane(
    inp: &PlaneInputs<'_>,
    meta: &FrameMeta,
    plane: PlaneId,
    models: &ModelTriple,
    mut trace: Option<&mut EnhanceTrace>,
) -> Result<Plane> {
    let pred = require_pred(inp.pred)?;
    let unaware = PlaneInputs { pred: None, ..*inp };
    let mut out = Plane::filled(inp.width(), inp.height(), 0);
    for b in &meta.blocks {
        let kind = ModelKind::for_block(b.block_type);
        let rect = b.rect_on(plane);
        let model = models.get(kind);
        let src = if kind == ModelKind::Unaware {
            &unaware
        } else {
            &PlaneInputs { pred: Some(pred), ..*inp }
        };
        let s = run_rect(model, src, rect)?;
        paste_rect(&mut out, &s, rect);
        if let Some(t) = trace.as_deref_mut() {
            t.calls.push(ModelCall {
                plane,
                kind,
                model_addr: model as *const QENetwork as usize,
                rect,
            });
        }
    }
    Ok(out)
}

/// Frame-level alternative to [`enhance_inter_plane`]: each model runs over
/// the whole plane and the outputs are composited with the block-type mask.
pub fn enhance_inter_plane_by_mask(
    inp: &PlaneInputs<'_>,
    meta: &FrameMeta,
    luma_dims: (usize, usize),
    plane: PlaneId,
    models: &ModelTriple,
) -> Result<Plane> {
    require_pred(inp.pred)?;
    let mask = build_block_type_mask_for(meta, luma_dims.0, luma_dims.1, plane)?;
    let unaware = PlaneInputs { pred: None, ..*inp };
    let mut layers: [Option<Plane>; 3] = [None, None, None];
    for (i, t) in [BlockType::Intra, BlockType::Inter, BlockType::Skip].iter().enumerate() {
        if mask.contains(t) {
            let kind = ModelKind::for_block(*t);
            let src = if kind == ModelKind::Unaware { &unaware } else { inp };
            layers[i] = Some(enhance_full(models.get(kind), src, plane, kind, None)?);
        }
    }
    let mut out = Plane::filled(inp.width(), inp.height(), 0);
    for (i, t) in mask.iter().enumerate() {
        let layer = match t {
            BlockType::Intra => &layers[0],
            BlockType::Inter => &layers[1],
            BlockType::Skip => &layers[2],
        };
        let src = layer.as_ref().expect("computed for present types");
        out.set(i % inp.width(), i / inp.width(), src.data()[i] as i32);
    }
    Ok(out)
}

/// Enhances one plane of a frame, choosing the path from the frame type.
pub fn enhance_plane(
    recon: &Frame420,
    pred: &Frame420,
    meta: &FrameMeta,
    plane: PlaneId,
    models: &ModelTriple,
    trace: Option<&mut EnhanceTrace>,
) -> Result<Plane> {
    let (w, h) = (recon.width(), recon.height());
    let qp = build_qp_map_for(meta, w, h, plane)?;
    let inp = PlaneInputs::new(recon.plane(plane), Some(pred.plane(plane)), &qp)?;
    match meta.frame_type {
        FrameType::I => enhance_intra_plane(&inp, plane, models, trace),
        FrameType::B => enhance_inter_plane(&inp, meta, plane, models, trace),
    }
}

fn check_pair(recon: &Frame420, pred: &Frame420) -> Result<()> {
    if recon.width() != pred.width() || recon.height() != pred.height() {
        return Err(Error::Shape(format!(
            "prediction {}x{} does not match reconstruction {}x{}",
            pred.width(),
            pred.height(),
            recon.width(),
            recon.height()
        )));
    }
    Ok(())
}

/// Prediction-aware enhancement of all three planes with the same models.
pub fn enhance_frame420(
    recon: &Frame420,
    pred: &Frame420,
    meta: &FrameMeta,
    models: &ModelTriple,
    mut trace: Option<&mut EnhanceTrace>,
) -> Result<Frame420> {
    check_pair(recon, pred)?;
    let mut out = recon.clone();
    for plane in PlaneId::ALL {
        *out.plane_mut(plane) = enhance_plane(recon, pred, meta, plane, models, trace.as_deref_mut())?;
    }
    Ok(out)
}

/// Prediction-unaware enhancement: the two-input model over every plane of
/// the frame, regardless of coding type.
pub fn enhance_frame420_unaware(recon: &Frame420, meta: &FrameMeta, model: &QENetwork) -> Result<Frame420> {
    let (w, h) = (recon.width(), recon.height());
    let mut out = recon.clone();
    for plane in PlaneId::ALL {
        let qp = build_qp_map_for(meta, w, h, plane)?;
        let inp = PlaneInputs::new(recon.plane(plane), None, &qp)?;
        *out.plane_mut(plane) = enhance_full(model, &inp, plane, ModelKind::Unaware, None)?;
    }
    Ok(out)
}

/// How a decoded sequence is post-processed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PostMethod {
    /// Coding-type dispatch over the three models, with prediction input.
    Aware,
    /// The prediction-unaware model alone.
    Unaware,
}

/// Post-processes a decoded sequence (POC order). `meta` may be in any
/// order; `pred` is only read by the aware method.
pub fn enhance_sequence(
    recon: &[Frame420],
    pred: Option<&[Frame420]>,
    meta: &[FrameMeta],
    models: &ModelTriple,
    method: PostMethod,
) -> Result<Vec<Frame420>> {
    recon
        .iter()
        .map(|r| {
            let m = meta
                .iter()
                .find(|m| m.poc == r.poc)
                .ok_or_else(|| Error::Malformed(format!("no metadata for poc {}", r.poc)))?;
            match method {
                PostMethod::Unaware => enhance_frame420_unaware(r, m, &models.unaware),
                PostMethod::Aware => {
                    let p = pred
                        .and_then(|p| p.get(r.poc as usize))
                        .ok_or_else(|| Error::Contract(format!("no prediction frame for poc {}", r.poc)))?;
                    enhance_frame420(r, p, m, models, None)
                }
            }
        })
        .collect()
}
