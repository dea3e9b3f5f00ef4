//! Per-frame coding side-information and the rasters derived from it.
//!
//! Metadata travels as one JSON object per line (`<stream>.meta.jsonl`).
//! Blocks are axis-aligned rectangles on the luma grid that tile the frame
//! exactly; chroma geometry is obtained by halving coordinates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::PlaneId;

/// Largest QP of the codec range; QP maps are normalized by it.
pub const QP_MAX: u8 = 63;
pub const QP_MIN: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockType {
    Intra,
    Inter,
    Skip,
}

impl fmt::Display for BlockType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockType::Intra => "intra",
            BlockType::Inter => "inter",
            BlockType::Skip => "skip",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameType {
    I,
    B,
}

/// How a block's prediction was formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeInfo {
    /// Intra prediction mode index.
    Intra { ipm: u8 },
    /// Integer-pel motion vector into the reference frame with the given POC.
    Inter {
        mv: [i32; 2],
        #[serde(rename = "ref")]
        ref_poc: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockRecord {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    #[serde(rename = "type")]
    pub block_type: BlockType,
    #[serde(deserialize_with = "de_qp")]
    pub qp: u8,
    #[serde(default)]
    pub mode: Option<ModeInfo>,
}

fn de_qp<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<u8, D::Error> {
    let q = i64::deserialize(d)?;
    if !(QP_MIN as i64..=QP_MAX as i64).contains(&q) {
        return Err(serde::de::Error::custom(format!(
            "qp {q} outside [{QP_MIN}, {QP_MAX}]"
        )));
    }
    Ok(q as u8)
}

impl BlockRecord {
    /// Block rectangle on the grid of `plane` as (x, y, w, h).
    pub fn rect_on(&self, plane: PlaneId) -> (usize, usize, usize, usize) {
        let (x, y, w, h) = (self.x as usize, self.y as usize, self.w as usize, self.h as usize);
        if plane.is_chroma() {
            (x / 2, y / 2, w / 2, h / 2)
        } else {
            (x, y, w, h)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameMeta {
    pub poc: u32,
    pub frame_type: FrameType,
    pub temporal_layer: u32,
    pub base_qp: u8,
    pub ilf_flag: bool,
    pub blocks: Vec<BlockRecord>,
}

impl FrameMeta {
    /// Checks that the blocks tile a `width`×`height` luma raster exactly,
    /// that every block has even geometry (so chroma tiles too), and that
    /// I-frames carry only intra blocks.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        self.owner_raster(width, height)?;
        for b in &self.blocks {
            if b.x % 2 != 0 || b.y % 2 != 0 || b.w % 2 != 0 || b.h % 2 != 0 {
                return Err(Error::Contract(format!(
                    "poc {}: block at ({}, {}) has odd geometry",
                    self.poc, b.x, b.y
                )));
            }
            if !(QP_MIN..=QP_MAX).contains(&b.qp) {
                return Err(Error::Contract(format!("poc {}: qp {} out of range", self.poc, b.qp)));
            }
        }
        if self.frame_type == FrameType::I
            && self.blocks.iter().any(|b| b.block_type != BlockType::Intra)
        {
            return Err(Error::Contract(format!(
                "poc {}: I-frame contains non-intra blocks",
                self.poc
            )));
        }
        Ok(())
    }

    /// Index of the covering block for every luma pixel.
    fn owner_raster(&self, width: usize, height: usize) -> Result<Vec<u32>> {
        const NONE: u32 = u32::MAX;
        let mut owner = vec![NONE; width * height];
        for (i, b) in self.blocks.iter().enumerate() {
            let (x, y, w, h) = b.rect_on(PlaneId::Y);
            if w == 0 || h == 0 || x + w > width || y + h > height {
                return Err(Error::Contract(format!(
                    "poc {}: block {}x{} at ({}, {}) lies outside the {}x{} frame",
                    self.poc, w, h, x, y, width, height
                )));
            }
            for row in y..y + h {
                for slot in &mut owner[row * width + x..row * width + x + w] {
                    if *slot != NONE {
                        return Err(Error::Contract(format!(
                            "poc {}: blocks {} and {} overlap",
                            self.poc, *slot, i
                        )));
                    }
                    *slot = i as u32;
                }
            }
        }
        if let Some(pos) = owner.iter().position(|&o| o == NONE) {
            return Err(Error::Contract(format!(
                "poc {}: pixel ({}, {}) is not covered by any block",
                self.poc,
                pos % width,
                pos / width
            )));
        }
        Ok(owner)
    }
}

/// Normalized QP raster: each value is the containing block's QP over 63.
#[derive(Clone, Debug, PartialEq)]
pub struct QpMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// Luma QP map of a `width`×`height` frame.
pub fn build_qp_map(meta: &FrameMeta, width: usize, height: usize) -> Result<QpMap> {
    build_qp_map_for(meta, width, height, PlaneId::Y)
}

/// QP map on the grid of `plane`; chroma reuses the luma QP raster at half
/// resolution.
pub fn build_qp_map_for(
    meta: &FrameMeta,
    width: usize,
    height: usize,
    plane: PlaneId,
) -> Result<QpMap> {
    meta.validate(width, height)?;
    let (pw, ph) = plane_dims(width, height, plane);
    let mut values = vec![0.0; pw * ph];
    for b in &meta.blocks {
        let q = b.qp as f64 / QP_MAX as f64;
        let (x, y, w, h) = b.rect_on(plane);
        for row in y..y + h {
            values[row * pw + x..row * pw + x + w].fill(q);
        }
    }
    Ok(QpMap {
        width: pw,
        height: ph,
        values,
    })
}

/// Per-pixel block type of the luma raster.
pub fn build_block_type_mask(meta: &FrameMeta, width: usize, height: usize) -> Result<Vec<BlockType>> {
    build_block_type_mask_for(meta, width, height, PlaneId::Y)
}

pub fn build_block_type_mask_for(
    meta: &FrameMeta,
    width: usize,
    height: usize,
    plane: PlaneId,
) -> Result<Vec<BlockType>> {
    let owner = meta.owner_raster(width, height)?;
    if plane == PlaneId::Y {
        return Ok(owner.iter().map(|&i| meta.blocks[i as usize].block_type).collect());
    }
    meta.validate(width, height)?;
    let (pw, ph) = plane_dims(width, height, plane);
    let mut mask = vec![BlockType::Intra; pw * ph];
    for b in &meta.blocks {
        let (x, y, w, h) = b.rect_on(plane);
        for row in y..y + h {
            mask[row * pw + x..row * pw + x + w].fill(b.block_type);
        }
    }
    Ok(mask)
}

pub(crate) fn plane_dims(width: usize, height: usize, plane: PlaneId) -> (usize, usize) {
    if plane.is_chroma() {
        (width / 2, height / 2)
    } else {
        (width, height)
    }
}

/// One JSON record per frame, newline terminated.
pub fn serialize_meta(stream: &[FrameMeta]) -> String {
    let mut out = String::new();
    for meta in stream {
        out.push_str(&serde_json::to_string(meta).expect("metadata is always serializable"));
        out.push('\n');
    }
    out
}

/// Parses a `.meta.jsonl` document. Blank lines are skipped.
pub fn parse_meta(text: &str) -> Result<Vec<FrameMeta>> {
    let mut stream = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let meta: FrameMeta = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        for b in &meta.blocks {
            let consistent = match (b.block_type, b.mode) {
                (_, None) => true,
                (BlockType::Intra, Some(ModeInfo::Intra { .. })) => true,
                (BlockType::Inter | BlockType::Skip, Some(ModeInfo::Inter { .. })) => true,
                _ => false,
            };
            if !consistent {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("block at ({}, {}): mode does not match type {}", b.x, b.y, b.block_type),
                });
            }
        }
        stream.push(meta);
    }
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(x: u32, y: u32, w: u32, h: u32, t: BlockType, qp: u8) -> BlockRecord {
        BlockRecord {
            x,
            y,
            w,
            h,
            block_type: t,
            qp,
            mode: None,
        }
    }

    fn frame(frame_type: FrameType, blocks: Vec<BlockRecord>) -> FrameMeta {
        FrameMeta {
            poc: 0,
            frame_type,
            temporal_layer: 0,
            base_qp: 32,
            ilf_flag: false,
            blocks,
        }
    }

    #[test]
    fn qp_63_maps_to_one() {
        let m = frame(FrameType::I, vec![block(0, 0, 8, 8, BlockType::Intra, 63)]);
        let q = build_qp_map(&m, 8, 8).unwrap();
        assert!(q.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn qp_37_direct_evaluation() {
        let m = frame(FrameType::I, vec![block(0, 0, 8, 8, BlockType::Intra, 37)]);
        let q = build_qp_map(&m, 8, 8).unwrap();
        assert!(q.values.iter().all(|&v| (v - 0.587302).abs() < 1e-6));
    }

    #[test]
    fn two_block_map_is_piecewise() {
        let m = frame(
            FrameType::I,
            vec![
                block(0, 0, 8, 8, BlockType::Intra, 22),
                block(8, 0, 8, 8, BlockType::Intra, 42),
            ],
        );
        let q = build_qp_map(&m, 16, 8).unwrap();
        // lookup oracle: x < 8 belongs to the left block
        for y in 0..8 {
            for x in 0..16 {
                let expect = if x < 8 { 22.0 / 63.0 } else { 42.0 / 63.0 };
                assert_eq!(q.values[y * 16 + x], expect);
            }
        }
    }

    #[test]
    fn chroma_qp_map_halves_geometry() {
        let m = frame(
            FrameType::I,
            vec![
                block(0, 0, 8, 8, BlockType::Intra, 22),
                block(8, 0, 8, 8, BlockType::Intra, 42),
            ],
        );
        let q = build_qp_map_for(&m, 16, 8, PlaneId::U).unwrap();
        assert_eq!((q.width, q.height), (8, 4));
        assert_eq!(q.values[3], 22.0 / 63.0);
        assert_eq!(q.values[4], 42.0 / 63.0);
    }

    #[test]
    fn i_frame_mask_is_all_intra() {
        let m = frame(
            FrameType::I,
            vec![
                block(0, 0, 8, 8, BlockType::Intra, 30),
                block(8, 0, 8, 8, BlockType::Intra, 30),
            ],
        );
        let mask = build_block_type_mask(&m, 16, 8).unwrap();
        assert!(mask.iter().all(|&t| t == BlockType::Intra));
    }

    #[test]
    fn skip_block_area_count() {
        let mut blocks = Vec::new();
        for by in 0..2 {
            for bx in 0..2 {
                let t = if (bx, by) == (1, 1) { BlockType::Skip } else { BlockType::Inter };
                blocks.push(block(bx * 8, by * 6, 8, 6, t, 30));
            }
        }
        let m = frame(FrameType::B, blocks);
        let mask = build_block_type_mask(&m, 16, 12).unwrap();
        assert_eq!(mask.iter().filter(|&&t| t == BlockType::Skip).count(), 8 * 6);
        for y in 6..12 {
            for x in 8..16 {
                assert_eq!(mask[y * 16 + x], BlockType::Skip);
            }
        }
    }

    #[test]
    fn overlap_gap_and_outside_rejected() {
        let overlap = frame(
            FrameType::B,
            vec![
                block(0, 0, 8, 8, BlockType::Inter, 30),
                block(6, 0, 8, 8, BlockType::Inter, 30),
            ],
        );
        assert!(matches!(build_block_type_mask(&overlap, 16, 8), Err(Error::Contract(_))));
        let gap = frame(FrameType::B, vec![block(0, 0, 8, 8, BlockType::Inter, 30)]);
        assert!(matches!(build_qp_map(&gap, 16, 8), Err(Error::Contract(_))));
        let outside = frame(FrameType::B, vec![block(0, 0, 18, 8, BlockType::Inter, 30)]);
        assert!(build_qp_map(&outside, 16, 8).is_err());
    }

    #[test]
    fn i_frame_with_inter_block_invalid() {
        let m = frame(FrameType::I, vec![block(0, 0, 8, 8, BlockType::Skip, 30)]);
        assert!(m.validate(8, 8).is_err());
    }

    #[test]
    fn parse_rejects_qp_zero() {
        let line = r#"{"poc":0,"frame_type":"I","temporal_layer":0,"base_qp":32,"ilf_flag":false,"blocks":[{"x":0,"y":0,"w":8,"h":8,"type":"intra","qp":0,"mode":null}]}"#;
        let text = format!("{line}\n");
        match parse_meta(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_unknown_block_type_with_line_number() {
        let good = serialize_meta(&[frame(FrameType::I, vec![block(0, 0, 8, 8, BlockType::Intra, 30)])]);
        let bad = r#"{"poc":1,"frame_type":"B","temporal_layer":1,"base_qp":32,"ilf_flag":false,"blocks":[{"x":0,"y":0,"w":8,"h":8,"type":"merge","qp":30,"mode":null}]}"#;
        let text = format!("{good}{bad}\n");
        match parse_meta(&text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("merge"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn field_names_are_exact() {
        let mut b = block(0, 0, 8, 8, BlockType::Inter, 30);
        b.mode = Some(ModeInfo::Inter { mv: [1, -2], ref_poc: 4 });
        let text = serialize_meta(&[frame(FrameType::B, vec![b])]);
        let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        for key in ["poc", "frame_type", "temporal_layer", "base_qp", "ilf_flag", "blocks"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let blk = &v["blocks"][0];
        for key in ["x", "y", "w", "h", "type", "qp", "mode"] {
            assert!(blk.get(key).is_some(), "{key}");
        }
        assert_eq!(blk["mode"]["ref"], 4);
    }

    fn arb_meta() -> impl Strategy<Value = FrameMeta> {
        (
            0u32..1000,
            any::<bool>(),
            0u32..5,
            1u8..=63,
            any::<bool>(),
            prop::collection::vec((0u8..3, 1u8..=63, 0u8..5, -8i32..8, -8i32..8), 4),
        )
            .prop_map(|(poc, is_i, tid, base_qp, flag, cells)| {
                let blocks = cells
                    .into_iter()
                    .enumerate()
                    .map(|(i, (t, qp, ipm, dx, dy))| {
                        let block_type = if is_i {
                            BlockType::Intra
                        } else {
                            [BlockType::Intra, BlockType::Inter, BlockType::Skip][t as usize]
                        };
                        let mode = match block_type {
                            BlockType::Intra => Some(ModeInfo::Intra { ipm }),
                            _ => Some(ModeInfo::Inter { mv: [dx, dy], ref_poc: poc / 2 }),
                        };
                        BlockRecord {
                            x: (i as u32 % 2) * 8,
                            y: (i as u32 / 2) * 8,
                            w: 8,
                            h: 8,
                            block_type,
                            qp,
                            mode,
                        }
                    })
                    .collect();
                FrameMeta {
                    poc,
                    frame_type: if is_i { FrameType::I } else { FrameType::B },
                    temporal_layer: tid,
                    base_qp,
                    ilf_flag: flag,
                    blocks,
                }
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(stream in prop::collection::vec(arb_meta(), 0..6)) {
            let text = serialize_meta(&stream);
            prop_assert_eq!(parse_meta(&text).unwrap(), stream);
        }

        #[test]
        fn qp_map_values_are_multiples_of_one_63rd(meta in arb_meta()) {
            let q = build_qp_map(&meta, 16, 16).unwrap();
            let mask = build_block_type_mask(&meta, 16, 16).unwrap();
            for b in &meta.blocks {
                let (x, y, w, h) = b.rect_on(PlaneId::Y);
                for row in y..y + h {
                    for col in x..x + w {
                        prop_assert_eq!(q.values[row * 16 + col], b.qp as f64 / 63.0);
                        prop_assert_eq!(mask[row * 16 + col], b.block_type);
                    }
                }
            }
            for v in &q.values {
                let k = (v * 63.0).round();
                prop_assert!((1.0..=63.0).contains(&k));
                prop_assert_eq!(*v, k / 63.0);
            }
        }
    }
}
