//! Reduced intra prediction: DC, planar, horizontal, vertical and the
//! down-right diagonal, with R-D mode selection.

use crate::frame_io::Plane;

use super::quant::{dequantize, quantize_residual, residual_bits};

/// Mid-range default when no neighbour is available.
pub const DEFAULT_SAMPLE: u16 = 512;

/// Bits charged for signalling an intra mode.
pub const INTRA_MODE_BITS: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum IntraMode {
    Dc = 0,
    Planar = 1,
    Hor = 2,
    Ver = 3,
    Diag = 4,
}

impl IntraMode {
    pub const ALL: [IntraMode; 5] = [
        IntraMode::Dc,
        IntraMode::Planar,
        IntraMode::Hor,
        IntraMode::Ver,
        IntraMode::Diag,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }
}

/// Reconstructed border samples around a block.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Neighbors {
    /// Row directly above the block, `w` samples.
    pub top: Option<Vec<u16>>,
    /// Column directly left of the block, `h` samples.
    pub left: Option<Vec<u16>>,
    pub top_left: Option<u16>,
}

impl Neighbors {
    /// Gathers the causal border of the `w`×`h` block at (`x`, `y`).
    pub fn gather(plane: &Plane, x: usize, y: usize, w: usize, h: usize) -> Self {
        let top = (y > 0).then(|| (x..x + w).map(|c| plane.get(c, y - 1)).collect());
        let left = (x > 0).then(|| (y..y + h).map(|r| plane.get(x - 1, r)).collect());
        let top_left = (x > 0 && y > 0).then(|| plane.get(x - 1, y - 1));
        Neighbors {
            top,
            left,
            top_left,
        }
    }

    /// Full reference arrays with missing sides substituted from the
    /// available ones: (corner, top, left).
    fn substituted(&self, w: usize, h: usize) -> (i32, Vec<i32>, Vec<i32>) {
        let top: Option<Vec<i32>> = self.top.as_ref().map(|t| t.iter().map(|&s| s as i32).collect());
        let left: Option<Vec<i32>> = self.left.as_ref().map(|l| l.iter().map(|&s| s as i32).collect());
        match (top, left) {
            (Some(t), Some(l)) => {
                let corner = self.top_left.map(|c| c as i32).unwrap_or((t[0] + l[0] + 1) >> 1);
                (corner, t, l)
            }
            (Some(t), None) => (t[0], t.clone(), vec![t[0]; h]),
            (None, Some(l)) => (l[0], vec![l[0]; w], l),
            (None, None) => {
                let d = DEFAULT_SAMPLE as i32;
                (d, vec![d; w], vec![d; h])
            }
        }
    }
}

/// Predicts a `w`×`h` block (row-major) from its neighbours.
pub fn intra_predict_block(neighbors: &Neighbors, mode: IntraMode, w: usize, h: usize) -> Vec<u16> {
    let (corner, top, left) = neighbors.substituted(w, h);
    let mut out = vec![0u16; w * h];
    match mode {
        IntraMode::Dc => {
            let mut sum = 0i64;
            let mut n = 0i64;
            if let Some(t) = &neighbors.top {
                sum += t.iter().map(|&s| s as i64).sum::<i64>();
                n += t.len() as i64;
            }
            if let Some(l) = &neighbors.left {
                sum += l.iter().map(|&s| s as i64).sum::<i64>();
                n += l.len() as i64;
            }
            let dc = if n == 0 {
                DEFAULT_SAMPLE
            } else {
                ((sum + n / 2) / n) as u16
            };
            out.fill(dc);
        }
        IntraMode::Hor => {
            for (r, row) in out.chunks_exact_mut(w).enumerate() {
                row.fill(left[r] as u16);
            }
        }
        IntraMode::Ver => {
            for row in out.chunks_exact_mut(w) {
                for (c, s) in row.iter_mut().enumerate() {
                    *s = top[c] as u16;
                }
            }
        }
        IntraMode::Diag => {
            for r in 0..h {
                for c in 0..w {
                    let v = match c.cmp(&r) {
                        std::cmp::Ordering::Greater => top[c - r - 1],
                        std::cmp::Ordering::Less => left[r - c - 1],
                        std::cmp::Ordering::Equal => corner,
                    };
                    out[r * w + c] = v as u16;
                }
            }
        }
        IntraMode::Planar => {
            let (wi, hi) = (w as i64, h as i64);
            let top_right = top[w - 1] as i64;
            let bottom_left = left[h - 1] as i64;
            for r in 0..h {
                for c in 0..w {
                    let (ri, ci) = (r as i64, c as i64);
                    let horiz = (wi - 1 - ci) * left[r] as i64 + (ci + 1) * top_right;
                    let vert = (hi - 1 - ri) * top[c] as i64 + (ri + 1) * bottom_left;
                    let v = (horiz * hi + vert * wi + wi * hi) / (2 * wi * hi);
                    out[r * w + c] = v as u16;
                }
            }
        }
    }
    out
}

/// Outcome of one R-D competition: `cost = distortion + λ · rate`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdDecision<M> {
    pub mode: M,
    /// Sum of squared errors after reconstruction.
    pub distortion: u64,
    /// Bit estimate.
    pub rate: u32,
    pub cost: f64,
}

impl<M> RdDecision<M> {
    pub fn new(mode: M, distortion: u64, rate: u32, lambda: f64) -> Self {
        RdDecision {
            mode,
            distortion,
            rate,
            cost: rd_cost(distortion, rate, lambda),
        }
    }
}

pub fn rd_cost(distortion: u64, rate: u32, lambda: f64) -> f64 {
    distortion as f64 + lambda * rate as f64
}

/// Prediction, quantized residual and reconstruction of one coded block.
#[derive(Clone, Debug, PartialEq)]
pub struct CodedBlock {
    pub pred: Vec<u16>,
    pub levels: Vec<i16>,
    pub recon: Vec<u16>,
}

/// Codes `orig` against `pred` at `qp`; returns the block and its SSE.
pub fn code_residual(orig: &[u16], pred: Vec<u16>, qp: u8) -> (CodedBlock, u64) {
    let residual: Vec<i32> = orig.iter().zip(&pred).map(|(&o, &p)| o as i32 - p as i32).collect();
    let levels = quantize_residual(&residual, qp);
    let recon = reconstruct(&pred, &levels, qp);
    let sse = sse(orig, &recon);
    (CodedBlock { pred, levels, recon }, sse)
}

/// `clamp(pred + dequant(levels))`.
pub fn reconstruct(pred: &[u16], levels: &[i16], qp: u8) -> Vec<u16> {
    pred.iter()
        .zip(dequantize(levels, qp))
        .map(|(&p, r)| (p as i32 + r).clamp(0, crate::frame_io::MAX_SAMPLE as i32) as u16)
        .collect()
}

pub fn sse(a: &[u16], b: &[u16]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum()
}

/// Tries every mode and keeps the lowest J; ties go to the lowest mode index.
pub fn rd_select_intra_mode(
    orig: &[u16],
    neighbors: &Neighbors,
    w: usize,
    h: usize,
    qp: u8,
    lambda: f64,
) -> (RdDecision<IntraMode>, CodedBlock) {
    let mut best: Option<(RdDecision<IntraMode>, CodedBlock)> = None;
    for mode in IntraMode::ALL {
        let pred = intra_predict_block(neighbors, mode, w, h);
        let (block, d) = code_residual(orig, pred, qp);
        let rate = INTRA_MODE_BITS + residual_bits(&block.levels);
        let decision = RdDecision::new(mode, d, rate, lambda);
        if best.as_ref().map_or(true, |(b, _)| decision.cost < b.cost) {
            best = Some((decision, block));
        }
    }
    best.expect("mode set is not empty")
}
