use serde::{Deserialize, Serialize};

use crate::coding_meta::{QP_MAX, QP_MIN};
use crate::error::{Error, Result};

/// Multiplier that puts λ(40) at 301.
pub const DEFAULT_LAMBDA_SCALE: f64 = 0.466_609_098_283_621;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Nominal block edge in luma pixels; edge blocks may be smaller.
    pub block_size: usize,
    /// Frames per hierarchical GOP, a power of two.
    pub gop_size: usize,
    /// Distance between I-frames in POC; 0 means only the first frame.
    pub intra_period: usize,
    pub base_qp: u8,
    /// QP offset per temporal layer, indexed by Tid.
    pub layer_qp_offsets: Vec<i32>,
    /// Full-search radius in integer pixels.
    pub search_range: i32,
    pub lambda_scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            block_size: 16,
            gop_size: 16,
            intra_period: 32,
            base_qp: 32,
            layer_qp_offsets: vec![-4, -2, 0, 1, 2],
            search_range: 8,
            lambda_scale: DEFAULT_LAMBDA_SCALE,
        }
    }
}

impl EncoderConfig {
    pub fn with_qp(mut self, base_qp: u8) -> Self {
        self.base_qp = base_qp;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_size < 2 || self.block_size % 2 != 0 {
            return Err(Error::Config(format!(
                "block_size must be even and at least 2, got {}",
                self.block_size
            )));
        }
        if self.gop_size < 2 || !self.gop_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "gop_size must be a power of two >= 2, got {}",
                self.gop_size
            )));
        }
        if self.intra_period != 0 && self.intra_period != 1 && self.intra_period % self.gop_size != 0 {
            return Err(Error::Config(format!(
                "intra_period {} must be 0, 1, or a multiple of gop_size {}",
                self.intra_period, self.gop_size
            )));
        }
        if !(QP_MIN..=QP_MAX).contains(&self.base_qp) {
            return Err(Error::Config(format!("base_qp {} outside [1, 63]", self.base_qp)));
        }
        if self.search_range < 0 {
            return Err(Error::Config("search_range must be non-negative".into()));
        }
        if !(self.lambda_scale.is_finite() && self.lambda_scale > 0.0) {
            return Err(Error::Config("lambda_scale must be positive".into()));
        }
        Ok(())
    }

    /// QP of a frame in temporal layer `tid`, clamped to the codec range.
    /// Layers beyond the offset table reuse its last entry.
    pub fn frame_qp(&self, tid: u32) -> u8 {
        let offset = self
            .layer_qp_offsets
            .get(tid as usize)
            .or(self.layer_qp_offsets.last())
            .copied()
            .unwrap_or(0);
        (self.base_qp as i32 + offset).clamp(QP_MIN as i32, QP_MAX as i32) as u8
    }

    pub fn lambda(&self, qp: u8) -> Result<f64> {
        lambda_of_qp(qp, self.lambda_scale)
    }
}

/// Lagrangian multiplier: `scale · 2^((qp − 12) / 3)`.
pub fn lambda_of_qp(qp: u8, scale: f64) -> Result<f64> {
    if !(QP_MIN..=QP_MAX).contains(&qp) {
        return Err(Error::Contract(format!("qp {qp} outside [1, 63]")));
    }
    Ok(scale * 2f64.powf((qp as f64 - 12.0) / 3.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_anchor_points() {
        assert_eq!(lambda_of_qp(12, 1.0).unwrap(), 1.0);
        assert!((lambda_of_qp(15, 1.0).unwrap() - 2.0).abs() < 1e-12);
        let l40 = lambda_of_qp(40, DEFAULT_LAMBDA_SCALE).unwrap();
        assert!((l40 - 301.0).abs() < 1e-6, "{l40}");
    }

    #[test]
    fn lambda_monotone_and_range_checked() {
        let mut prev = 0.0;
        for qp in 1..=63 {
            let l = lambda_of_qp(qp, 1.0).unwrap();
            assert!(l > prev);
            prev = l;
        }
        assert!(lambda_of_qp(0, 1.0).is_err());
        assert!(lambda_of_qp(64, 1.0).is_err());
    }

    #[test]
    fn default_cascade_qps() {
        let cfg = EncoderConfig::default().with_qp(37);
        let qps: Vec<u8> = (0..5).map(|t| cfg.frame_qp(t)).collect();
        assert_eq!(qps, vec![33, 35, 37, 38, 39]);
        assert_eq!(EncoderConfig::default().with_qp(1).frame_qp(0), 1);
    }

    #[test]
    fn validation() {
        assert!(EncoderConfig::default().validate().is_ok());
        let bad = EncoderConfig {
            gop_size: 12,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EncoderConfig {
            block_size: 7,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EncoderConfig {
            intra_period: 24,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
