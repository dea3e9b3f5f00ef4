//! Uniform spatial-domain quantization of prediction residuals.

/// Step size `2^((qp − 4) / 6)`.
pub fn quant_step(qp: u8) -> f64 {
    2f64.powf((qp as f64 - 4.0) / 6.0)
}

/// `level = round(residual / step)`, halves rounded away from zero.
pub fn quantize_residual(residual: &[i32], qp: u8) -> Vec<i16> {
    let step = quant_step(qp);
    residual
        .iter()
        .map(|&r| (r as f64 / step).round() as i16)
        .collect()
}

/// Reconstructed residual `round(level · step)`.
pub fn dequantize(levels: &[i16], qp: u8) -> Vec<i32> {
    let step = quant_step(qp);
    levels
        .iter()
        .map(|&l| (l as f64 * step).round() as i32)
        .collect()
}

/// Bits charged for a quantized residual: 6 per nonzero level plus one.
pub fn residual_bits(levels: &[i16]) -> u32 {
    levels.iter().filter(|&&l| l != 0).count() as u32 * 6 + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_residual_is_exact() {
        let levels = quantize_residual(&[0; 16], 37);
        assert!(levels.iter().all(|&l| l == 0));
        assert!(dequantize(&levels, 37).iter().all(|&r| r == 0));
    }

    #[test]
    fn qp4_is_lossless() {
        assert_eq!(quant_step(4), 1.0);
        let r: Vec<i32> = (-600..600).collect();
        assert_eq!(dequantize(&quantize_residual(&r, 4), 4), r);
    }

    #[test]
    fn below_unit_step_is_lossless() {
        let r: Vec<i32> = (-1023..=1023).collect();
        for qp in 1..=4 {
            assert_eq!(dequantize(&quantize_residual(&r, qp), qp), r);
        }
    }

    #[test]
    fn qp22_hand_evaluation() {
        assert_eq!(quant_step(22), 8.0);
        let l = quantize_residual(&[20, -20, 3, -4], 22);
        assert_eq!(l, vec![3, -3, 0, -1]);
        assert_eq!(dequantize(&l, 22), vec![24, -24, 0, -8]);
    }

    #[test]
    fn bit_proxy() {
        assert_eq!(residual_bits(&[0, 0, 0]), 1);
        assert_eq!(residual_bits(&[1, 0, -2]), 13);
    }
}
