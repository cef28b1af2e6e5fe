//! Symmetric uniform per-tensor fake quantization.

/// Bit-width treated as full precision.
pub const FULL_PRECISION_BITS: u32 = 16;

/// Largest positive level for `bits`: 2^(bits−1) − 1.
pub fn max_level(bits: u32) -> f64 {
    ((1u64 << (bits - 1)) - 1) as f64
}

/// Quantization step for a tensor: max|w| / (2^(bits−1) − 1).
pub fn scale(values: &[f64], bits: u32) -> f64 {
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    peak / max_level(bits)
}

/// Rounds every value onto the symmetric grid {−L..L}·s. 16 bits (and
/// above) pass through unchanged; an all-zero tensor stays zero.
pub fn quantize_tensor(values: &[f64], bits: u32) -> Vec<f64> {
    let mut out = values.to_vec();
    quantize_in_place(&mut out, bits);
    out
}

pub fn quantize_in_place(values: &mut [f64], bits: u32) {
    if bits >= FULL_PRECISION_BITS {
        return;
    }
    assert!(bits >= 2, "fake quantization needs at least 2 bits");
    let s = scale(values, bits);
    if s == 0.0 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let level = max_level(bits);
    for v in values.iter_mut() {
        *v = (*v / s).round().clamp(-level, level) * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_values_survive() {
        assert_eq!(quantize_tensor(&[-1.0, 0.0, 1.0], 2), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn sixteen_bits_is_identity() {
        let w = [0.123456789, -3.5, 1e-9];
        assert_eq!(quantize_tensor(&w, 16), w.to_vec());
    }

    #[test]
    fn zero_tensor() {
        assert_eq!(quantize_tensor(&[0.0, 0.0], 4), vec![0.0, 0.0]);
    }

    #[test]
    fn three_bit_levels() {
        // s = 3/3 = 1
        assert_eq!(
            quantize_tensor(&[3.0, 1.4, -0.6, -2.5], 3),
            vec![3.0, 1.0, -1.0, -3.0]
        );
    }
}
