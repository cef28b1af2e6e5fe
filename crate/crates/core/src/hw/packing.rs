//! Bit-exact model of low-bit operand packing on a 27×18 multiplier with a
//! 48-bit accumulator.
//!
//! `na` activations are packed into the wide port and `nw` weights into the
//! narrow port, each operand at a stride of `g` bits. One multiply then
//! yields the `na + nw − 1` coefficients of the polynomial product, i.e. a
//! short 1-D convolution: `na·nw` multiplications, of which
//! `na·nw − (na + nw − 1)` are folded in as additions. Coefficients are
//! recovered by shift/mask with two's-complement borrow compensation.

use serde::{Deserialize, Serialize};

use super::HardwareSpec;
use crate::error::{Error, Result};

/// Largest operand count tried per port when searching layouts.
const MAX_OPERANDS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingLayout {
    pub bits: u32,
    /// Operands in the wide port.
    pub activations: usize,
    /// Operands in the narrow port.
    pub weights: usize,
    /// Field stride in bits.
    pub stride: u32,
}

impl PackingLayout {
    pub fn new(bits: u32, activations: usize, weights: usize) -> Self {
        let terms = activations.min(weights);
        PackingLayout {
            bits,
            activations,
            weights,
            stride: guard_stride(bits, terms),
        }
    }

    pub fn mults(&self) -> usize {
        self.activations * self.weights
    }

    pub fn outputs(&self) -> usize {
        self.activations + self.weights - 1
    }

    pub fn adds(&self) -> usize {
        self.mults() - self.outputs()
    }

    /// Products summed into one output field.
    pub fn terms_per_field(&self) -> usize {
        self.activations.min(self.weights)
    }

    /// Whether every operand and coefficient fits its port, field and the
    /// accumulator for all operand values in range.
    pub fn fits(&self, hw: &HardwareSpec) -> bool {
        let b = self.bits;
        let g = self.stride;
        if b == 0 || b > 24 || self.activations == 0 || self.weights == 0 {
            return false;
        }
        if (self.outputs() as u32) * g > 120 {
            return false;
        }
        let port_ok = |count: usize, width: u32| -> bool {
            let span: i128 = (0..count).map(|i| 1i128 << (i as u32 * g)).sum();
            let max_pos = ((1i128 << (b - 1)) - 1) * span;
            let max_neg = (1i128 << (b - 1)) * span;
            max_pos < (1i128 << (width - 1)) && max_neg <= (1i128 << (width - 1))
        };
        if !port_ok(self.activations, hw.dsp_a_width) || !port_ok(self.weights, hw.dsp_b_width) {
            return false;
        }
        // coefficient magnitude must fit a signed field of width g
        let m = self.terms_per_field() as i128;
        let coeff_max = m << (2 * b - 2);
        if coeff_max >= 1i128 << (g - 1) {
            return false;
        }
        let acc_bound: i128 = (0..self.outputs())
            .map(|j| coeff_max << (j as u32 * g))
            .sum();
        acc_bound < 1i128 << (hw.accumulator_width - 1)
    }
}

/// Field stride: 2b product bits, ⌈log₂ m⌉ bits of growth for m summed
/// products, one guard bit.
pub fn guard_stride(bits: u32, terms: usize) -> u32 {
    2 * bits + ceil_log2(terms.max(1)) + 1
}

fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Layout realizing exactly `mults` multiplications and `adds` additions,
/// if one fits the hardware.
pub fn layout_for(
    bits: u32,
    mults: usize,
    adds: usize,
    hw: &HardwareSpec,
) -> Option<PackingLayout> {
    (1..=mults)
        .filter(|na| mults.is_multiple_of(*na))
        .rev()
        .map(|na| PackingLayout::new(bits, na, mults / na))
        .find(|l| l.adds() == adds && l.fits(hw))
}

/// The admitted layout with the most multiplications per DSP.
pub fn max_admitted_layout(bits: u32, hw: &HardwareSpec) -> Option<PackingLayout> {
    let mut best: Option<PackingLayout> = None;
    for na in 1..=MAX_OPERANDS {
        for nw in 1..=na {
            let layout = PackingLayout::new(bits, na, nw);
            if layout.fits(hw) && best.is_none_or(|b| layout.mults() > b.mults()) {
                best = Some(layout);
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CapacityStatus {
    /// A layout with the tabulated operation counts fits and is bit-exact.
    Admitted { layout: PackingLayout },
    /// The table claims more than any admitted layout provides.
    ExceedsCapacity { max_admitted: Option<PackingLayout> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub bits: u32,
    pub mults_per_dsp: u32,
    pub adds_per_dsp: u32,
    #[serde(flatten)]
    pub status: CapacityStatus,
}

impl CapacityRow {
    pub fn is_admitted(&self) -> bool {
        matches!(self.status, CapacityStatus::Admitted { .. })
    }
}

/// Classifies every packing-table row against the layouts the hardware admits.
pub fn capacity_check(hw: &HardwareSpec) -> Vec<CapacityRow> {
    hw.packing_table
        .iter()
        .map(|row| {
            let status = match layout_for(
                row.bits,
                row.mults_per_dsp as usize,
                row.adds_per_dsp as usize,
                hw,
            ) {
                Some(layout) => CapacityStatus::Admitted { layout },
                None => CapacityStatus::ExceedsCapacity {
                    max_admitted: max_admitted_layout(row.bits, hw),
                },
            };
            CapacityRow {
                bits: row.bits,
                mults_per_dsp: row.mults_per_dsp,
                adds_per_dsp: row.adds_per_dsp,
                status,
            }
        })
        .collect()
}

fn check_operands(values: &[i64], bits: u32) -> Result<()> {
    let lo = -(1i64 << (bits - 1));
    let hi = (1i64 << (bits - 1)) - 1;
    match values.iter().find(|v| **v < lo || **v > hi) {
        Some(v) => Err(Error::input(format!(
            "operand {v} outside signed {bits}-bit range [{lo}, {hi}]"
        ))),
        None => Ok(()),
    }
}

fn pack(values: &[i64], stride: u32) -> i64 {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| v << (i as u32 * stride))
        .sum()
}

fn fits_signed(value: i64, width: u32) -> bool {
    let half = 1i64 << (width - 1);
    (-half..half).contains(&value)
}

fn wrap(value: i64, width: u32) -> i64 {
    let shift = 64 - width;
    (value << shift) >> shift
}

/// Splits `acc` into `count` signed fields of `stride` bits, lowest first.
fn extract(mut acc: i64, count: usize, stride: u32) -> Vec<i64> {
    let mask = (1i64 << stride) - 1;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let field = wrap(acc & mask, stride);
        out.push(field);
        // borrow compensation: remove the field before shifting
        acc = (acc - field) >> stride;
    }
    out
}

/// One wide multiply-accumulate over a packed layout; returns the
/// `na + nw − 1` convolution coefficients Σ_{i+j=k} a_i·w_j.
pub fn packed_conv_simulate(
    activations: &[i64],
    weights: &[i64],
    bits: u32,
    hw: &HardwareSpec,
) -> Result<Vec<i64>> {
    if activations.is_empty() || weights.is_empty() {
        return Err(Error::input("packing needs at least one operand per port"));
    }
    if !(1..=24).contains(&bits) {
        return Err(Error::input(format!("unsupported operand width {bits}")));
    }
    check_operands(activations, bits)?;
    check_operands(weights, bits)?;
    let layout = PackingLayout::new(bits, activations.len(), weights.len());
    if !layout.fits(hw) {
        return Err(Error::Capacity(format!(
            "{}x{} operands of {bits} bits do not fit a {}x{} multiplier at stride {}",
            activations.len(),
            weights.len(),
            hw.dsp_a_width,
            hw.dsp_b_width,
            layout.stride
        )));
    }
    let a_port = pack(activations, layout.stride);
    let b_port = pack(weights, layout.stride);
    debug_assert!(fits_signed(a_port, hw.dsp_a_width) && fits_signed(b_port, hw.dsp_b_width));
    let acc = wrap(a_port * b_port, hw.accumulator_width);
    Ok(extract(acc, layout.outputs(), layout.stride))
}

/// Packs `n` activations against one shared weight and returns the `n`
/// products a_i·w from a single multiply.
pub fn packed_mac_simulate(
    activations: &[i64],
    weight: i64,
    bits: u32,
    hw: &HardwareSpec,
) -> Result<Vec<i64>> {
    let capacity = hw.mults_per_dsp(bits)? as usize;
    if activations.len() > capacity {
        return Err(Error::Capacity(format!(
            "{} operands exceed the {capacity} multiplications per DSP at {bits} bits",
            activations.len()
        )));
    }
    packed_conv_simulate(activations, &[weight], bits, hw)
}

/// Reference convolution used to check packed results.
pub fn direct_conv(activations: &[i64], weights: &[i64]) -> Vec<i64> {
    let mut out = vec![0; activations.len() + weights.len() - 1];
    for (i, a) in activations.iter().enumerate() {
        for (j, w) in weights.iter().enumerate() {
            out[i + j] += a * w;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_bit_pair() {
        let hw = HardwareSpec::default();
        assert_eq!(
            packed_mac_simulate(&[3, -2], 5, 4, &hw).unwrap(),
            vec![15, -10]
        );
    }

    #[test]
    fn eight_bit_extreme() {
        let hw = HardwareSpec::default();
        assert_eq!(
            packed_mac_simulate(&[127], -128, 8, &hw).unwrap(),
            vec![-16256]
        );
        assert_eq!(
            packed_mac_simulate(&[-128, -128], -128, 8, &hw).unwrap(),
            vec![16384, 16384]
        );
    }

    #[test]
    fn zero_weight_annihilates() {
        let hw = HardwareSpec::default();
        let out = packed_mac_simulate(&[1, -2, 1, 0, -1], 0, 2, &hw).unwrap();
        assert!(out.iter().all(|&p| p == 0));
    }

    #[test]
    fn errors() {
        let hw = HardwareSpec::default();
        assert!(matches!(
            packed_mac_simulate(&[8], 1, 4, &hw),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            packed_mac_simulate(&[1, 1, 1], 1, 8, &hw),
            Err(Error::Capacity(_))
        ));
        // 4 bits: table allows 6, but a single shared weight only admits 3
        assert!(matches!(
            packed_mac_simulate(&[1; 4], 1, 4, &hw),
            Err(Error::Capacity(_))
        ));
        assert!(matches!(
            packed_mac_simulate(&[1], 1, 5, &hw),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn table_classification() {
        let hw = HardwareSpec::default();
        let rows = capacity_check(&hw);
        assert_eq!(rows.len(), 5);
        for row in &rows {
            match row.bits {
                8 | 6 => {
                    let CapacityStatus::Admitted { layout } = &row.status else {
                        panic!("{} bits should be admitted", row.bits)
                    };
                    assert_eq!((layout.activations, layout.weights), (2, 1));
                }
                4 | 3 => {
                    let CapacityStatus::Admitted { layout } = &row.status else {
                        panic!("{} bits should be admitted", row.bits)
                    };
                    assert_eq!((layout.activations, layout.weights), (3, 2));
                    assert_eq!(layout.adds(), 2);
                }
                2 => {
                    let CapacityStatus::ExceedsCapacity { max_admitted } = &row.status else {
                        panic!("15 two-bit products should exceed one-guard-bit capacity")
                    };
                    assert_eq!(max_admitted.unwrap().mults(), 12);
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn stride() {
        assert_eq!(guard_stride(4, 1), 9);
        assert_eq!(guard_stride(4, 2), 10);
        assert_eq!(guard_stride(2, 3), 7);
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(5), 3);
    }
}
