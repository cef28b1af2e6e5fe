//! Packed multiplies against schoolbook products, over every operand
//! combination for narrow widths and random draws for wide ones.

use kmtpe_core::error::Error;
use kmtpe_core::hw::packing::{
    capacity_check, max_admitted_layout, packed_conv_simulate, packed_mac_simulate, CapacityStatus,
    PackingLayout,
};
use kmtpe_core::hw::HardwareSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn schoolbook(a: &[i64], w: &[i64]) -> Vec<i64> {
    (0..a.len() + w.len() - 1)
        .map(|k| {
            (0..a.len())
                .filter(|&i| k >= i && k - i < w.len())
                .map(|i| a[i] * w[k - i])
                .sum()
        })
        .collect()
}

fn range(bits: u32) -> (i64, i64) {
    (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1)
}

/// Checks every assignment of signed `bits`-bit values to the operands.
fn sweep(layout: &PackingLayout, hw: &HardwareSpec) -> u64 {
    let (lo, hi) = range(layout.bits);
    let levels = (hi - lo + 1) as u64;
    let slots = layout.activations + layout.weights;
    let total = levels.pow(slots as u32);
    let mut operands = vec![0i64; slots];
    for code in 0..total {
        let mut c = code;
        for slot in operands.iter_mut() {
            *slot = lo + (c % levels) as i64;
            c /= levels;
        }
        let (a, w) = operands.split_at(layout.activations);
        let packed = packed_conv_simulate(a, w, layout.bits, hw).unwrap();
        assert_eq!(packed, schoolbook(a, w), "{layout:?}: a = {a:?}, w = {w:?}");
    }
    total
}

fn admitted_layouts(bits: u32, hw: &HardwareSpec) -> Vec<PackingLayout> {
    let mut out = Vec::new();
    for na in 1..=32 {
        for nw in 1..=32 {
            let layout = PackingLayout::new(bits, na, nw);
            if layout.fits(hw) {
                out.push(layout);
            }
        }
    }
    out
}

fn random_cases(layout: &PackingLayout, hw: &HardwareSpec, cases: usize, rng: &mut ChaCha8Rng) {
    let (lo, hi) = range(layout.bits);
    for _ in 0..cases {
        let a: Vec<i64> = (0..layout.activations)
            .map(|_| rng.random_range(lo..=hi))
            .collect();
        let w: Vec<i64> = (0..layout.weights)
            .map(|_| rng.random_range(lo..=hi))
            .collect();
        assert_eq!(
            packed_conv_simulate(&a, &w, layout.bits, hw).unwrap(),
            schoolbook(&a, &w)
        );
    }
}

#[test]
fn exhaustive_sweeps_at_narrow_widths() {
    let hw = HardwareSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for bits in [2, 3, 4] {
        let layouts = admitted_layouts(bits, &hw);
        assert!(!layouts.is_empty());
        let mut swept = 0;
        for layout in &layouts {
            let slots = (layout.activations + layout.weights) as u32;
            if bits * slots <= 20 {
                swept += sweep(layout, &hw);
            } else {
                random_cases(layout, &hw, 20_000, &mut rng);
            }
        }
        // the tabulated layouts are always among the exhaustively swept ones
        for row in capacity_check(&hw).iter().filter(|r| r.bits == bits) {
            let layout = match &row.status {
                CapacityStatus::Admitted { layout } => *layout,
                CapacityStatus::ExceedsCapacity { max_admitted } => max_admitted.unwrap(),
            };
            assert!(bits * (layout.activations + layout.weights) as u32 <= 20);
        }
        assert!(swept > 0);
    }
}

#[test]
fn random_cases_at_wide_widths() {
    let hw = HardwareSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for bits in [6, 8] {
        let layouts = admitted_layouts(bits, &hw);
        assert!(layouts.iter().any(|l| l.mults() >= 2));
        let per_layout = 1_000_000 / layouts.len() + 1;
        for layout in &layouts {
            random_cases(layout, &hw, per_layout, &mut rng);
        }
        // extremes, where borrows and overflow would show first
        let (lo, hi) = range(bits);
        for layout in &layouts {
            for a_val in [lo, hi] {
                for w_val in [lo, hi] {
                    let a = vec![a_val; layout.activations];
                    let w = vec![w_val; layout.weights];
                    assert_eq!(
                        packed_conv_simulate(&a, &w, bits, &hw).unwrap(),
                        schoolbook(&a, &w)
                    );
                }
            }
        }
    }
}

#[test]
fn capacity_check_classifies_every_row() {
    let hw = HardwareSpec::default();
    let rows = capacity_check(&hw);
    assert_eq!(rows.len(), hw.packing_table.len());
    let summary: Vec<(u32, bool)> = rows.iter().map(|r| (r.bits, r.is_admitted())).collect();
    assert_eq!(
        summary,
        vec![(8, true), (6, true), (4, true), (3, true), (2, false)]
    );
    for row in &rows {
        if let CapacityStatus::Admitted { layout } = &row.status {
            assert_eq!(layout.mults() as u32, row.mults_per_dsp);
            assert_eq!(layout.adds() as u32, row.adds_per_dsp);
        }
    }
    let two = rows.iter().find(|r| r.bits == 2).unwrap();
    match &two.status {
        CapacityStatus::ExceedsCapacity {
            max_admitted: Some(best),
        } => {
            assert!(best.mults() < 15);
            assert_eq!(best.mults(), max_admitted_layout(2, &hw).unwrap().mults());
        }
        other => panic!("unexpected status {other:?}"),
    }
}

#[test]
fn oversized_layouts_are_refused() {
    let hw = HardwareSpec::default();
    let a = vec![1; 5];
    let w = vec![1; 3];
    assert!(matches!(
        packed_conv_simulate(&a, &w, 2, &hw),
        Err(Error::Capacity(_))
    ));
    assert!(matches!(
        packed_conv_simulate(&[8], &[1], 4, &hw),
        Err(Error::Input(_))
    ));
    assert!(matches!(
        packed_mac_simulate(&[1, 1, 1], 1, 8, &hw),
        Err(Error::Capacity(_))
    ));
    assert_eq!(
        packed_mac_simulate(&[-128, 127], -128, 8, &hw).unwrap(),
        vec![16384, -16256]
    );
}

#[test]
fn narrower_stride_breaks_worst_case() {
    // the admitted stride keeps one spare guard bit; dropping two leaves a
    // field too narrow for the largest coefficient 2·(−8)·(−8) = 128
    let bits = 4;
    let layout = PackingLayout::new(bits, 3, 2);
    let g = layout.stride - 2;
    let (lo, _) = range(bits);
    let a = [lo; 3];
    let w = [lo; 2];
    let packed_a: i128 = a
        .iter()
        .enumerate()
        .map(|(i, v)| (*v as i128) << (i as u32 * g))
        .sum();
    let packed_w: i128 = w
        .iter()
        .enumerate()
        .map(|(i, v)| (*v as i128) << (i as u32 * g))
        .sum();
    let mut acc = packed_a * packed_w;
    let mut fields = Vec::new();
    for _ in 0..layout.outputs() {
        let raw = acc & ((1 << g) - 1);
        let field = if raw >= 1 << (g - 1) {
            raw - (1 << g)
        } else {
            raw
        };
        fields.push(field as i64);
        acc = (acc - field) >> g;
    }
    assert_ne!(fields, schoolbook(&a, &w));
}
