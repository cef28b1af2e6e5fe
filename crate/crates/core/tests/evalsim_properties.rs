//! Fake quantization, per-configuration evaluation and benchmark landscapes.

use kmtpe_core::evalsim::bench::DECEPTIVE_MARGIN;
use kmtpe_core::evalsim::{
    evaluate, pretrain, quantize_tensor, scaled_net, BenchKind, BenchObjective, EvalOptions,
    SyntheticTask, TrainOptions,
};
use kmtpe_core::hw::{ConstraintSet, HardwareSpec};
use kmtpe_core::net::Targets;
use kmtpe_core::rng::seeded;
use kmtpe_core::space::Configuration;
use proptest::prelude::*;

fn grid_points(dims: usize, levels: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..dims {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..levels).map(move |l| {
                    let mut q = p.clone();
                    q.push(l);
                    q
                })
            })
            .collect();
    }
    out
}

fn small_task(seed: u64) -> SyntheticTask {
    SyntheticTask {
        train_count: 160,
        test_count: 200,
        seed,
        ..SyntheticTask::default()
    }
}

#[test]
fn quantizer_examples() {
    assert_eq!(quantize_tensor(&[-1.0, 0.0, 1.0], 2), vec![-1.0, 0.0, 1.0]);
    assert_eq!(quantize_tensor(&[0.0; 4], 3), vec![0.0; 4]);
    let w = [0.123456789, -3.3, 2.0e-7];
    assert_eq!(quantize_tensor(&w, 16), w.to_vec());
}

proptest! {
    #[test]
    fn quantizer_is_idempotent_and_bounded(
        w in prop::collection::vec(-10.0f64..10.0, 1..64),
        bits in prop::sample::select(vec![2u32, 3, 4, 6, 8]),
    ) {
        let q = quantize_tensor(&w, bits);
        prop_assert_eq!(quantize_tensor(&q, bits), q.clone());
        let peak = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let s = peak / ((1u64 << (bits - 1)) - 1) as f64;
        for (a, b) in w.iter().zip(&q) {
            prop_assert!((a - b).abs() <= s / 2.0 + 1e-12);
            let level = b / s;
            prop_assert!((level - level.round()).abs() < 1e-9);
        }
    }
}

#[test]
fn tasks_are_balanced_and_reproducible() {
    let task = small_task(4);
    let (a, _) = task.generate().unwrap();
    let (b, _) = task.generate().unwrap();
    assert_eq!(a, b);
    let Targets::Classes(classes) = &a.targets else {
        panic!("classification task")
    };
    for c in 0..task.class_count() {
        assert_eq!(
            classes.iter().filter(|&&k| k == c).count(),
            a.len() / task.class_count()
        );
    }
}

#[test]
fn evaluation_contract() {
    let (net, train, test) =
        pretrain(&small_task(1), &[8, 8], &TrainOptions::default(), 1).unwrap();
    let hw = HardwareSpec::default();
    let opts = EvalOptions::default();
    let plain = Configuration::uniform(3, 16, 1.0);
    let e = evaluate(
        &plain,
        &net,
        &train,
        &test,
        &ConstraintSet::default(),
        &hw,
        &opts,
        9,
    )
    .unwrap();
    assert_eq!(e.objective, e.accuracy);
    assert_eq!(e.penalty, 0.0);
    let again = evaluate(
        &plain,
        &net,
        &train,
        &test,
        &ConstraintSet::default(),
        &hw,
        &opts,
        9,
    )
    .unwrap();
    assert_eq!(e, again);

    let tight = ConstraintSet {
        model_size_bytes: Some(1.0),
        ..ConstraintSet::default()
    };
    let mixed = Configuration {
        bits: vec![4, 3, 8],
        widths: vec![0.75, 1.25, 1.0],
    };
    let p = evaluate(&mixed, &net, &train, &test, &tight, &hw, &opts, 9).unwrap();
    assert!(p.penalty > 0.0);
    assert!(p.objective < p.accuracy);
    let expected = opts.penalty * (p.model_size_bytes as f64 - 1.0) / 1.0;
    assert!((p.penalty - expected).abs() <= 1e-9 * expected);
    assert!(evaluate(
        &Configuration::uniform(3, 1, 1.0),
        &net,
        &train,
        &test,
        &tight,
        &hw,
        &opts,
        9
    )
    .is_err());
}

#[test]
fn unit_widths_keep_the_architecture() {
    let (net, _, _) = pretrain(&small_task(2), &[8, 16], &TrainOptions::default(), 2).unwrap();
    let copy = scaled_net(&net, &[1.0; 3], &mut seeded(0, 0)).unwrap();
    for (a, b) in copy.layers.iter().zip(&net.layers) {
        assert_eq!(a.weight_count(), b.weight_count());
    }
    assert_eq!(copy.parameter_count(), net.parameter_count());
}

#[test]
fn more_bits_do_not_hurt_in_the_majority_of_seeds() {
    let opts = EvalOptions::default();
    let hw = HardwareSpec::default();
    let none = ConstraintSet::default();
    let mut wins = 0;
    for seed in 0..10 {
        let task = SyntheticTask {
            noise: 0.6,
            ..small_task(seed)
        };
        let (net, train, test) = pretrain(&task, &[8, 8], &TrainOptions::default(), seed).unwrap();
        let high = evaluate(
            &Configuration::uniform(3, 16, 1.0),
            &net,
            &train,
            &test,
            &none,
            &hw,
            &opts,
            seed,
        )
        .unwrap();
        let low = evaluate(
            &Configuration::uniform(3, 2, 1.0),
            &net,
            &train,
            &test,
            &none,
            &hw,
            &opts,
            seed,
        )
        .unwrap();
        if high.accuracy >= low.accuracy {
            wins += 1;
        }
    }
    assert!(wins > 5, "16-bit won only {wins}/10");
}

#[test]
fn plateau_cells_share_one_value() {
    let spec = BenchObjective::default();
    let bench = spec.instantiate().unwrap();
    let points = grid_points(spec.dims, spec.levels);
    let steps = spec.steps as f64;
    let mut floor = 0;
    for x in &points {
        let s = bench.smooth(x);
        let cell = (s.max(bench.plateau_cut) * steps + 1e-9).floor();
        assert_eq!(bench.value(x), cell / steps);
        if s <= bench.plateau_cut {
            floor += 1;
        }
    }
    // about flat_fraction of the grid sits on the lowest plateau
    let fraction = floor as f64 / points.len() as f64;
    assert!(fraction >= spec.flat_fraction - 0.01, "{fraction}");
    assert_eq!(bench.value(&bench.optimum), bench.optimum_value());
    assert!(points
        .iter()
        .all(|x| bench.value(x) <= bench.optimum_value()));
}

#[test]
fn deceptive_margin_by_exhaustive_evaluation() {
    for seed in 0..5 {
        let spec = BenchObjective {
            kind: BenchKind::DeceptiveFlat,
            seed,
            ..BenchObjective::default()
        };
        let bench = spec.instantiate().unwrap();
        let mut best_other = f64::NEG_INFINITY;
        for x in grid_points(spec.dims, spec.levels) {
            if x != bench.optimum {
                best_other = best_other.max(bench.value(&x));
            }
        }
        assert_eq!(bench.value(&bench.optimum), 1.0);
        assert!(
            1.0 - best_other >= DECEPTIVE_MARGIN - 1e-12,
            "seed {seed}: {best_other}"
        );
        assert!((bench.value(&bench.decoy) - (1.0 - DECEPTIVE_MARGIN)).abs() < 1e-12);
    }
}

#[test]
fn quadratic_optimum_is_the_grid_maximum() {
    let spec = BenchObjective {
        kind: BenchKind::QuadraticMixed,
        seed: 3,
        ..BenchObjective::default()
    };
    let bench = spec.instantiate().unwrap();
    let best = grid_points(spec.dims, spec.levels)
        .iter()
        .map(|x| bench.value(x))
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best, 1.0);
    assert_eq!(bench.value(&bench.optimum), 1.0);
}
