//! Surrogate fitting, proposal and threshold rules.

use kmtpe_core::tpe::{
    classic_threshold, cluster_count, fit_surrogate, kmeans_split, propose, propose_new, quantile,
    Domain, FitMode, TpeParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn laplace_smoothed_frequencies() {
    // bits {8, 4}: two of three good trials chose 8 → (2 + 1) / (3 + 2) = 0.6;
    // with one trial out of one, (1 + 1) / (1 + 2) = 2/3
    let domain = Domain::grid(1, 2);
    let good: Vec<&[usize]> = vec![&[0], &[0], &[1]];
    let s = fit_surrogate(&good, &domain, FitMode::Categorical).unwrap();
    assert!((s.probs[0][0] - 0.6).abs() < 1e-15);
    let single: Vec<&[usize]> = vec![&[0]];
    let s = fit_surrogate(&single, &domain, FitMode::Categorical).unwrap();
    assert!((s.probs[0][0] - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn proposal_maximizes_density_ratio_on_small_grid() {
    let domain = Domain::grid(2, 3);
    let good: Vec<&[usize]> = vec![&[0, 2], &[0, 2], &[1, 2], &[0, 1]];
    let bad: Vec<&[usize]> = vec![&[2, 0], &[1, 0], &[0, 0], &[2, 1]];
    let l = fit_surrogate(&good, &domain, FitMode::Categorical).unwrap();
    let g = fit_surrogate(&bad, &domain, FitMode::Categorical).unwrap();
    let mut best = (f64::NEG_INFINITY, vec![]);
    for a in 0..3 {
        for b in 0..3 {
            let ratio = (l.probs[0][a] * l.probs[1][b]) / (g.probs[0][a] * g.probs[1][b]);
            if ratio > best.0 {
                best = (ratio, vec![a, b]);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(propose(&l, &g, 2000, &mut rng), best.1);
    // excluding the best point makes the runner-up win
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let second = propose_new(&l, &g, 2000, &mut rng, |x| x != best.1.as_slice());
    assert_ne!(second, best.1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fallback = propose_new(&l, &g, 2000, &mut rng, |_| false);
    assert_eq!(fallback, best.1);
}

#[test]
fn first_surrogate_step_uses_four_clusters() {
    let p = TpeParams::default();
    assert_eq!(cluster_count(p.c0), 4);
    let ks: Vec<usize> = (0..200)
        .map(|i| cluster_count(p.c0 * p.alpha.powi(i)))
        .collect();
    assert!(ks.windows(2).all(|w| w[0] <= w[1]));
    assert!(ks[199] > 4);
}

#[test]
fn quantile_type_seven() {
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    assert_eq!(quantile(&[3.0, 1.0, 2.0], 1.0), 3.0);
    assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.0), 1.0);
    assert!((quantile(&[0.0, 10.0], 0.85) - 8.5).abs() < 1e-12);
}

#[test]
fn flat_objectives_collapse_to_one_cluster() {
    let split = kmeans_split(&[0.7; 10], 0.25).unwrap();
    assert_eq!(split.k_used, Some(1));
    assert_eq!(split.desirable.len(), 10);
    assert!(split.undesirable.is_empty());
}

#[test]
fn kmeans_split_isolates_the_plateau_top() {
    // a big plateau with a small elite group: the quantile threshold sits on
    // the plateau and admits it wholesale, the top cluster does not
    let mut obj = vec![0.5; 30];
    obj.extend([0.9; 3]);
    obj.extend([0.1; 5]);
    let classic = classic_threshold(&obj, 0.15).unwrap();
    let kmeans = kmeans_split(&obj, 0.25).unwrap();
    assert_eq!(kmeans.desirable, vec![30, 31, 32]);
    assert_eq!(kmeans.undesirable, (33..38).collect::<Vec<_>>());
    assert!(classic.desirable.len() > 30);
}

proptest! {
    #[test]
    fn splits_are_disjoint_and_ordered(obj in prop::collection::vec(-3.0f64..3.0, 1..60), c in 0.01f64..1.0, gamma in 0.05f64..0.95) {
        for split in [kmeans_split(&obj, c).unwrap(), classic_threshold(&obj, gamma).unwrap()] {
            prop_assert!(!split.desirable.is_empty());
            prop_assert!(split.desirable.iter().all(|i| !split.undesirable.contains(i)));
            let worst_good = split.desirable.iter().map(|&i| obj[i]).fold(f64::INFINITY, f64::min);
            let best_bad = split.undesirable.iter().map(|&i| obj[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(worst_good > best_bad);
        }
        let classic = classic_threshold(&obj, gamma).unwrap();
        prop_assert_eq!(classic.desirable.len() + classic.undesirable.len(), obj.len());
    }

    #[test]
    fn k_used_respects_bounds(obj in prop::collection::vec(0i32..6, 1..40), c in 0.01f64..1.0) {
        let values: Vec<f64> = obj.iter().map(|&v| v as f64).collect();
        let mut distinct = values.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let k = kmeans_split(&values, c).unwrap().k_used.unwrap();
        let expected = if distinct.len() == 1 { 1 } else { cluster_count(c).max(2).min(distinct.len()) };
        prop_assert_eq!(k, expected);
    }

    #[test]
    fn surrogate_is_a_distribution(points in prop::collection::vec(prop::collection::vec(0usize..4, 3), 0..20), ordinal in any::<bool>()) {
        let domain = Domain::grid(3, 4);
        let refs: Vec<&[usize]> = points.iter().map(Vec::as_slice).collect();
        let mode = if ordinal { FitMode::OrdinalGaussian } else { FitMode::Categorical };
        let s = fit_surrogate(&refs, &domain, mode).unwrap();
        for p in &s.probs {
            prop_assert!(p.iter().all(|&v| v > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn proposals_stay_in_domain(seed in any::<u64>(), n in 1usize..40) {
        let domain = Domain::grid(4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<usize>> = (0..n).map(|_| domain.sample_uniform(&mut rng)).collect();
        let refs: Vec<&[usize]> = pts.iter().map(Vec::as_slice).collect();
        let l = fit_surrogate(&refs[..n / 2], &domain, FitMode::Categorical).unwrap();
        let g = fit_surrogate(&refs[n / 2..], &domain, FitMode::Categorical).unwrap();
        prop_assert!(domain.contains(&propose(&l, &g, 24, &mut rng)));
    }
}
