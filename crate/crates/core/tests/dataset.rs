use std::collections::{BTreeMap, BTreeSet};

use infosel_core::dataset::{
    generate_synthetic, greedy_partition, split_by_group, FeatureShape, GroupSizes, Origin, Split, SplitFractions,
    SyntheticConfig,
};
use proptest::prelude::*;

fn groups_by_split(
    d: &infosel_core::dataset::Dataset,
    s: &infosel_core::dataset::SplitAssignment,
) -> [BTreeSet<u64>; 3] {
    let mut out: [BTreeSet<u64>; 3] = Default::default();
    for r in d.records() {
        out[s.split_of(r.sample_id).unwrap().index()].insert(r.group_id);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn splits_are_group_exclusive(seed in any::<u64>(), split_seed in any::<u64>(), n_groups in 20usize..80) {
        let d = generate_synthetic(&SyntheticConfig { n_groups, seed, ..Default::default() }).unwrap();
        let Ok(s) = split_by_group(&d, SplitFractions::default(), split_seed) else {
            // Small instances may leave a split without a class; that is an error, not a leak.
            return Ok(());
        };
        prop_assert_eq!(s.len(), d.len());
        let g = groups_by_split(&d, &s);
        for a in 0..3 {
            for b in a + 1..3 {
                prop_assert!(g[a].is_disjoint(&g[b]));
            }
        }
        prop_assert!(s.check_against(&d).is_ok());
    }

    #[test]
    fn generation_and_split_are_deterministic(seed in any::<u64>()) {
        let cfg = SyntheticConfig { n_groups: 40, seed, ..Default::default() };
        let (a, b) = (generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        prop_assert_eq!(&a, &b);
        let sa = split_by_group(&a, SplitFractions::default(), seed ^ 1);
        let sb = split_by_group(&b, SplitFractions::default(), seed ^ 1);
        prop_assert_eq!(sa, sb);
    }
}

#[test]
fn achieved_fractions_are_close_on_typical_data() {
    for seed in 0..20 {
        let d = generate_synthetic(&SyntheticConfig { seed, ..Default::default() }).unwrap();
        let s = split_by_group(&d, SplitFractions::default(), seed).unwrap();
        assert!(s.achieved.max_abs_error(&s.target) <= 0.02, "seed {seed}: {:?}", s.achieved);
    }
}

#[test]
fn duplicate_distance_matches_gaussian_norm() {
    // E||σ·z|| for z ~ N(0, I_8) is σ·√2·Γ(4.5)/Γ(4).
    let sigma = 0.3;
    let gamma_4_5 = 3.5 * 2.5 * 1.5 * 0.5 * std::f64::consts::PI.sqrt();
    let expected = sigma * 2f64.sqrt() * gamma_4_5 / 6.0;
    let d = generate_synthetic(&SyntheticConfig {
        n_groups: 600,
        perturbation_sigma: sigma,
        shape: FeatureShape::Vector { dim: 8 },
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    let dists: Vec<f64> = d
        .records()
        .iter()
        .filter(|r| r.origin == Origin::Duplicate)
        .map(|r| {
            let p = d.get(r.parent_id.unwrap()).unwrap();
            p.features.iter().zip(&r.features).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    assert!(dists.len() >= 1000, "only {} duplicates", dists.len());
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    assert!((mean - expected).abs() <= 0.1 * expected, "{mean} vs {expected}");
}

#[test]
fn heavy_tailed_groups_hold_a_large_share() {
    let d = generate_synthetic(&SyntheticConfig {
        n_groups: 400,
        group_sizes: GroupSizes { min: 1, max: 40, tail_exponent: 4.0 },
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let mut sizes: BTreeMap<u64, usize> = BTreeMap::new();
    for r in d.records() {
        *sizes.entry(r.group_id).or_default() += 1;
    }
    let mut v: Vec<usize> = sizes.into_values().collect();
    v.sort_unstable_by(|a, b| b.cmp(a));
    let top = v.len() / 10;
    let share = v[..top].iter().sum::<usize>() as f64 / d.len() as f64;
    assert!(share > 0.3, "top 10% of groups hold {share}");
}

fn error_of(sizes: &[usize], placement: &[Split], f: &SplitFractions) -> f64 {
    let total: usize = sizes.iter().sum();
    let mut filled = [0usize; 3];
    for (s, p) in sizes.iter().zip(placement) {
        filled[p.index()] += s;
    }
    let t = f.as_array();
    (0..3).map(|k| (filled[k] as f64 / total as f64 - t[k]).abs()).fold(0.0, f64::max)
}

/// Minimum achievable max-fraction error over all 3^n placements.
fn brute_force(sizes: &[usize], f: &SplitFractions) -> f64 {
    let n = sizes.len();
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let placement: Vec<Split> = (0..n)
            .map(|_| {
                let s = Split::ALL[c % 3];
                c /= 3;
                s
            })
            .collect();
        best = best.min(error_of(sizes, &placement, f));
    }
    best
}

#[test]
fn greedy_partition_against_exhaustive_search() {
    let f = SplitFractions::default();

    // One group holds 45% of the samples.
    let sizes = [45, 20, 15, 12, 8];
    let placement = greedy_partition(&sizes, &f);
    let greedy = error_of(&sizes, &placement, &f);
    let optimum = brute_force(&sizes, &f);
    assert_eq!(placement[0], Split::Train);
    assert!(greedy >= optimum);
    assert!(greedy - optimum <= 8.0 / 100.0 + 1e-12, "greedy {greedy}, optimum {optimum}");

    // Greedy largest-first stays within one (smallest) item of the optimum.
    let mut rng = infosel_core::rng::rng_from_seed(2);
    use rand::Rng;
    for _ in 0..500 {
        let mut sizes: Vec<usize> = (0..5).map(|_| rng.random_range(1..60)).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        let total: usize = sizes.iter().sum();
        let greedy = error_of(&sizes, &greedy_partition(&sizes, &f), &f);
        let optimum = brute_force(&sizes, &f);
        let slack = *sizes.iter().max().unwrap() as f64 / total as f64;
        assert!(greedy <= optimum + slack + 1e-12, "{sizes:?}: greedy {greedy}, optimum {optimum}");
    }
}

#[test]
fn dominant_group_stays_whole_and_fractions_are_reported() {
    use infosel_core::dataset::{Dataset, Label, SampleRecord};
    let sizes = [45usize, 20, 15, 12, 8];
    let mut records = Vec::new();
    let mut id = 0;
    for (g, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let label = if i % 2 == 0 { Label::NoFinding } else { Label::Abnormal };
            records.push(SampleRecord {
                sample_id: id,
                group_id: g as u64,
                label,
                origin: Origin::Base,
                parent_id: None,
                features: vec![id as f64],
            });
            id += 1;
        }
    }
    let d = Dataset::new(FeatureShape::Vector { dim: 1 }, records).unwrap();
    let s = split_by_group(&d, SplitFractions::default(), 5).unwrap();
    let g = groups_by_split(&d, &s);
    assert_eq!(g.iter().filter(|set| set.contains(&0)).count(), 1);
    let mut counts = [0usize; 3];
    for (_, split) in s.iter() {
        counts[split.index()] += 1;
    }
    let recomputed = counts.map(|c| c as f64 / 100.0);
    assert_eq!(s.achieved.as_array(), recomputed);
}
