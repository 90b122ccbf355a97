use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rgf_core::corpus::TokenSequence;
use rgf_core::nnmodel::{forward, init_model, Intervention, ModelConfig, Restoration};
use rgf_core::trace::{
    build_ie_grid, known_positions, noise_seed, select_mcns, IEGrid, TraceConfig,
};

fn cfg(layers: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        n_layers: layers,
        n_heads: 2,
        d_model: 8,
        d_ff: 16,
        vocab_size: 12,
        max_len: 4,
        n_classes: 2,
        init_seed: seed,
    }
}

fn random_seq(rng: &mut ChaCha8Rng, full: bool) -> TokenSequence {
    let n_real = if full { 4 } else { rng.random_range(1..=4) };
    let mut tokens: Vec<u32> = (0..n_real).map(|_| rng.random_range(1..12)).collect();
    tokens.resize(4, 0);
    TokenSequence { tokens, n_real }
}

#[test]
fn grid_matches_naive_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = init_model(&cfg(2, 4)).unwrap();
    let known: BTreeSet<u32> = [2, 5, 7].into_iter().collect();
    let mut samples = Vec::new();
    while samples.len() < 6 {
        let s = random_seq(&mut rng, samples.len() < 3);
        samples.push(s);
    }
    samples[0].tokens[2] = 5;
    let tc = TraceConfig { seed: 77, sigma: 0.8, ..TraceConfig::default() };
    let grid = build_ie_grid(&params, &samples, &known, &tc).unwrap();

    let mut sums = vec![vec![Vec::<f64>::new(); 4]; 2];
    for s in &samples {
        let pos = known_positions(s, &known);
        if pos.is_empty() {
            continue;
        }
        let base = Intervention {
            corrupt_positions: pos,
            sigma: 0.8,
            noise_seed: noise_seed(77, s),
            restore: vec![],
        };
        for l in 1..=2 {
            for i in 0..s.n_real {
                let clean = forward(&params, s, None).unwrap();
                let corrupted = forward(&params, s, Some(&base)).unwrap();
                let mut iv = base.clone();
                iv.restore.push(Restoration { layer: l, position: i, vector: clean.hidden[l].row(i).to_vec() });
                let restored = forward(&params, s, Some(&iv)).unwrap();
                sums[l - 1][i].push(restored.p_positive() - corrupted.p_positive());
            }
        }
    }
    for l in 0..2 {
        for i in 0..4 {
            let v = &sums[l][i];
            assert_eq!(grid.count[l][i], v.len());
            if !v.is_empty() {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                assert!((grid.mean_ie[l][i] - mean).abs() < 1e-12, "cell ({l},{i})");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn zero_noise_gives_zero_grid(seed in 0u64..1000, layers in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_model(&cfg(layers, seed)).unwrap();
        let known: BTreeSet<u32> = (1..12).collect();
        let samples: Vec<_> = (0..3).map(|_| random_seq(&mut rng, false)).collect();
        let tc = TraceConfig { sigma: 0.0, seed, ..TraceConfig::default() };
        let g = build_ie_grid(&params, &samples, &known, &tc).unwrap();
        let worst = g.populated().map(|c| c.2.abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-9);
    }

    #[test]
    fn selection_respects_cutoff(values in prop::collection::vec((0u16..40).prop_map(|v| v as f64 / 8.0), 1..300)) {
        let grid = IEGrid {
            mean_ie: vec![values.clone()],
            count: vec![vec![1; values.len()]],
            n_samples: 1,
            n_skipped: 0,
        };
        let m = select_mcns(&grid, 95.0).unwrap();
        let n = values.len();
        let at_cutoff = values.iter().filter(|&&v| v == m.cutoff).count();
        let above = values.iter().filter(|&&v| v > m.cutoff).count();
        prop_assert_eq!(m.len(), above + at_cutoff);
        prop_assert!((above as f64) < 0.05 * n as f64 + 1e-9);
        prop_assert!(m.entries.iter().all(|e| e.mean_ie >= m.cutoff));
        prop_assert!(m.entries.windows(2).all(|w| w[0].mean_ie >= w[1].mean_ie));
        let chosen: BTreeSet<usize> = m.entries.iter().map(|e| e.position).collect();
        prop_assert_eq!(chosen.len(), m.len());
        let min_in = m.entries.iter().map(|e| e.mean_ie).fold(f64::INFINITY, f64::min);
        for (i, &v) in values.iter().enumerate() {
            if !chosen.contains(&i) {
                prop_assert!(v < min_in);
            }
        }
    }
}

#[test]
fn hundred_distinct_values_select_five() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut values: Vec<f64> = (0..100).map(|i| i as f64 * 0.01 + rng.random_range(0.0..0.001)).collect();
    values.reverse();
    let grid = IEGrid { mean_ie: vec![values.clone()], count: vec![vec![1; 100]], n_samples: 1, n_skipped: 0 };
    let m = select_mcns(&grid, 95.0).unwrap();
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let got: Vec<f64> = m.entries.iter().map(|e| e.mean_ie).collect();
    assert_eq!(got, sorted[..5].to_vec());
}
