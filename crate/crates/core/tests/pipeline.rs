mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use brainscore::encode::{brain_score, make_split_plan, LambdaGrid, ScoreOptions, ScoringMode};
use brainscore::hemo::{align_to_scans, glover_hrf};
use brainscore::matrixio::{Block, FeatureMatrix, ResponseMatrix};
use brainscore::rng::CounterRng;
use brainscore::synth::{gen_linear_dataset, SynthConfig, SynthPreset};
use common::*;

fn small_problem(seed: u64) -> (FeatureMatrix, ResponseMatrix, Vec<Block>) {
    let (n, p, t) = (96, 6, 300);
    let x = normal(n, p, seed);
    let w = normal(p, t, seed + 1);
    let y = &x * &w + normal(n, t, seed + 2) * 2.0;
    (
        FeatureMatrix::new(x, 0.5, "x").unwrap(),
        ResponseMatrix::new(y, 2.0).unwrap(),
        Block::equal_partition(n, 6),
    )
}

#[test]
fn scores_are_bit_identical_across_thread_counts() {
    let (x, y, blocks) = small_problem(11);
    let plan = make_split_plan(&blocks).unwrap();
    let grid = LambdaGrid::standard();
    for mode in [ScoringMode::FoldMean, ScoringMode::Concatenated] {
        let opts = ScoreOptions { mode };
        let runs: Vec<_> = [1, 2, 5]
            .iter()
            .map(|&n| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
                pool.install(|| brain_score(&x, &y, &plan, &grid, &opts).unwrap())
            })
            .collect();
        for r in &runs[1..] {
            let same = r.r_mean.iter().zip(&runs[0].r_mean).all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "{mode:?} differs across thread counts");
            assert_eq!(r.chosen_lambda, runs[0].chosen_lambda);
        }
    }
}

#[test]
fn score_matrix_round_trips() {
    let (x, y, blocks) = small_problem(3);
    let s = brain_score(&x, &y, &make_split_plan(&blocks).unwrap(), &LambdaGrid::standard(), &Default::default())
        .unwrap();
    let back = brainscore::ScoreMap::from_matrix(&s.to_matrix()).unwrap();
    assert_eq!(back.r_mean, s.r_mean);
    assert_eq!(back.r_per_fold, s.r_per_fold);
}

#[test]
fn signal_targets_outscore_shuffled_ones() {
    let (x, y, blocks) = small_problem(5);
    let s = brain_score(&x, &y, &make_split_plan(&blocks).unwrap(), &LambdaGrid::standard(), &Default::default())
        .unwrap();
    let mean = s.r_mean.iter().sum::<f64>() / s.n_targets() as f64;
    assert!(mean > 0.5, "mean r {mean}");

    let noise = ResponseMatrix::new(normal(96, 300, 77), 2.0).unwrap();
    let z = brain_score(&x, &noise, &make_split_plan(&blocks).unwrap(), &LambdaGrid::standard(), &Default::default())
        .unwrap();
    let zmean = z.r_mean.iter().sum::<f64>() / z.n_targets() as f64;
    assert!(zmean.abs() < 0.05, "null mean r {zmean}");
}

#[test]
fn rate_mismatch_is_rejected() {
    let (x, y, blocks) = small_problem(1);
    let x = FeatureMatrix { sample_rate: 1.0, ..x };
    assert!(brain_score(&x, &y, &make_split_plan(&blocks).unwrap(), &LambdaGrid::standard(), &Default::default())
        .is_err());
}

#[test]
fn linear_dataset_hits_the_requested_snr() {
    let cfg = SynthConfig::new(60, 4, 12, 0.7, 9);
    let d = gen_linear_dataset(&cfg).unwrap();
    let signal = &d.design.data * &d.weights;
    let noise = &d.response.data - &signal;
    for c in 0..cfg.n_targets {
        let var = |v: Vec<f64>| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        let ratio = var(signal.column(c).iter().copied().collect()) / var(noise.column(c).iter().copied().collect());
        assert!((ratio - 0.7).abs() < 1e-9, "column {c}: {ratio}");
    }
}

#[test]
fn synthetic_generation_is_seed_deterministic() {
    let cfg = SynthPreset::Replica.config(4);
    let cfg = SynthConfig { n_subjects: 5, n_targets: 20, ..cfg };
    let a = SynthPreset::Replica.generate(&cfg).unwrap();
    let b = SynthPreset::Replica.generate(&cfg).unwrap();
    assert_eq!(a.subjects[2].1.data, b.subjects[2].1.data);
    let c = SynthPreset::Replica.generate(&SynthConfig { seed: 5, ..cfg }).unwrap();
    assert_ne!(a.subjects[2].1.data, c.subjects[2].1.data);
}

#[test]
fn rng_substreams_are_random_access() {
    let s = CounterRng::substream(42, 3);
    let mut seq = s.clone();
    for i in 0..100 {
        assert_eq!(seq.next_u64(), s.at(i));
    }
    assert_ne!(CounterRng::substream(42, 4).at(0), s.at(0));
}

#[test]
fn hrf_kernel_shape() {
    let k = glover_hrf(100.0, 32.0).unwrap();
    let (peak_i, peak) = k.samples.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let peak_t = peak_i as f64 / 100.0;
    assert!((peak_t - 5.6).abs() < 0.05, "peak at {peak_t}");
    assert!((peak - 1.0).abs() < 1e-12 || peak > 0.0);
    let undershoot = k.samples[peak_i..].iter().copied().fold(f64::MAX, f64::min);
    assert!(undershoot < 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hrf_alignment_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let n_scans = 20;
        let rows = brainscore::synth::frames_for_scans(n_scans);
        let f1 = normal(rows, 2, seed);
        let f2 = normal(rows, 2, !seed);
        let fm = |m: DMatrix<f64>| FeatureMatrix::new(m, 50.0, "a").unwrap();
        let conv = |m: DMatrix<f64>| align_to_scans(&fm(m), 2.0, n_scans, false).unwrap().data;
        let lhs = conv(&f1 * a + &f2 * b);
        let rhs = conv(f1) * a + conv(f2) * b;
        prop_assert!((lhs - rhs).abs().max() < 1e-10);
    }

    #[test]
    fn impulse_response_follows_the_kernel(offset in 0usize..400) {
        let rate = 50.0;
        let n_scans = 30;
        let rows = 1500;
        let mut x = DMatrix::zeros(rows, 1);
        x[(offset, 0)] = 1.0;
        let out = align_to_scans(&FeatureMatrix::new(x, rate, "i").unwrap(), 2.0, n_scans, false).unwrap();
        let k = glover_hrf(rate, 32.0).unwrap();
        for s in 0..n_scans {
            let idx = (s as f64 * 2.0 * rate).round() as usize;
            let want = if idx >= offset && idx - offset < k.len() { k.samples[idx - offset] } else { 0.0 };
            prop_assert!((out.data[(s, 0)] - want).abs() < 1e-14);
        }
    }
}
