//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process fails if any criterion fails. Positional arguments filter
//! criteria by substring, e.g. `cargo test --test acceptance -- ctc`.

#[path = "../common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use brainscore::contrast::{build_concat, delta_layerwise, delta_vs_baseline, ConcatLevel};
use brainscore::ctc::{ctc_log_likelihood, CtcInstance};
use brainscore::encode::{brain_score, make_split_plan, LambdaGrid, RidgeSvd, ScoreMap, ScoreOptions};
use brainscore::groupstats::{group_test, roi_tests, wilcoxon_signed_rank, Alternative};
use brainscore::hemo::{align_to_scans, glover_hrf};
use brainscore::matrixio::{Block, FeatureMatrix, ResponseMatrix};
use brainscore::rng::CounterRng;
use brainscore::synth::{gen_linear_dataset, gen_null_cohort, score_replica, SynthConfig, SynthPreset};

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn ridge_oracle() -> Outcome {
    let start = Instant::now();
    let grid = LambdaGrid::standard();
    let mut rng = CounterRng::new(0xA11CE);
    let mut worst = 0f64;
    for inst in 0..200u64 {
        let n = 2 + (rng.next_u64() % 63) as usize;
        let p = 1 + (rng.next_u64() % 16) as usize;
        let t = 1 + (rng.next_u64() % 4) as usize;
        let x = normal(n, p, 1000 + inst);
        let y = normal(n, t, 5000 + inst);
        let svd = RidgeSvd::new(&x).unwrap();
        for &lambda in grid.values() {
            let w = svd.weights(&y, &vec![lambda; t]).unwrap();
            let oracle = ridge_normal_equations(&x, &y, lambda);
            worst = worst.max((w - oracle).amax());
        }
    }
    let el = start.elapsed();
    outcome(
        worst < 1e-8 && el < Duration::from_secs(10),
        format!("max |w_svd - w_normal| = {worst:.2e} (< 1e-8), runtime {} (< 10s)", secs(el)),
    )
}

fn loo_identity() -> Outcome {
    let grid = LambdaGrid::standard();
    let mut rng = CounterRng::new(0x1005);
    let mut worst = 0f64;
    for inst in 0..50u64 {
        let n = 3 + (rng.next_u64() % 38) as usize;
        let p = 1 + (rng.next_u64() % 12) as usize;
        let x = normal(n, p, 200 + inst);
        let y = normal(n, 1, 300 + inst);
        let svd = RidgeSvd::new(&x).unwrap();
        for &lambda in grid.values() {
            let closed = svd.loo_residuals(y.as_slice(), lambda).unwrap();
            let refit = loo_refit_residuals(&x, y.as_slice(), lambda);
            for (a, b) in closed.iter().zip(&refit) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    outcome(worst < 1e-6, format!("max |closed-form - refit| = {worst:.2e} (< 1e-6) over 50 instances x 20 penalties"))
}

fn ctc_oracle() -> Outcome {
    let mut rng = CounterRng::new(0xC7C);
    let mut worst = 0f64;
    let mut infeasible_ok = true;
    let mut n_infeasible = 0;
    for _ in 0..1000 {
        let t = 1 + (rng.next_u64() % 6) as usize;
        let v = 2 + (rng.next_u64() % 3) as usize;
        let len = (rng.next_u64() % (t as u64 + 1)) as usize;
        let targets: Vec<usize> = (0..len).map(|_| 1 + (rng.next_u64() % (v as u64 - 1)) as usize).collect();
        let logits = DMatrix::from_fn(t, v, |_, _| 2.0 * rng.next_normal());
        let inst = CtcInstance::from_logits(&logits, targets.clone()).unwrap();
        let dp = ctc_log_likelihood(&inst);
        let brute = ctc_brute_force(inst.log_probs(), &targets);
        if brute == 0.0 {
            n_infeasible += 1;
            infeasible_ok &= dp == f64::NEG_INFINITY;
        } else {
            worst = worst.max((dp - brute.ln()).abs());
        }
    }
    outcome(
        worst < 1e-10 && infeasible_ok,
        format!("max |log DP - log brute force| = {worst:.2e} (< 1e-10); {n_infeasible} infeasible draws all -inf: {infeasible_ok}"),
    )
}

fn wilcoxon_exactness() -> Outcome {
    let mut rng = CounterRng::new(0x5167);
    let mut worst = 0f64;
    let mut patterns = 0usize;
    for n in 1..=12usize {
        let distinct: Vec<f64> = (0..n).map(|_| 0.05 + rng.next_f64()).collect();
        let tied: Vec<f64> = (0..n).map(|_| (1 + rng.next_u64() % 4) as f64).collect();
        for mags in [distinct, tied] {
            for mask in 0u32..(1 << n) {
                let d: Vec<f64> = mags
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| if mask >> i & 1 == 1 { m } else { -m })
                    .collect();
                for alt in [Alternative::Greater, Alternative::TwoSided] {
                    let got = wilcoxon_signed_rank(&d, alt).unwrap();
                    let (w, p) = wilcoxon_enumerate(&d, alt);
                    worst = worst.max((got.p - p).abs()).max((got.statistic - w).abs());
                }
                patterns += 1;
            }
        }
    }
    let five = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], Alternative::Greater).unwrap().p;
    outcome(
        worst < 1e-12 && five == 0.03125,
        format!("{patterns} sign patterns (n <= 12): max |p - enumeration| = {worst:.2e}; n=5 all-positive p = {five}"),
    )
}

fn null_calibration() -> Outcome {
    let start = Instant::now();
    let reps = 20;
    let mut fractions = Vec::new();
    let mut means = Vec::new();
    for rep in 0..reps {
        let cfg = SynthPreset::Null.config(10_000 + rep);
        assert_eq!((cfg.n_subjects, cfg.n_targets), (20, 500));
        let group = gen_null_cohort(&cfg).unwrap();
        let stats = group_test(&group, Alternative::Greater, 0.05).unwrap();
        fractions.push(stats.fraction_significant());
        means.push(group.mean());
    }
    let el = start.elapsed();
    let k = reps as f64;
    let frac = fractions.iter().sum::<f64>() / k;
    let sd = (fractions.iter().map(|f| (f - frac).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let se = sd / k.sqrt();
    let mean = means.iter().sum::<f64>() / k;
    let pass = frac <= 0.05 + 2.0 * se && mean.abs() <= 0.02 && el < Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "FDR-significant fraction {frac:.4} (<= 0.05 + 2*SE = {:.4}); mean score {mean:+.4} (|.| <= 0.02); runtime {} (< 300s)",
            0.05 + 2.0 * se,
            secs(el)
        ),
    )
}

fn snr_recovery() -> Outcome {
    let cfg = SynthConfig::new(300, 10, 200, 1.0, 0x5A1);
    let data = gen_linear_dataset(&cfg).unwrap();
    let plan = make_split_plan(&cfg.blocks()).unwrap();
    let s = brain_score(&data.design, &data.response, &plan, &LambdaGrid::standard(), &ScoreOptions::default()).unwrap();
    let mean = s.r_mean.iter().sum::<f64>() / s.n_targets() as f64;
    let target = 0.5f64.sqrt();
    outcome(
        (mean - target).abs() <= 0.05,
        format!("mean brain score {mean:.4} vs sqrt(1/2) = {target:.4} (tolerance 0.05)"),
    )
}

fn hrf_behavior() -> Outcome {
    let k = glover_hrf(100.0, 32.0).unwrap();
    let (imax, _) = k.samples.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let peak = imax as f64 / k.oversample_hz;
    let undershoot = k.samples[imax..].iter().cloned().fold(f64::INFINITY, f64::min);
    let a = normal(3000, 3, 71);
    let b = normal(3000, 3, 72);
    let (ca, cb) = (2.5, -0.75);
    let combo = a.map(|v| v * ca) + b.map(|v| v * cb);
    let conv = |m: DMatrix<f64>| {
        align_to_scans(&FeatureMatrix::new(m, 50.0, "x").unwrap(), 2.0, 30, false)
            .unwrap()
            .data
    };
    let lhs = conv(combo);
    let rhs = conv(a).map(|v| v * ca) + conv(b).map(|v| v * cb);
    let scale = lhs.amax().max(1.0);
    let lin = (lhs - rhs).amax() / scale;
    outcome(
        (4.5..=6.5).contains(&peak) && undershoot < 0.0 && lin < 1e-12,
        format!("peak at {peak:.2}s (in [4.5, 6.5]); post-peak minimum {undershoot:.4} (< 0); linearity error {lin:.2e} (< 1e-12)"),
    )
}

fn telescoping() -> Outcome {
    // scores from an actual nested hierarchy on synthetic data
    let cfg = SynthConfig::new(96, 4, 40, 0.5, 0x7E1);
    let base = gen_linear_dataset(&cfg).unwrap();
    let names: Vec<String> = (0..=5).map(|l| if l == 0 { "mel".into() } else { format!("layer_{l}") }).collect();
    let feats: Vec<FeatureMatrix> = names
        .iter()
        .enumerate()
        .map(|(l, name)| {
            let d = if l == 3 { base.design.data.clone() } else { normal(96, 3, 900 + l as u64) };
            FeatureMatrix::new(d, 0.5, name.clone()).unwrap()
        })
        .collect();
    let plan = make_split_plan(&cfg.blocks()).unwrap();
    let grid = LambdaGrid::standard();
    let maps: Vec<Option<ScoreMap>> = ConcatLevel::hierarchy(&names)
        .unwrap()
        .iter()
        .map(|lvl| {
            let (x, _) = build_concat(lvl, &feats).unwrap();
            Some(brain_score(&x, &base.response, &plan, &grid, &ScoreOptions::default()).unwrap())
        })
        .collect();
    let mut worst = telescoping_error(&maps);
    // and arbitrary score sets
    let mut rng = CounterRng::new(0x7E2);
    for _ in 0..100 {
        let t = 1 + (rng.next_u64() % 50) as usize;
        let maps: Vec<Option<ScoreMap>> = (0..=5)
            .map(|_| {
                let r: Vec<f64> = (0..t).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
                Some(ScoreMap {
                    r_per_fold: DMatrix::from_fn(1, t, |_, j| r[j]),
                    fold_defined: DMatrix::from_element(1, t, true),
                    chosen_lambda: DMatrix::from_element(1, t, 1.0),
                    r_mean: r,
                    mode: Default::default(),
                })
            })
            .collect();
        worst = worst.max(telescoping_error(&maps));
    }
    let full = maps_full_gain(&maps);
    outcome(worst < 1e-12, format!("max |sum_L dR_L - (R_5 - R_0)| = {worst:.2e} (< 1e-12); layer-3 target gain {full:+.3}"))
}

fn telescoping_error(maps: &[Option<ScoreMap>]) -> f64 {
    let steps = delta_layerwise(maps).unwrap();
    let total = delta_vs_baseline(maps[5].as_ref().unwrap(), maps[0].as_ref().unwrap()).unwrap();
    (0..total.delta_r.len())
        .map(|j| (steps.iter().map(|s| s.delta_r[j]).sum::<f64>() - total.delta_r[j]).abs())
        .fold(0.0, f64::max)
}

fn maps_full_gain(maps: &[Option<ScoreMap>]) -> f64 {
    delta_vs_baseline(maps[5].as_ref().unwrap(), maps[0].as_ref().unwrap()).unwrap().mean()
}

fn replica() -> Outcome {
    let cfg = SynthPreset::Replica.config(2024);
    let bundle = SynthPreset::Replica.generate(&cfg).unwrap();
    let scores = score_replica(&bundle, &LambdaGrid::standard()).unwrap();
    let stats = group_test(&scores.delta, Alternative::Greater, 0.05).unwrap();
    let rois = roi_tests(&scores.delta, &bundle.rois, Alternative::Greater).unwrap();
    let (gain, test) = rois["responsive"];
    let (null_gain, _) = rois["unresponsive"];
    let responsive = &bundle.rois["responsive"];
    let sig_resp = responsive.iter().filter(|&&j| stats.significant[j]).count();
    let sig_total = stats.n_significant();
    let all_positive = (0..scores.delta.n_targets())
        .filter(|&j| stats.significant[j])
        .all(|j| scores.delta.values.column(j).mean() > 0.0);
    outcome(
        gain > 0.0 && test.p <= 0.05 && sig_resp > 0 && all_positive,
        format!(
            "{} subjects: responsive ROI dR {gain:+.3} (Wilcoxon p = {:.2e}); FDR q=0.05 significant targets {sig_resp}/{} responsive, {} elsewhere; unresponsive ROI dR {null_gain:+.4}",
            scores.delta.n_subjects(),
            test.p,
            responsive.len(),
            sig_total - sig_resp
        ),
    )
}

fn performance() -> Outcome {
    let (n, p, t) = (800, 500, 10_000);
    let x = normal(n, p, 0xBEEF);
    let w = normal(p, t, 0xBEF0).map(|v| v / (p as f64).sqrt());
    let y = &x * w + normal(n, t, 0xBEF1);
    let x = FeatureMatrix::new(x, 0.5, "x").unwrap();
    let y = ResponseMatrix::new(y, 2.0).unwrap();
    let plan = make_split_plan(&Block::equal_partition(n, 12)).unwrap();
    let grid = LambdaGrid::standard();
    let mut runs = Vec::new();
    for threads in [1, 4, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let start = Instant::now();
        let s = pool.install(|| brain_score(&x, &y, &plan, &grid, &ScoreOptions::default()).unwrap());
        runs.push((threads, start.elapsed(), s));
    }
    let identical = runs.windows(2).all(|w| {
        let (a, b) = (&w[0].2, &w[1].2);
        a.r_mean.iter().zip(&b.r_mean).all(|(u, v)| u.to_bits() == v.to_bits())
            && a.r_per_fold == b.r_per_fold
            && a.chosen_lambda == b.chosen_lambda
    });
    let t8 = runs[2].1;
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    let timings: Vec<String> = runs.iter().map(|(th, d, _)| format!("{th} threads {}", secs(*d))).collect();
    outcome(
        identical && t8 < Duration::from_secs(180),
        format!(
            "{} on {cores} available core(s) (limit 180s at 8 threads); bit-identical across thread counts: {identical}",
            timings.join(", ")
        ),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("ridge_oracle", ridge_oracle),
        ("loo_identity", loo_identity),
        ("ctc_oracle", ctc_oracle),
        ("wilcoxon_exactness", wilcoxon_exactness),
        ("null_calibration", null_calibration),
        ("snr_recovery", snr_recovery),
        ("hrf_behavior", hrf_behavior),
        ("telescoping_contrast", telescoping),
        ("replica_end_to_end", replica),
        ("performance", performance),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("{status} [{}] {name}: {} ({})", i + 1, o.detail, secs(start.elapsed()));
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
