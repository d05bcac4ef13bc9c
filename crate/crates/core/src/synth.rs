//! Synthetic ground-truth datasets: linear responses through the HRF at a
//! controlled SNR, null cohorts, and a two-model replica scenario.
//!
//! All randomness comes from [`CounterRng`] substreams of the config seed,
//! so identical configs give bit-identical data.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::delta_models;
use crate::encode::{brain_score, make_split_plan, LambdaGrid, ScoreMap, ScoreOptions};
use crate::error::{Error, Result};
use crate::groupstats::GroupMatrix;
use crate::hemo::align_to_scans;
use crate::matrixio::{Block, FeatureMatrix, ResponseMatrix};
use crate::rng::CounterRng;

pub const ACTIVATION_RATE: f64 = 50.0;
pub const TR_SECONDS: f64 = 2.0;

// substream ids
const S_ACTIVATIONS: u64 = 1;
const S_WEIGHTS: u64 = 2;
const S_BASELINE: u64 = 3;
const S_RANDOM_MODEL: u64 = 4;
const S_SUBJECT: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Activation frames at [`ACTIVATION_RATE`].
    pub n_time_activation: usize,
    /// Scans at 1 / [`TR_SECONDS`].
    pub n_scans: usize,
    pub n_features: usize,
    pub n_targets: usize,
    pub n_subjects: usize,
    /// Signal-to-noise variance ratio; infinity switches noise off.
    pub snr: f64,
    pub seed: u64,
    /// Number of contiguous cross-validation blocks.
    #[serde(default = "default_blocks")]
    pub n_blocks: usize,
    /// AR(1) coefficient of the noise; 0 gives white noise.
    #[serde(default)]
    pub noise_ar1: f64,
}

fn default_blocks() -> usize {
    12
}

impl SynthConfig {
    /// Config whose activation length exactly spans the scans.
    pub fn new(n_scans: usize, n_features: usize, n_targets: usize, snr: f64, seed: u64) -> Self {
        Self {
            n_time_activation: frames_for_scans(n_scans),
            n_scans,
            n_features,
            n_targets,
            n_subjects: 1,
            snr,
            seed,
            n_blocks: default_blocks(),
            noise_ar1: 0.0,
        }
    }

    pub fn with_subjects(mut self, n: usize) -> Self {
        self.n_subjects = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_time_activation", self.n_time_activation),
            ("n_scans", self.n_scans),
            ("n_features", self.n_features),
            ("n_targets", self.n_targets),
            ("n_subjects", self.n_subjects),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be at least 1")));
        }
        if self.snr.is_nan() || self.snr < 0.0 {
            return Err(Error::invalid(format!("snr must be >= 0, got {}", self.snr)));
        }
        if !(self.noise_ar1 > -1.0 && self.noise_ar1 < 1.0) {
            return Err(Error::invalid("noise_ar1 must lie in (-1, 1)"));
        }
        if self.n_blocks < 3 || self.n_blocks * 3 > self.n_scans {
            return Err(Error::invalid(format!(
                "{} blocks over {} scans: need at least 3 blocks of at least 3 scans",
                self.n_blocks, self.n_scans
            )));
        }
        Ok(())
    }

    pub fn blocks(&self) -> Vec<Block> {
        Block::equal_partition(self.n_scans, self.n_blocks)
    }
}

/// Activation frames covering `n_scans` scans.
pub fn frames_for_scans(n_scans: usize) -> usize {
    (n_scans as f64 * TR_SECONDS * ACTIVATION_RATE).ceil() as usize
}

fn normal_matrix(rng: &mut CounterRng, rows: usize, cols: usize) -> DMatrix<f64> {
    // filled column by column so a column's values do not depend on `cols`
    let mut m = DMatrix::zeros(rows, cols);
    for mut c in m.column_iter_mut() {
        rng.fill_normal(c.as_mut_slice());
    }
    m
}

fn activations(seed: u64, stream: u64, cfg: &SynthConfig, name: &str) -> Result<FeatureMatrix> {
    let mut rng = CounterRng::substream(seed, stream);
    FeatureMatrix::new(
        normal_matrix(&mut rng, cfg.n_time_activation, cfg.n_features),
        ACTIVATION_RATE,
        name,
    )
}

fn population_var(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

/// `signal + noise`, with each noise column scaled so that
/// `var(signal) / var(noise) = snr` exactly in-sample.
fn add_noise(signal: &DMatrix<f64>, snr: f64, ar1: f64, rng: &mut CounterRng) -> DMatrix<f64> {
    let (n, t) = signal.shape();
    let mut noise = normal_matrix(rng, n, t);
    if ar1 != 0.0 {
        let innov = (1.0 - ar1 * ar1).sqrt();
        for mut col in noise.column_iter_mut() {
            for i in 1..n {
                col[i] = ar1 * col[i - 1] + innov * col[i];
            }
        }
    }
    if snr == f64::INFINITY {
        return signal.clone();
    }
    if snr == 0.0 {
        return noise;
    }
    let mut y = signal.clone();
    for j in 0..t {
        let vs = population_var(signal.column(j).as_slice());
        let ve = population_var(noise.column(j).as_slice());
        let scale = if vs > 0.0 && ve > 0.0 { (vs / snr / ve).sqrt() } else { 1.0 };
        for i in 0..n {
            y[(i, j)] += scale * noise[(i, j)];
        }
    }
    y
}

#[derive(Debug, Clone)]
pub struct LinearDataset {
    /// Standard-normal activations at [`ACTIVATION_RATE`].
    pub activations: FeatureMatrix,
    /// HRF-convolved activations at the scan rate.
    pub design: FeatureMatrix,
    /// Responses of the first subject.
    pub response: ResponseMatrix,
    /// `features × targets`.
    pub weights: DMatrix<f64>,
}

/// `Y = hrf(X) W + noise` for one subject.
pub fn gen_linear_dataset(cfg: &SynthConfig) -> Result<LinearDataset> {
    cfg.validate()?;
    let acts = activations(cfg.seed, S_ACTIVATIONS, cfg, "features")?;
    let design = align_to_scans(&acts, TR_SECONDS, cfg.n_scans, false)?;
    let weights = normal_matrix(&mut CounterRng::substream(cfg.seed, S_WEIGHTS), cfg.n_features, cfg.n_targets);
    let signal = &design.data * &weights;
    let mut rng = CounterRng::substream(cfg.seed, S_SUBJECT);
    let response = ResponseMatrix::new(add_noise(&signal, cfg.snr, cfg.noise_ar1, &mut rng), TR_SECONDS)?;
    Ok(LinearDataset {
        activations: acts,
        design,
        response,
        weights,
    })
}

/// Pure-noise responses of subject `s`, independent of any features.
pub fn null_response(cfg: &SynthConfig, subject: usize) -> Result<ResponseMatrix> {
    let mut rng = CounterRng::substream(cfg.seed, S_SUBJECT + subject as u64);
    let zero = DMatrix::zeros(cfg.n_scans, cfg.n_targets);
    ResponseMatrix::new(add_noise(&zero, 0.0, cfg.noise_ar1, &mut rng), TR_SECONDS)
}

/// Subjects × targets brain scores of independent noise responses against
/// shared HRF-convolved features. `cfg.snr` is ignored.
pub fn gen_null_cohort(cfg: &SynthConfig) -> Result<GroupMatrix> {
    cfg.validate()?;
    let acts = activations(cfg.seed, S_ACTIVATIONS, cfg, "features")?;
    let design = align_to_scans(&acts, TR_SECONDS, cfg.n_scans, false)?;
    let plan = make_split_plan(&cfg.blocks())?;
    let grid = LambdaGrid::standard();
    let rows: Vec<Vec<f64>> = (0..cfg.n_subjects)
        .into_par_iter()
        .map(|s| {
            let y = null_response(cfg, s)?;
            Ok(brain_score(&design, &y, &plan, &grid, &ScoreOptions::default())?.r_mean)
        })
        .collect::<Result<_>>()?;
    GroupMatrix::from_rows(&rows)
}

/// A named synthetic feature set at the activation rate.
#[derive(Debug, Clone)]
pub struct SynthFeature {
    pub features: FeatureMatrix,
    pub model: Option<String>,
}

/// Files-worth of synthetic data: feature sets, per-subject responses and
/// the layout needed by a manifest.
#[derive(Debug, Clone)]
pub struct SynthBundle {
    pub features: Vec<SynthFeature>,
    pub subjects: Vec<(String, ResponseMatrix)>,
    pub blocks: Vec<Block>,
    pub rois: BTreeMap<String, Vec<usize>>,
}

/// Replica scenario. A baseline set (`mel`) and a random-network layer
/// (`random/layer_1`) are unrelated to the responses; a trained-network
/// layer (`layer_1`) drives the first half of the targets. The second half
/// is noise in every subject.
pub fn gen_replica(cfg: &SynthConfig) -> Result<SynthBundle> {
    cfg.validate()?;
    let trained = activations(cfg.seed, S_ACTIVATIONS, cfg, "layer_1")?.with_layer(1);
    let baseline = activations(cfg.seed, S_BASELINE, cfg, "mel")?.with_layer(0);
    let random = activations(cfg.seed, S_RANDOM_MODEL, cfg, "random/layer_1")?.with_layer(1);
    let design = align_to_scans(&trained, TR_SECONDS, cfg.n_scans, true)?;
    let responsive = cfg.n_targets.div_ceil(2);
    let subjects = (0..cfg.n_subjects)
        .into_par_iter()
        .map(|s| {
            let stream = S_SUBJECT + s as u64;
            let mut wrng = CounterRng::substream(cfg.seed ^ S_WEIGHTS, stream);
            let w = normal_matrix(&mut wrng, cfg.n_features, cfg.n_targets);
            let mut signal = &design.data * w;
            signal.columns_mut(responsive, cfg.n_targets - responsive).fill(0.0);
            let mut rng = CounterRng::substream(cfg.seed, stream);
            // zero-signal columns keep unit-variance noise
            let y = add_noise(&signal, cfg.snr, cfg.noise_ar1, &mut rng);
            Ok((format!("sub-{:02}", s + 1), ResponseMatrix::new(y, TR_SECONDS)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rois = BTreeMap::new();
    rois.insert("responsive".to_string(), (0..responsive).collect());
    if responsive < cfg.n_targets {
        rois.insert("unresponsive".to_string(), (responsive..cfg.n_targets).collect());
    }
    Ok(SynthBundle {
        features: vec![
            SynthFeature { features: baseline, model: None },
            SynthFeature { features: trained, model: Some("trained".into()) },
            SynthFeature { features: random, model: Some("random".into()) },
        ],
        subjects,
        blocks: cfg.blocks(),
        rois,
    })
}

/// One shared feature set and per-subject responses. With `signal` false
/// the responses are pure noise.
pub fn gen_single_feature_bundle(cfg: &SynthConfig, signal: bool) -> Result<SynthBundle> {
    cfg.validate()?;
    let acts = activations(cfg.seed, S_ACTIVATIONS, cfg, "features")?;
    let design = align_to_scans(&acts, TR_SECONDS, cfg.n_scans, false)?;
    let weights = normal_matrix(&mut CounterRng::substream(cfg.seed, S_WEIGHTS), cfg.n_features, cfg.n_targets);
    let clean = &design.data * &weights;
    let subjects = (0..cfg.n_subjects)
        .map(|s| {
            let y = if signal {
                let mut rng = CounterRng::substream(cfg.seed, S_SUBJECT + s as u64);
                ResponseMatrix::new(add_noise(&clean, cfg.snr, cfg.noise_ar1, &mut rng), TR_SECONDS)?
            } else {
                null_response(cfg, s)?
            };
            Ok((format!("sub-{:02}", s + 1), y))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthBundle {
        features: vec![SynthFeature { features: acts, model: None }],
        subjects,
        blocks: cfg.blocks(),
        rois: BTreeMap::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthPreset {
    Linear,
    Null,
    Replica,
}

impl std::str::FromStr for SynthPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "null" => Ok(Self::Null),
            "replica" => Ok(Self::Replica),
            other => Err(Error::invalid(format!(
                "unknown preset {other:?}; expected linear, null or replica"
            ))),
        }
    }
}

impl SynthPreset {
    pub fn config(self, seed: u64) -> SynthConfig {
        match self {
            Self::Linear => SynthConfig::new(300, 10, 100, 1.0, seed),
            Self::Null => SynthConfig::new(120, 10, 500, 0.0, seed).with_subjects(20),
            Self::Replica => SynthConfig::new(120, 8, 200, 0.5, seed).with_subjects(20),
        }
    }

    pub fn generate(self, cfg: &SynthConfig) -> Result<SynthBundle> {
        match self {
            Self::Linear => gen_single_feature_bundle(cfg, true),
            Self::Null => gen_single_feature_bundle(cfg, false),
            Self::Replica => gen_replica(cfg),
        }
    }
}

/// Per-subject brain scores of the replica's two network layers and their
/// difference.
#[derive(Debug, Clone)]
pub struct ReplicaScores {
    pub trained: Vec<ScoreMap>,
    pub random: Vec<ScoreMap>,
    /// Subjects × targets ΔR (trained − random).
    pub delta: GroupMatrix,
}

/// Aligns both layers to the scans and scores every subject.
pub fn score_replica(bundle: &SynthBundle, grid: &LambdaGrid) -> Result<ReplicaScores> {
    let find = |model: &str| {
        bundle
            .features
            .iter()
            .find(|f| f.model.as_deref() == Some(model))
            .ok_or_else(|| Error::invalid(format!("bundle has no {model} features")))
    };
    let n_scans = bundle.subjects.first().map_or(0, |(_, y)| y.n_scans());
    let trained = align_to_scans(&find("trained")?.features, TR_SECONDS, n_scans, true)?;
    let random = align_to_scans(&find("random")?.features, TR_SECONDS, n_scans, true)?;
    let plan = make_split_plan(&bundle.blocks)?;
    let opts = ScoreOptions::default();
    let mut out_t = Vec::new();
    let mut out_r = Vec::new();
    let mut rows = Vec::new();
    for (_, y) in &bundle.subjects {
        let a = brain_score(&trained, y, &plan, grid, &opts)?;
        let b = brain_score(&random, y, &plan, grid, &opts)?;
        rows.push(delta_models(&a, &b)?.delta_r);
        out_t.push(a);
        out_r.push(b);
    }
    Ok(ReplicaScores {
        trained: out_t,
        random: out_r,
        delta: GroupMatrix::from_rows(&rows)?,
    })
}
