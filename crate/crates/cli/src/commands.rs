use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;

use brainscore::contrast::{delta_models, delta_vs_baseline};
use brainscore::ctc::{ctc_greedy_decode, ctc_log_likelihood, parse_targets, CtcInstance};
use brainscore::dsp::{mel_filterbank, power_spectrogram, read_wav, resample_to_mono_16k, MelConfig, MelVariant, StftConfig};
use brainscore::encode::{brain_score, detrend_blocks, make_split_plan, LambdaGrid, ScoreMap, ScoreOptions, ScoringMode};
use brainscore::groupstats::{group_test, roi_tests, Alternative};
use brainscore::hemo::align_to_scans;
use brainscore::matrixio::{
    read_matrix, write_features, write_matrix, write_response, DatasetManifest, FeatureMatrix, FeatureRecord,
    MatrixKind, MatrixMeta, SubjectRecord,
};
use brainscore::synth::{SynthConfig, SynthPreset};

use crate::config::{Comparison, RunConfig};
use crate::error::{CliError, CliResult, Stage};
use crate::pipeline::{self, read_group, slug};

#[derive(Debug, Parser)]
#[command(name = "brainscore", version, about = "Encoding-model brain scores, contrasts and group statistics")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "BRAINSCORE_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Power spectrogram or mel filterbank features from a WAV file.
    Featurize(FeaturizeArgs),
    /// Convolve activations with the HRF and sample them at scan times.
    HrfConvolve(HrfArgs),
    /// Cross-validated ridge brain scores for one subject.
    Score(ScoreArgs),
    /// ΔR between two score files.
    Contrast(ContrastArgs),
    /// Wilcoxon tests across subjects with FDR across targets.
    GroupStats(GroupStatsArgs),
    /// CTC log-likelihood and greedy decoding of per-frame log-probabilities.
    CtcEval(CtcArgs),
    /// Write a synthetic dataset with a manifest and run config.
    Synth(SynthArgs),
    /// Run the full pipeline from a config file.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FeatureKind {
    Spectrogram,
    Mel,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "mel")]
    pub kind: FeatureKind,
    #[arg(long, default_value = "slaney")]
    pub mel_variant: String,
    #[arg(long, default_value_t = 80)]
    pub n_mels: usize,
    #[arg(long, default_value_t = 0.0)]
    pub f_min: f64,
    #[arg(long, default_value_t = 8000.0)]
    pub f_max: f64,
}

#[derive(Debug, Args)]
pub struct HrfArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Activation rate in Hz; read from the file's metadata when omitted.
    #[arg(long)]
    pub input_rate: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub tr: f64,
    #[arg(long)]
    pub n_scans: usize,
    /// Skip min-max normalization before convolution.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Comma-separated feature files, concatenated column-wise in order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub features: Vec<PathBuf>,
    #[arg(long)]
    pub response: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value = "fold_mean")]
    pub mode: String,
    #[arg(long)]
    pub detrend: bool,
    /// Skip min-max normalization when aligning features to the scans.
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long, default_value_t = 10.0)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 1e8)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 20)]
    pub n_lambdas: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ContrastMode {
    VsBaseline,
    Models,
}

#[derive(Debug, Args)]
pub struct ContrastArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "vs-baseline")]
    pub kind: ContrastMode,
}

#[derive(Debug, Args)]
pub struct GroupStatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = "greater")]
    pub alternative: String,
    #[arg(long, default_value_t = 0.05)]
    pub q: f64,
    /// Manifest whose ROIs are tested on per-subject means.
    #[arg(long)]
    pub rois: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CtcArgs {
    #[arg(long)]
    pub logprobs: PathBuf,
    /// UTF-8 file of space-separated label indices (0 is the blank).
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Treat the matrix as unnormalized scores and apply log-softmax.
    #[arg(long)]
    pub logits: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub preset: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub targets: Option<usize>,
    #[arg(long)]
    pub scans: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub blocks: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T, stage: &str) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::input(stage, format!("cannot write {}: {e}", path.display())))
}

fn parse_arg<T: std::str::FromStr<Err = brainscore::Error>>(s: &str, stage: &str) -> CliResult<T> {
    s.parse().map_err(|e: brainscore::Error| CliError::input(stage, e.to_string()))
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = RunConfig::load(&args.config)?;
            let out = cfg.output_dir.clone();
            let report = pipeline::run(cfg, cli.threads)?;
            println!(
                "wrote {} ({} subjects, {} targets, {} contrasts)",
                out.display(),
                report.n_subjects,
                report.n_targets,
                report.contrasts.len()
            );
            Ok(())
        }
        command => with_threads(cli.threads, || dispatch(command)),
    }
}

fn with_threads(threads: Option<usize>, f: impl FnOnce() -> CliResult<()> + Send) -> CliResult<()> {
    match threads {
        Some(0) => Err(CliError::input("setup", "--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::compute("setup", e.to_string()))?
            .install(f),
        None => f(),
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Featurize(a) => featurize(a),
        Command::HrfConvolve(a) => hrf_convolve(a),
        Command::Score(a) => score(a),
        Command::Contrast(a) => contrast(a),
        Command::GroupStats(a) => group_stats(a),
        Command::CtcEval(a) => ctc_eval(a),
        Command::Synth(a) => synth(a),
        Command::Run(_) => unreachable!("handled by execute"),
    }
}

fn featurize(a: FeaturizeArgs) -> CliResult<()> {
    let wave = read_wav(&a.wav).stage("featurize")?;
    let signal = resample_to_mono_16k(&wave).stage("featurize")?;
    let features = match a.kind {
        FeatureKind::Spectrogram => power_spectrogram(&signal, &StftConfig::speech_16k()).stage("featurize")?,
        FeatureKind::Mel => {
            let variant = match a.mel_variant.as_str() {
                "slaney" => MelVariant::Slaney,
                "htk" => MelVariant::Htk,
                other => return Err(CliError::input("featurize", format!("unknown mel variant {other:?}"))),
            };
            let cfg = MelConfig {
                n_mels: a.n_mels,
                f_min: a.f_min,
                f_max: a.f_max,
                mel_variant: variant,
                ..MelConfig::baseline_16k()
            };
            mel_filterbank(&signal, &cfg).stage("featurize")?
        }
    };
    write_features(&a.out, &features).stage("featurize")?;
    println!("{} frames x {} features at {} Hz", features.n_rows(), features.n_features(), features.sample_rate);
    Ok(())
}

fn hrf_convolve(a: HrfArgs) -> CliResult<()> {
    let feats = read_matrix(&a.input).stage("hrf-convolve")?.into_features(a.input_rate).stage("hrf-convolve")?;
    let feats = FeatureMatrix { sample_rate: a.input_rate.unwrap_or(feats.sample_rate), ..feats };
    let aligned = align_to_scans(&feats, a.tr, a.n_scans, !a.no_normalize).stage("hrf-convolve")?;
    write_features(&a.out, &aligned).stage("hrf-convolve")
}

#[derive(Serialize)]
struct ScoreReport {
    n_targets: usize,
    n_folds: usize,
    mode: ScoringMode,
    mean_r: f64,
    max_r: f64,
    n_undefined: usize,
    rois: BTreeMap<String, f64>,
}

fn score(a: ScoreArgs) -> CliResult<()> {
    let manifest = DatasetManifest::load(&a.manifest).stage("score")?;
    let parts: Vec<FeatureMatrix> = a
        .features
        .iter()
        .map(|p| {
            let mut f = read_matrix(p)
                .and_then(|m| m.into_features(Some(1.0 / manifest.tr_seconds)))
                .stage("score")?;
            if f.name.is_empty() {
                f.name = p.display().to_string();
            }
            // Activation-rate features are convolved down to the scan grid.
            if (f.sample_rate * manifest.tr_seconds - 1.0).abs() > 1e-9 {
                f = align_to_scans(&f, manifest.tr_seconds, manifest.n_scans, !a.no_normalize).stage("score")?;
            }
            Ok(f)
        })
        .collect::<CliResult<_>>()?;
    let refs: Vec<&FeatureMatrix> = parts.iter().collect();
    let (x, _) = brainscore::contrast::concat_features(&refs, "features").stage("score")?;
    let mut y = read_matrix(&a.response).stage("score")?.into_response().stage("score")?;
    if a.detrend {
        y = detrend_blocks(&y, &manifest.blocks).stage("score")?;
    }
    let mode = match a.mode.as_str() {
        "fold_mean" => ScoringMode::FoldMean,
        "concatenated" => ScoringMode::Concatenated,
        other => return Err(CliError::input("score", format!("unknown mode {other:?}"))),
    };
    let plan = make_split_plan(&manifest.blocks).stage("score")?;
    let grid = LambdaGrid::log_spaced(a.lambda_min, a.lambda_max, a.n_lambdas).stage("score")?;
    let s = brain_score(&x, &y, &plan, &grid, &ScoreOptions { mode }).stage("score")?;
    let mut meta = MatrixMeta::of_kind(MatrixKind::Scores);
    meta.attributes.insert("rows".into(), "r_mean,then one row per fold".into());
    write_matrix(&a.out, &s.to_matrix(), &meta).stage("score")?;
    if let Some(path) = a.report {
        let rois = manifest
            .rois
            .iter()
            .map(|(k, v)| Ok((k.clone(), brainscore::groupstats::roi_mean(&s.r_mean, v)?)))
            .collect::<brainscore::Result<_>>()
            .stage("score")?;
        let report = ScoreReport {
            n_targets: s.n_targets(),
            n_folds: s.n_folds(),
            mode,
            mean_r: s.r_mean.iter().sum::<f64>() / s.n_targets() as f64,
            max_r: s.r_mean.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            n_undefined: s.n_undefined(),
            rois,
        };
        write_json(&path, &report, "score")?;
    }
    Ok(())
}

fn read_scores(path: &Path) -> CliResult<ScoreMap> {
    let m = read_matrix(path).stage("contrast")?;
    ScoreMap::from_matrix(&m.data).stage("contrast")
}

fn contrast(a: ContrastArgs) -> CliResult<()> {
    let (sa, sb) = (read_scores(&a.a)?, read_scores(&a.b)?);
    let d = match a.kind {
        ContrastMode::VsBaseline => delta_vs_baseline(&sa, &sb),
        ContrastMode::Models => delta_models(&sa, &sb),
    }
    .map_err(|e| CliError::input("contrast", e.to_string()))?;
    let t = d.delta_r.len();
    let folds = d.delta_per_fold.as_ref().map_or(0, |m| m.nrows());
    let out = DMatrix::from_fn(1 + folds, t, |r, c| {
        if r == 0 {
            d.delta_r[c]
        } else {
            d.delta_per_fold.as_ref().unwrap()[(r - 1, c)]
        }
    });
    let mut meta = MatrixMeta::of_kind(MatrixKind::Contrast);
    meta.attributes.insert("rows".into(), "delta_r,then one row per fold".into());
    write_matrix(&a.out, &out, &meta).stage("contrast")?;
    println!("mean dR {:+.6} over {t} targets", d.mean());
    Ok(())
}

#[derive(Serialize)]
struct GroupStatsOutput {
    n_subjects: usize,
    n_targets: usize,
    n_significant: usize,
    stats: brainscore::groupstats::StatMap,
    rois: BTreeMap<String, RoiOutput>,
}

#[derive(Serialize)]
struct RoiOutput {
    mean: f64,
    statistic: f64,
    p: f64,
}

fn group_stats(a: GroupStatsArgs) -> CliResult<()> {
    let alternative: Alternative = parse_arg(&a.alternative, "group-stats")?;
    let g = read_group(&a.input)?;
    let stats = group_test(&g, alternative, a.q).map_err(|e| CliError::input("group-stats", e.to_string()))?;
    let mut rois = BTreeMap::new();
    if let Some(path) = &a.rois {
        let manifest = DatasetManifest::load(path).stage("group-stats")?;
        for (name, (mean, w)) in roi_tests(&g, &manifest.rois, alternative).stage("group-stats")? {
            rois.insert(name, RoiOutput { mean, statistic: w.statistic, p: w.p });
        }
    }
    let out = GroupStatsOutput {
        n_subjects: g.n_subjects(),
        n_targets: g.n_targets(),
        n_significant: stats.n_significant(),
        stats,
        rois,
    };
    write_json(&a.out, &out, "group-stats")?;
    println!("{} of {} targets significant at q = {}", out.n_significant, out.n_targets, a.q);
    Ok(())
}

fn ctc_eval(a: CtcArgs) -> CliResult<()> {
    let m = read_matrix(&a.logprobs).stage("ctc-eval")?.data;
    let targets = match &a.targets {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::input("ctc-eval", format!("cannot read {}: {e}", p.display())))?;
            Some(parse_targets(&text).map_err(|e| CliError::input("ctc-eval", e.to_string()))?)
        }
        None => None,
    };
    let inst = if a.logits {
        CtcInstance::from_logits(&m, targets.clone().unwrap_or_default())
    } else {
        CtcInstance::new(m, targets.clone().unwrap_or_default())
    }
    .map_err(|e| CliError::input("ctc-eval", e.to_string()))?;
    if targets.is_some() {
        let ll = ctc_log_likelihood(&inst);
        if ll == f64::NEG_INFINITY {
            println!("log_likelihood: -inf (target needs more frames than available)");
        } else {
            println!("log_likelihood: {ll}");
            println!("loss: {}", -ll);
        }
    }
    let decoded = ctc_greedy_decode(inst.log_probs());
    let text: Vec<String> = decoded.iter().map(|l| l.to_string()).collect();
    println!("decoded: {}", text.join(" "));
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let preset: SynthPreset = parse_arg(&a.preset, "synth")?;
    let mut cfg: SynthConfig = preset.config(a.seed);
    if let Some(v) = a.subjects {
        cfg.n_subjects = v;
    }
    if let Some(v) = a.targets {
        cfg.n_targets = v;
    }
    if let Some(v) = a.scans {
        cfg.n_scans = v;
        cfg.n_time_activation = brainscore::synth::frames_for_scans(v);
    }
    if let Some(v) = a.features {
        cfg.n_features = v;
    }
    if let Some(v) = a.snr {
        cfg.snr = v;
    }
    if let Some(v) = a.blocks {
        cfg.n_blocks = v;
    }
    cfg.validate().map_err(|e| CliError::input("synth", e.to_string()))?;
    let bundle = preset.generate(&cfg).stage("synth")?;

    let dir = &a.out;
    for sub in ["features", "responses"] {
        std::fs::create_dir_all(dir.join(sub)).stage("synth")?;
    }
    let mut features = Vec::new();
    for f in &bundle.features {
        let rel = format!("features/{}.fmx", slug(&f.features.name));
        write_features(dir.join(&rel), &f.features).stage("synth")?;
        features.push(FeatureRecord {
            name: f.features.name.clone(),
            path: rel.into(),
            model: f.model.clone(),
            layer_index: f.features.layer_index,
            sample_rate: Some(f.features.sample_rate),
        });
    }
    let mut subjects = Vec::new();
    for (id, y) in &bundle.subjects {
        let rel = format!("responses/{}.fmx", slug(id));
        write_response(dir.join(&rel), y).stage("synth")?;
        subjects.push(SubjectRecord { id: id.clone(), response: rel.into() });
    }
    let manifest = DatasetManifest {
        n_scans: cfg.n_scans,
        n_targets: cfg.n_targets,
        tr_seconds: brainscore::synth::TR_SECONDS,
        subjects,
        features,
        blocks: bundle.blocks.clone(),
        rois: bundle.rois.clone(),
        flattening: Some("synthetic: one column per generated feature".into()),
    };
    manifest.save(dir.join("manifest.json")).stage("synth")?;
    write_json(&dir.join("synth_config.json"), &cfg, "synth")?;

    let comparisons = match preset {
        SynthPreset::Replica => vec![Comparison {
            name: Some("trained_vs_random".into()),
            a: "layer_1".into(),
            b: "random/layer_1".into(),
        }],
        _ => Vec::new(),
    };
    let run = RunConfig {
        manifest: "manifest.json".into(),
        output_dir: "results".into(),
        threads: None,
        hierarchy: None,
        comparisons,
        hrf: Default::default(),
        encode: Default::default(),
        stats: Default::default(),
    };
    write_json(&dir.join("run.json"), &run, "synth")?;
    println!(
        "wrote {} subjects x {} targets ({} scans) to {}",
        cfg.n_subjects,
        cfg.n_targets,
        cfg.n_scans,
        dir.display()
    );
    Ok(())
}
