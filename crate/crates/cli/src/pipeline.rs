//! The `run` command: alignment, scoring, contrasts and group statistics
//! driven by a [`RunConfig`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use brainscore::contrast::{
    build_concat, delta_layerwise, delta_models, delta_vs_baseline, ConcatLevel, ContrastKind, ContrastResult,
};
use brainscore::encode::{brain_score, detrend_blocks, make_split_plan, ScoreMap, ScoreOptions};
use brainscore::groupstats::{group_test, roi_mean, wilcoxon_signed_rank, GroupMatrix, MIN_SUBJECTS};
use brainscore::hemo::align_to_scans;
use brainscore::matrixio::{read_matrix, write_matrix, DatasetManifest, FeatureMatrix, MatrixKind, MatrixMeta};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Stage};
use crate::report::{
    ContrastEntry, FeatureScoreEntry, LevelEntry, Report, RoiTest, ScoreSummary, Summary, REPORT_SCHEMA_VERSION,
};
use crate::svg::bar_chart;

pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const REPORT: &str = "report.json";
pub const TIMINGS: &str = "timings.json";

/// File-name-safe form of a feature or contrast name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

#[derive(Default, Serialize)]
struct Timings {
    stages: Vec<(String, f64)>,
}

impl Timings {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
        let start = Instant::now();
        let out = f()?;
        self.stages.push((stage.to_string(), start.elapsed().as_secs_f64()));
        Ok(out)
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::input("write", format!("cannot write {}: {e}", path.display())))
}

fn staging_path(out: &Path) -> PathBuf {
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    out.with_file_name(format!(".{name}.partial"))
}

/// Runs the whole pipeline, writing into `cfg.output_dir` only on success.
pub fn run(cfg: RunConfig, threads: Option<usize>) -> CliResult<Report> {
    let threads = threads.or(cfg.threads);
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::compute("setup", e.to_string()))?;
            pool.install(|| run_staged(cfg))
        }
        None => run_staged(cfg),
    }
}

fn run_staged(cfg: RunConfig) -> CliResult<Report> {
    let out = cfg.output_dir.clone();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).stage("setup")?;
    }
    let staging = staging_path(&out);
    if staging.exists() {
        std::fs::remove_dir_all(&staging).stage("setup")?;
    }
    std::fs::create_dir_all(&staging).stage("setup")?;
    let result = run_into(cfg, &staging).and_then(|report| {
        replace_dir(&staging, &out)?;
        Ok(report)
    });
    if result.is_err() {
        let _ = std::fs::remove_dir_all(&staging);
    }
    result
}

fn replace_dir(staging: &Path, out: &Path) -> CliResult<()> {
    if out.exists() {
        let ours = out.join(RESOLVED_CONFIG).exists()
            || std::fs::read_dir(out).map(|mut d| d.next().is_none()).unwrap_or(false);
        if !ours {
            return Err(CliError::input(
                "write",
                format!("{} exists and does not hold a previous run; refusing to replace it", out.display()),
            ));
        }
        std::fs::remove_dir_all(out).stage("write")?;
    }
    std::fs::rename(staging, out).stage("write")
}

struct Loaded {
    manifest: DatasetManifest,
    features: BTreeMap<String, FeatureMatrix>,
}

fn load(cfg: &RunConfig) -> CliResult<(RunConfig, Loaded)> {
    let manifest = DatasetManifest::load(&cfg.manifest).stage("load")?;
    let violations = manifest.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::input(
            "load",
            format!("manifest {} is invalid: {}", cfg.manifest.display(), list.join("; ")),
        ));
    }
    let resolved = cfg.clone().resolve(&manifest)?;
    let has_contrasts = resolved.hierarchy().len() > 1 || !resolved.comparisons.is_empty();
    if has_contrasts && manifest.subjects.len() < MIN_SUBJECTS {
        return Err(CliError::input(
            "load",
            format!(
                "group statistics need at least {MIN_SUBJECTS} subjects, the manifest lists {}",
                manifest.subjects.len()
            ),
        ));
    }
    let mut needed: Vec<&String> = resolved.hierarchy().iter().collect();
    for c in &resolved.comparisons {
        needed.push(&c.a);
        needed.push(&c.b);
    }
    let mut features = BTreeMap::new();
    for name in needed {
        if features.contains_key(name) {
            continue;
        }
        let rec = manifest.feature(name).expect("resolved against the manifest");
        let mut m = read_matrix(&rec.path).stage("load")?;
        if let Some(rate) = rec.sample_rate {
            m.meta.sample_rate = Some(rate);
        }
        let mut f = m.into_features(None).stage("load").map_err(|mut e| {
            e.message = format!("{}: {}", rec.path.display(), e.message);
            e
        })?;
        f.name = rec.name.clone();
        if rec.layer_index.is_some() {
            f.layer_index = rec.layer_index;
        }
        features.insert(name.clone(), f);
    }
    Ok((resolved, Loaded { manifest, features }))
}

fn align(loaded: &mut Loaded, normalize: bool) -> CliResult<()> {
    let m = &loaded.manifest;
    let scan_rate = 1.0 / m.tr_seconds;
    for f in loaded.features.values_mut() {
        if (f.sample_rate - scan_rate).abs() <= 1e-9 * scan_rate {
            if f.n_rows() != m.n_scans {
                return Err(CliError::input(
                    "align",
                    format!("{:?} is at the scan rate but has {} rows, not {}", f.name, f.n_rows(), m.n_scans),
                ));
            }
            continue;
        }
        let aligned = align_to_scans(f, m.tr_seconds, m.n_scans, normalize)
            .stage("align")
            .map_err(|mut e| {
                e.message = format!("{:?}: {}", f.name, e.message);
                e
            })?;
        *f = aligned;
    }
    Ok(())
}

/// Per-subject score maps for each scored feature set.
struct Scores {
    subjects: Vec<String>,
    levels: Vec<Vec<ScoreMap>>,
    singles: BTreeMap<String, Vec<ScoreMap>>,
    level_members: Vec<Vec<String>>,
    n_folds: usize,
}

fn score_all(cfg: &RunConfig, loaded: &Loaded) -> CliResult<Scores> {
    let m = &loaded.manifest;
    let plan = make_split_plan(&m.blocks).stage("score")?;
    let grid = cfg.encode.grid().stage("score")?;
    let opts = ScoreOptions { mode: cfg.encode.mode };
    let all: Vec<FeatureMatrix> = loaded.features.values().cloned().collect();
    let levels = ConcatLevel::hierarchy(cfg.hierarchy()).stage("score")?;
    let level_x: Vec<FeatureMatrix> = levels
        .iter()
        .map(|l| build_concat(l, &all).map(|(x, _)| x))
        .collect::<brainscore::Result<_>>()
        .stage("score")?;
    let single_names: Vec<String> = {
        let mut v: Vec<String> = cfg.comparisons.iter().flat_map(|c| [c.a.clone(), c.b.clone()]).collect();
        v.sort();
        v.dedup();
        v
    };

    let mut out = Scores {
        subjects: Vec::new(),
        levels: vec![Vec::new(); levels.len()],
        singles: single_names.iter().map(|n| (n.clone(), Vec::new())).collect(),
        level_members: levels.iter().map(|l| l.members.clone()).collect(),
        n_folds: plan.n_folds(),
    };
    for subject in &m.subjects {
        let mut y = read_matrix(&subject.response).stage("load")?.into_response().stage("load")?;
        if y.n_scans() != m.n_scans || y.n_targets() != m.n_targets {
            return Err(CliError::input(
                "load",
                format!(
                    "{}: response is {}x{}, manifest declares {}x{}",
                    subject.response.display(),
                    y.n_scans(),
                    y.n_targets(),
                    m.n_scans,
                    m.n_targets
                ),
            ));
        }
        if (y.tr_seconds - m.tr_seconds).abs() > 1e-9 {
            return Err(CliError::input(
                "load",
                format!("{}: TR {} s differs from the manifest's {} s", subject.response.display(), y.tr_seconds, m.tr_seconds),
            ));
        }
        if cfg.encode.detrend {
            y = detrend_blocks(&y, &m.blocks).stage("score")?;
        }
        for (l, x) in level_x.iter().enumerate() {
            let s = brain_score(x, &y, &plan, &grid, &opts).stage("score")?;
            out.levels[l].push(s);
        }
        for name in &single_names {
            let s = brain_score(&loaded.features[name], &y, &plan, &grid, &opts).stage("score")?;
            out.singles.get_mut(name).unwrap().push(s);
        }
        out.subjects.push(subject.id.clone());
    }
    Ok(out)
}

struct NamedContrast {
    name: String,
    kind: ContrastKind,
    a: String,
    b: String,
    per_subject: Vec<ContrastResult>,
}

fn contrasts(cfg: &RunConfig, scores: &Scores) -> CliResult<Vec<NamedContrast>> {
    let n_levels = scores.levels.len();
    let n_subj = scores.subjects.len();
    let mut out = Vec::new();
    if n_levels >= 2 {
        let last = n_levels - 1;
        let per_subject = (0..n_subj)
            .map(|s| delta_vs_baseline(&scores.levels[last][s], &scores.levels[0][s]))
            .collect::<brainscore::Result<Vec<_>>>()
            .stage("contrast")?;
        out.push(NamedContrast {
            name: "full_vs_baseline".into(),
            kind: ContrastKind::VsBaseline,
            a: format!("level_{last}"),
            b: "level_0".into(),
            per_subject,
        });
        let mut layerwise: Vec<Vec<ContrastResult>> = vec![Vec::new(); last];
        for s in 0..n_subj {
            let maps: Vec<Option<ScoreMap>> = scores.levels.iter().map(|l| Some(l[s].clone())).collect();
            for (l, r) in delta_layerwise(&maps).stage("contrast")?.into_iter().enumerate() {
                layerwise[l].push(r);
            }
        }
        for (l, per_subject) in layerwise.into_iter().enumerate() {
            out.push(NamedContrast {
                name: format!("layer_{}", l + 1),
                kind: ContrastKind::Layerwise,
                a: format!("level_{}", l + 1),
                b: format!("level_{l}"),
                per_subject,
            });
        }
    }
    for c in &cfg.comparisons {
        let per_subject = (0..n_subj)
            .map(|s| delta_models(&scores.singles[&c.a][s], &scores.singles[&c.b][s]))
            .collect::<brainscore::Result<Vec<_>>>()
            .stage("contrast")?;
        out.push(NamedContrast {
            name: c.label(),
            kind: ContrastKind::ModelVsModel,
            a: c.a.clone(),
            b: c.b.clone(),
            per_subject,
        });
    }
    Ok(out)
}

fn group_of(maps: &[ScoreMap]) -> brainscore::Result<GroupMatrix> {
    GroupMatrix::from_rows(&maps.iter().map(|m| m.r_mean.clone()).collect::<Vec<_>>())
}

fn column_means(g: &GroupMatrix) -> Vec<f64> {
    (0..g.n_targets()).map(|j| g.values.column(j).mean()).collect()
}

fn summarize(g: &GroupMatrix, maps: &[ScoreMap], rois: &BTreeMap<String, Vec<usize>>) -> CliResult<ScoreSummary> {
    let avg = column_means(g);
    let summary = |idx: &[usize]| -> brainscore::Result<Summary> {
        Ok(Summary {
            mean: roi_mean(&avg, idx)?,
            max: idx.iter().map(|&i| avg[i]).fold(f64::NEG_INFINITY, f64::max),
        })
    };
    let all: Vec<usize> = (0..avg.len()).collect();
    Ok(ScoreSummary {
        all: summary(&all).stage("stats")?,
        rois: rois
            .iter()
            .map(|(k, v)| Ok((k.clone(), summary(v)?)))
            .collect::<brainscore::Result<_>>()
            .stage("stats")?,
        undefined_targets: maps.iter().map(|m| m.n_undefined()).sum(),
    })
}

fn roi_test(per_subject: &[f64], cfg: &RunConfig) -> CliResult<RoiTest> {
    let w = wilcoxon_signed_rank(per_subject, cfg.stats.alternative).stage("stats")?;
    Ok(RoiTest {
        mean: per_subject.iter().sum::<f64>() / per_subject.len() as f64,
        statistic: w.statistic,
        p: w.p,
    })
}

fn group_meta(subjects: &[String], kind: MatrixKind, name: &str) -> MatrixMeta {
    let mut meta = MatrixMeta::of_kind(kind);
    meta.name = Some(name.to_string());
    meta.attributes.insert("rows".into(), subjects.join(","));
    meta
}

fn run_into(cfg: RunConfig, dir: &Path) -> CliResult<Report> {
    let mut timings = Timings::default();
    let (cfg, mut loaded) = timings.time("load", || load(&cfg))?;
    write_text(&dir.join(RESOLVED_CONFIG), &to_json(&cfg))?;
    timings.time("align", || align(&mut loaded, cfg.hrf.normalize))?;
    let scores = timings.time("score", || score_all(&cfg, &loaded))?;
    let contrasts = timings.time("contrast", || contrasts(&cfg, &scores))?;
    let rois = &loaded.manifest.rois;
    let subjects = &scores.subjects;

    let report = timings.time("stats", || {
        for sub in ["scores", "contrasts", "stats"] {
            std::fs::create_dir_all(dir.join(sub)).stage("write")?;
        }
        let mut levels = Vec::new();
        for (l, maps) in scores.levels.iter().enumerate() {
            let g = group_of(maps).stage("stats")?;
            let name = format!("level_{l}");
            write_matrix(dir.join(format!("scores/{name}.fmx")), &g.values, &group_meta(subjects, MatrixKind::Group, &name))
                .stage("write")?;
            levels.push(LevelEntry {
                level: l,
                members: scores.level_members[l].clone(),
                scores: summarize(&g, maps, rois)?,
            });
        }
        let mut feature_scores = Vec::new();
        for (name, maps) in &scores.singles {
            let g = group_of(maps).stage("stats")?;
            write_matrix(
                dir.join(format!("scores/feature_{}.fmx", slug(name))),
                &g.values,
                &group_meta(subjects, MatrixKind::Group, name),
            )
            .stage("write")?;
            feature_scores.push(FeatureScoreEntry {
                feature: name.clone(),
                scores: summarize(&g, maps, rois)?,
            });
        }
        let mut entries = Vec::new();
        for c in &contrasts {
            let rows: Vec<Vec<f64>> = c.per_subject.iter().map(|r| r.delta_r.clone()).collect();
            let g = GroupMatrix::from_rows(&rows).stage("stats")?;
            let file = slug(&c.name);
            write_matrix(dir.join(format!("contrasts/{file}.fmx")), &g.values, &group_meta(subjects, MatrixKind::Contrast, &c.name))
                .stage("write")?;
            let stats = group_test(&g, cfg.stats.alternative, cfg.stats.q).stage("stats")?;
            let stats_file = format!("stats/{file}.json");
            write_text(&dir.join(&stats_file), &to_json(&stats))?;
            let avg = column_means(&g);
            let global: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
            let mut roi_entries = BTreeMap::new();
            for (name, idx) in rois {
                roi_entries.insert(name.clone(), roi_test(&g.roi_means(idx).stage("stats")?, &cfg)?);
            }
            entries.push(ContrastEntry {
                name: c.name.clone(),
                kind: c.kind,
                a: c.a.clone(),
                b: c.b.clone(),
                mean_delta: avg.iter().sum::<f64>() / avg.len() as f64,
                max_delta: avg.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                n_significant: stats.n_significant(),
                q: cfg.stats.q,
                alternative: cfg.stats.alternative,
                global: roi_test(&global, &cfg)?,
                rois: roi_entries,
                stats_file,
            });
        }
        Ok(Report {
            schema_version: REPORT_SCHEMA_VERSION,
            n_subjects: subjects.len(),
            n_scans: loaded.manifest.n_scans,
            n_targets: loaded.manifest.n_targets,
            n_folds: scores.n_folds,
            levels,
            feature_scores,
            contrasts: entries,
        })
    })?;

    timings.time("write", || {
        write_text(&dir.join(REPORT), &to_json(&report))?;
        write_charts(dir, &report, cfg.stats.q)
    })?;
    write_text(&dir.join(TIMINGS), &to_json(&timings))?;
    Ok(report)
}

fn write_charts(dir: &Path, report: &Report, q: f64) -> CliResult<()> {
    let chart = |kind: ContrastKind, title: &str, file: &str, label: &dyn Fn(&ContrastEntry) -> String| {
        let rows: Vec<&ContrastEntry> = report.contrasts.iter().filter(|c| c.kind == kind).collect();
        if rows.is_empty() {
            return Ok(());
        }
        let labels: Vec<String> = rows.iter().map(|c| label(c)).collect();
        let values: Vec<f64> = rows.iter().map(|c| c.mean_delta).collect();
        let marked: Vec<bool> = rows.iter().map(|c| c.global.p <= q).collect();
        write_text(&dir.join(file), &bar_chart(title, "mean ΔR", &labels, &values, &marked))
    };
    chart(ContrastKind::Layerwise, "ΔR per concatenation level", "delta_layerwise.svg", &|c| {
        c.a.replace("level_", "L")
    })?;
    chart(ContrastKind::ModelVsModel, "ΔR between models", "delta_models.svg", &|c| c.name.clone())
}

/// A subjects × targets matrix as stored by the pipeline.
pub fn read_group(path: &Path) -> CliResult<GroupMatrix> {
    let m = read_matrix(path).stage("load")?;
    GroupMatrix::new(m.data).stage("load")
}
