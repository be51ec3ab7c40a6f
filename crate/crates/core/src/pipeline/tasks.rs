//! The six task runners. Each returns its results in memory; `write_*`
//! functions persist them under the configured output directory.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::ClassId;
use crate::dispersion::{DispersionMetrics, FrequencyHistogram};
use crate::embedding::{zero_shot_classify, Classification, EmbeddingVector, PredictionRecord};
use crate::error::{Error, Result};
use crate::masking::{
    apply_feature_mask, apply_isolation_mask, mask_random_pixels, mask_random_shapes, ImageFrame,
    MaskSpec, MaskStrategy, SegmentationMask, ShapeMaskConfig, DEFAULT_MAX_SHAPE_FRACTION,
};
use crate::noise::{
    noise_aware_classify, train_noise_dictionary, FeatureStore, NoiseDictionary, TripletConfig,
};
use crate::rng::derive_seed;

use super::config::{FeatureMode, RunConfig, Task};
use super::manifest::{Dataset, FrameEntry, KEEP_MASK};
use super::provider::EmbeddingProvider;
use super::report::{to_value, write_json, RunMetadata, SimilarityRow, TaskReport};
use super::split::{split_frames, Split};

pub const BASELINE_TAG: &str = "baseline";
pub const ISOLATION_TAG: &str = "isolation";
pub const ALL_FEATURES_TAG: &str = "features:all";
pub const WITHOUT_NOISE_TAG: &str = "without_noise";
pub const WITH_NOISE_TAG: &str = "with_noise";

/// Report tag for a random-masking fraction, e.g. `p30` for 0.3.
pub fn fraction_tag(p: f64) -> String {
    format!("p{}", (p * 100.0).round() as i64)
}

pub fn feature_tag(name: &str) -> String {
    format!("feature:{name}")
}

type Provider<'p> = Option<&'p mut dyn EmbeddingProvider>;
type Candidates = Vec<(ClassId, EmbeddingVector)>;

/// Frames whose class is among the candidates, in manifest order.
fn frames_in_scope<'a>(
    ds: &'a Dataset,
    candidates: &[(ClassId, EmbeddingVector)],
) -> Vec<&'a FrameEntry> {
    let allowed: BTreeSet<ClassId> = candidates.iter().map(|(c, _)| *c).collect();
    ds.frames()
        .iter()
        .filter(|f| allowed.contains(&f.class))
        .collect()
}

fn classify_frames(
    inputs: &[(&FrameEntry, EmbeddingVector)],
    tag: &str,
    classify: impl Fn(&EmbeddingVector) -> Result<Classification> + Sync,
) -> Result<(Vec<PredictionRecord>, Vec<SimilarityRow>)> {
    let out = inputs
        .par_iter()
        .map(|(frame, emb)| {
            let c = classify(emb)?;
            Ok((
                PredictionRecord {
                    frame_id: frame.id.clone(),
                    ground_truth: frame.class,
                    predicted: c.predicted,
                    confidence: c.confidence,
                    perturbation_tag: tag.to_string(),
                },
                SimilarityRow {
                    frame_id: frame.id.clone(),
                    similarities: c.similarities,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out.into_iter().unzip())
}

fn zero_shot_report(
    tag: &str,
    mask: Option<MaskSpec>,
    inputs: &[(&FrameEntry, EmbeddingVector)],
    candidates: &[(ClassId, EmbeddingVector)],
    cfg: &RunConfig,
) -> Result<TaskReport> {
    if inputs.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let (records, sims) = classify_frames(inputs, tag, |e| {
        zero_shot_classify(e, candidates, &cfg.classifier)
    })?;
    TaskReport::from_records(tag, mask, records, sims)
}

fn load_image(ds: &Dataset, frame: &FrameEntry) -> Result<ImageFrame> {
    let rel = frame.image.as_ref().ok_or_else(|| {
        Error::Manifest(format!("frame {:?} needs an image for masking", frame.id))
    })?;
    ImageFrame::load_png(&ds.resolve(rel))
}

fn load_mask(ds: &Dataset, rel: &Path) -> Result<SegmentationMask> {
    SegmentationMask::load_png(&ds.resolve(rel))
}

/// Embeddings of `frames` under `tag`: precomputed ones from the manifest
/// take precedence, otherwise `perturb` renders each frame for the provider.
fn obtain_embeddings<'a>(
    ds: &Dataset,
    tag: &str,
    frames: &[&'a FrameEntry],
    provider: &mut Provider<'_>,
    perturb: impl Fn(&FrameEntry) -> Result<ImageFrame> + Sync,
) -> Result<Vec<(&'a FrameEntry, EmbeddingVector)>> {
    if let Some(map) = ds.perturbed(tag)? {
        return take_all(frames, &map);
    }
    let Some(provider) = provider.as_deref_mut() else {
        return Err(Error::Config(format!(
            "no precomputed embeddings for {tag:?} and no embedding provider configured"
        )));
    };
    let rendered = frames
        .par_iter()
        .map(|f| Ok((f.id.clone(), perturb(f)?)))
        .collect::<Result<Vec<_>>>()?;
    let map = provider.embed(tag, &rendered)?;
    for v in map.values() {
        crate::embedding::check_dims(ds.dim, v.dim())?;
    }
    take_all(frames, &map)
}

fn take_all<'a>(
    frames: &[&'a FrameEntry],
    map: &HashMap<String, EmbeddingVector>,
) -> Result<Vec<(&'a FrameEntry, EmbeddingVector)>> {
    let missing: Vec<String> = frames
        .iter()
        .filter(|f| !map.contains_key(&f.id))
        .map(|f| f.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings(missing));
    }
    Ok(frames.iter().map(|f| (*f, map[&f.id].clone())).collect())
}

/// Unperturbed embeddings: the manifest's, or the provider's for frames that
/// only have an image.
fn baseline_embeddings<'a>(
    ds: &Dataset,
    frames: &[&'a FrameEntry],
    provider: &mut Provider<'_>,
) -> Result<Vec<(&'a FrameEntry, EmbeddingVector)>> {
    let lacking: Vec<&FrameEntry> = frames
        .iter()
        .copied()
        .filter(|f| !ds.frame_embeddings.contains_key(&f.id))
        .collect();
    let mut extra = HashMap::new();
    if !lacking.is_empty() {
        let no_image: Vec<String> = lacking
            .iter()
            .filter(|f| f.image.is_none())
            .map(|f| f.id.clone())
            .collect();
        if !no_image.is_empty() || provider.is_none() {
            return Err(Error::MissingEmbeddings(
                lacking.iter().map(|f| f.id.clone()).collect(),
            ));
        }
        extra = obtain_embeddings(ds, BASELINE_TAG, &lacking, provider, |f| load_image(ds, f))?
            .into_iter()
            .map(|(f, v)| (f.id.clone(), v))
            .collect();
    }
    Ok(frames
        .iter()
        .map(|f| {
            let v = ds
                .frame_embeddings
                .get(&f.id)
                .or_else(|| extra.get(&f.id))
                .expect("every frame resolved above")
                .clone();
            (*f, v)
        })
        .collect())
}

fn prepare<'a>(
    ds: &'a Dataset,
    cfg: &RunConfig,
    task: Task,
) -> Result<(Candidates, Vec<&'a FrameEntry>)> {
    cfg.validate_for(task)?;
    let candidates = ds.candidates(cfg.labels.as_deref())?;
    let frames = frames_in_scope(ds, &candidates);
    if frames.is_empty() {
        return Err(Error::EmptyRecords);
    }
    Ok((candidates, frames))
}

pub fn run_task1(ds: &Dataset, cfg: &RunConfig, mut provider: Provider<'_>) -> Result<TaskReport> {
    let (candidates, frames) = prepare(ds, cfg, Task::Task1)?;
    let inputs = baseline_embeddings(ds, &frames, &mut provider)?;
    zero_shot_report(BASELINE_TAG, None, &inputs, &candidates, cfg)
}

/// One report per masking fraction, in the configured order.
pub fn run_task2(
    ds: &Dataset,
    cfg: &RunConfig,
    mut provider: Provider<'_>,
) -> Result<Vec<TaskReport>> {
    let (candidates, frames) = prepare(ds, cfg, Task::Task2)?;
    let strategy = cfg.random_strategy();
    let seed = cfg.mask_seed();
    let shape_cfg = ShapeMaskConfig {
        max_shape_fraction: cfg
            .mask
            .as_ref()
            .and_then(|m| m.max_shape_fraction)
            .unwrap_or(DEFAULT_MAX_SHAPE_FRACTION),
    };
    let mut reports = Vec::with_capacity(cfg.fractions.len());
    for &p in &cfg.fractions {
        let tag = fraction_tag(p);
        let mut spec = MaskSpec::random(strategy, p, seed);
        if strategy == MaskStrategy::RandomShape {
            spec.max_shape_fraction = Some(shape_cfg.max_shape_fraction);
        }
        spec.validate()?;
        let achieved = std::sync::Mutex::new(BTreeMap::new());
        let inputs = obtain_embeddings(ds, &tag, &frames, &mut provider, |f| {
            let img = load_image(ds, f)?;
            let frame_seed = derive_seed(seed, &f.id);
            match strategy {
                MaskStrategy::RandomShape => {
                    let (out, q) = mask_random_shapes(&img, p, frame_seed, &shape_cfg)?;
                    achieved
                        .lock()
                        .expect("not poisoned")
                        .insert(f.id.clone(), q);
                    Ok(out)
                }
                _ => mask_random_pixels(&img, p, frame_seed),
            }
        })?;
        log::info!("{tag}: classifying {} frames", inputs.len());
        let mut report = zero_shot_report(&tag, Some(spec), &inputs, &candidates, cfg)?;
        report.black_fractions = achieved.into_inner().expect("not poisoned");
        reports.push(report);
    }
    Ok(reports)
}

/// Feature masking. One-at-a-time yields a report per mask name (over the
/// frames that have it); all-together yields one report masking the union
/// of each frame's feature masks.
pub fn run_task3(
    ds: &Dataset,
    cfg: &RunConfig,
    mut provider: Provider<'_>,
) -> Result<Vec<TaskReport>> {
    let (candidates, frames) = prepare(ds, cfg, Task::Task3)?;
    let mode = cfg.feature_mode.expect("validated");
    let mut jobs: Vec<(String, Vec<String>, Vec<&FrameEntry>)> = Vec::new();
    match mode {
        FeatureMode::OneAtATime => {
            let names: BTreeSet<&str> = frames
                .iter()
                .flat_map(|f| f.feature_masks().map(|(n, _)| n))
                .collect();
            for name in names {
                let subset: Vec<&FrameEntry> = frames
                    .iter()
                    .copied()
                    .filter(|f| f.masks.contains_key(name))
                    .collect();
                jobs.push((feature_tag(name), vec![name.to_string()], subset));
            }
        }
        FeatureMode::AllTogether => {
            let subset: Vec<&FrameEntry> = frames
                .iter()
                .copied()
                .filter(|f| f.feature_masks().next().is_some())
                .collect();
            let names: BTreeSet<String> = subset
                .iter()
                .flat_map(|f| f.feature_masks().map(|(n, _)| n.to_string()))
                .collect();
            if !subset.is_empty() {
                jobs.push((
                    ALL_FEATURES_TAG.to_string(),
                    names.into_iter().collect(),
                    subset,
                ));
            }
        }
    }
    if jobs.is_empty() {
        return Err(Error::Manifest("no frame has a feature mask".into()));
    }
    let mut reports = Vec::with_capacity(jobs.len());
    for (tag, names, subset) in jobs {
        let spec = MaskSpec {
            strategy: MaskStrategy::Feature,
            fraction: None,
            mask_refs: names.clone(),
            seed: None,
            max_shape_fraction: None,
        };
        let inputs = obtain_embeddings(ds, &tag, &subset, &mut provider, |f| {
            let img = load_image(ds, f)?;
            let masks = f
                .feature_masks()
                .filter(|(n, _)| names.iter().any(|m| m == n))
                .map(|(_, p)| load_mask(ds, p))
                .collect::<Result<Vec<_>>>()?;
            apply_feature_mask(&img, &masks)
        })?;
        reports.push(zero_shot_report(
            &tag,
            Some(spec),
            &inputs,
            &candidates,
            cfg,
        )?);
    }
    Ok(reports)
}

/// Isolation: everything outside each frame's `keep` mask is blackened.
pub fn run_task4(ds: &Dataset, cfg: &RunConfig, mut provider: Provider<'_>) -> Result<TaskReport> {
    let (candidates, frames) = prepare(ds, cfg, Task::Task4)?;
    let subset: Vec<&FrameEntry> = frames
        .into_iter()
        .filter(|f| f.masks.contains_key(KEEP_MASK))
        .collect();
    if subset.is_empty() {
        return Err(Error::Manifest(format!(
            "no frame has a {KEEP_MASK:?} mask"
        )));
    }
    let spec = MaskSpec {
        strategy: MaskStrategy::Isolation,
        fraction: None,
        mask_refs: vec![KEEP_MASK.to_string()],
        seed: None,
        max_shape_fraction: None,
    };
    let inputs = obtain_embeddings(ds, ISOLATION_TAG, &subset, &mut provider, |f| {
        let img = load_image(ds, f)?;
        apply_isolation_mask(&img, &load_mask(ds, &f.masks[KEEP_MASK])?)
    })?;
    zero_shot_report(ISOLATION_TAG, Some(spec), &inputs, &candidates, cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub dictionary: NoiseDictionary,
    pub loss_trace: Vec<f64>,
    pub triplet: TripletConfig,
    pub split: Split,
    pub split_seed: u64,
    pub eval_fraction: f64,
    /// Zero-shot results on the train split (source of hard negatives).
    pub baseline: TaskReport,
}

pub const SPLIT_SEED_KEY: &str = "split_seed";
pub const EVAL_FRACTION_KEY: &str = "eval_fraction";

fn split_for(frames: &[&FrameEntry], eval_fraction: f64, seed: u64) -> Result<Split> {
    split_frames(
        frames.iter().map(|f| (f.id.as_str(), f.class)),
        eval_fraction,
        seed,
    )
}

fn select<'a>(
    inputs: &[(&'a FrameEntry, EmbeddingVector)],
    ids: &[String],
) -> Vec<(&'a FrameEntry, EmbeddingVector)> {
    let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    inputs
        .iter()
        .filter(|(f, _)| wanted.contains(f.id.as_str()))
        .cloned()
        .collect()
}

/// Learns the noise dictionary on the train split of the in-scope frames.
pub fn run_task5_train(
    ds: &Dataset,
    cfg: &RunConfig,
    mut provider: Provider<'_>,
) -> Result<TrainOutcome> {
    let (candidates, frames) = prepare(ds, cfg, Task::Task5Train)?;
    let triplet = cfg.triplet_config();
    let split = split_for(&frames, cfg.eval_fraction, cfg.seed)?;
    let inputs = baseline_embeddings(ds, &frames, &mut provider)?;
    let train = select(&inputs, &split.train);

    let baseline = zero_shot_report(BASELINE_TAG, None, &train, &candidates, cfg)?;
    let store = FeatureStore::from_pairs(train.iter().map(|(f, v)| (f.class, v.clone())))?;
    let confusions = cfg.hard_negatives.then(|| baseline.histogram_map());
    log::info!(
        "training noise for {} classes on {} frames ({} held out)",
        store.classes().count(),
        train.len(),
        split.eval.len()
    );
    let (dictionary, loss_trace) = train_noise_dictionary(&store, &triplet, confusions.as_ref())?;
    Ok(TrainOutcome {
        dictionary,
        loss_trace,
        triplet,
        split,
        split_seed: cfg.seed,
        eval_fraction: cfg.eval_fraction,
        baseline,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub ground_truth: ClassId,
    pub without: DispersionMetrics,
    pub with: DispersionMetrics,
    pub distinct_labels_delta: i64,
    pub dominant_fraction_delta: f64,
    pub entropy_delta: f64,
}

impl MetricDelta {
    pub fn new(without: &DispersionMetrics, with: &DispersionMetrics) -> Self {
        Self {
            ground_truth: without.ground_truth,
            without: without.clone(),
            with: with.clone(),
            distinct_labels_delta: with.distinct_labels as i64 - without.distinct_labels as i64,
            dominant_fraction_delta: with.dominant_fraction - without.dominant_fraction,
            entropy_delta: with.entropy_bits - without.entropy_bits,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub without: TaskReport,
    pub with: TaskReport,
    pub deltas: Vec<MetricDelta>,
    pub split_seed: u64,
    pub eval_fraction: f64,
}

/// Held-out comparison of plain zero-shot against noise-aware classification.
///
/// The split is rebuilt from the seed and fraction recorded in the
/// dictionary when present, so evaluation frames never overlap training.
pub fn run_task5_eval(
    ds: &Dataset,
    cfg: &RunConfig,
    dictionary: &NoiseDictionary,
    header: &[(String, String)],
    mut provider: Provider<'_>,
) -> Result<EvalReport> {
    let (candidates, frames) = prepare(ds, cfg, Task::Task5Eval)?;
    crate::embedding::check_dims(ds.dim, dictionary.dim())?;
    for (c, _) in &candidates {
        if dictionary.get(*c).is_none() {
            return Err(Error::MissingNoise(*c));
        }
    }
    let lookup = |key: &str| {
        header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    };
    let split_seed = match lookup(SPLIT_SEED_KEY) {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("bad {SPLIT_SEED_KEY} in dictionary: {v:?}")))?,
        None => cfg.seed,
    };
    let eval_fraction = match lookup(EVAL_FRACTION_KEY) {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("bad {EVAL_FRACTION_KEY} in dictionary: {v:?}")))?,
        None => cfg.eval_fraction,
    };
    if split_seed != cfg.seed || eval_fraction != cfg.eval_fraction {
        log::warn!(
            "using the split recorded in the dictionary (seed {split_seed}, eval fraction {eval_fraction})"
        );
    }
    let split = split_for(&frames, eval_fraction, split_seed)?;
    if split.eval.is_empty() {
        return Err(Error::Config("the evaluation split is empty".into()));
    }
    let eval_frames: Vec<&FrameEntry> = frames
        .iter()
        .copied()
        .filter(|f| split.eval.binary_search(&f.id).is_ok())
        .collect();
    let inputs = baseline_embeddings(ds, &eval_frames, &mut provider)?;

    let without = zero_shot_report(WITHOUT_NOISE_TAG, None, &inputs, &candidates, cfg)?;
    let (records, sims) = classify_frames(&inputs, WITH_NOISE_TAG, |e| {
        noise_aware_classify(e, &candidates, dictionary, &cfg.classifier)
    })?;
    let with = TaskReport::from_records(WITH_NOISE_TAG, None, records, sims)?;
    let deltas = without
        .metrics
        .iter()
        .zip(&with.metrics)
        .map(|(a, b)| MetricDelta::new(a, b))
        .collect();
    Ok(EvalReport {
        without,
        with,
        deltas,
        split_seed,
        eval_fraction,
    })
}

pub fn run_metadata(ds: &Dataset, cfg: &RunConfig, task: Task) -> Result<RunMetadata> {
    Ok(RunMetadata {
        task: task.as_str().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        prompt_template: ds.manifest.prompt_template.clone(),
        candidates: ds
            .candidates(cfg.labels.as_deref())?
            .into_iter()
            .map(|(c, _)| c)
            .collect(),
        digests: ds.digests.clone(),
        extra: BTreeMap::new(),
    })
}

/// Writes each report to `<out>/<tag dir>/`.
pub fn write_reports(
    ds: &Dataset,
    cfg: &RunConfig,
    task: Task,
    reports: &[TaskReport],
) -> Result<()> {
    let meta = run_metadata(ds, cfg, task)?;
    for r in reports {
        r.write(&cfg.out.join(r.dir_name()), &ds.catalog, &meta)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    metadata: RunMetadata,
    triplet: &'a TripletConfig,
    loss_trace: &'a [f64],
    train_frames: &'a [String],
    eval_frames: &'a [String],
    baseline_metrics: &'a [DispersionMetrics],
    baseline_histograms: &'a [FrequencyHistogram],
}

/// `noise.emb` (+ `.ids`), `train_report.json` and the train-split baseline.
pub fn write_train_outcome(ds: &Dataset, cfg: &RunConfig, outcome: &TrainOutcome) -> Result<()> {
    let mut table = outcome.dictionary.to_table(Some(&outcome.triplet))?;
    table
        .header
        .push((SPLIT_SEED_KEY.into(), outcome.split_seed.to_string()));
    table
        .header
        .push((EVAL_FRACTION_KEY.into(), outcome.eval_fraction.to_string()));
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    table.write(&cfg.out.join("noise.emb"))?;

    let meta = run_metadata(ds, cfg, Task::Task5Train)?;
    write_json(
        &cfg.out.join("train_report.json"),
        &TrainSummary {
            metadata: meta.clone(),
            triplet: &outcome.triplet,
            loss_trace: &outcome.loss_trace,
            train_frames: &outcome.split.train,
            eval_frames: &outcome.split.eval,
            baseline_metrics: &outcome.baseline.metrics,
            baseline_histograms: &outcome.baseline.histograms,
        },
    )?;
    outcome
        .baseline
        .write(&cfg.out.join("train_baseline"), &ds.catalog, &meta)
}

/// `eval/without_noise/`, `eval/with_noise/` and `eval/report.json`.
pub fn write_eval_report(ds: &Dataset, cfg: &RunConfig, report: &EvalReport) -> Result<()> {
    let meta = run_metadata(ds, cfg, Task::Task5Eval)?
        .with(SPLIT_SEED_KEY, report.split_seed)?
        .with(EVAL_FRACTION_KEY, report.eval_fraction)?;
    let eval = cfg.out.join("eval");
    for r in [&report.without, &report.with] {
        r.write(&eval.join(r.dir_name()), &ds.catalog, &meta)?;
    }
    let doc = serde_json::json!({
        "metadata": to_value(&meta)?,
        "without": {
            "histograms": to_value(&report.without.histograms)?,
            "metrics": to_value(&report.without.metrics)?,
        },
        "with": {
            "histograms": to_value(&report.with.histograms)?,
            "metrics": to_value(&report.with.metrics)?,
        },
        "deltas": to_value(&report.deltas)?,
    });
    write_json(&eval.join("report.json"), &doc)
}

/// Runs `task` and writes its outputs; returns a one-line summary per report.
pub fn execute(
    task: Task,
    ds: &Dataset,
    cfg: &RunConfig,
    provider: Provider<'_>,
) -> Result<Vec<String>> {
    let summarize = |r: &TaskReport| {
        let n = r.records.len();
        let mean_distinct = r
            .metrics
            .iter()
            .map(|m| m.distinct_labels as f64)
            .sum::<f64>()
            / r.metrics.len() as f64;
        format!(
            "{}: {n} frames, {} classes, mean distinct labels {mean_distinct:.2}",
            r.tag,
            r.metrics.len()
        )
    };
    match task {
        Task::Task1 => {
            let r = run_task1(ds, cfg, provider)?;
            write_reports(ds, cfg, task, std::slice::from_ref(&r))?;
            Ok(vec![summarize(&r)])
        }
        Task::Task2 | Task::Task3 => {
            let rs = if task == Task::Task2 {
                run_task2(ds, cfg, provider)?
            } else {
                run_task3(ds, cfg, provider)?
            };
            write_reports(ds, cfg, task, &rs)?;
            Ok(rs.iter().map(summarize).collect())
        }
        Task::Task4 => {
            let r = run_task4(ds, cfg, provider)?;
            write_reports(ds, cfg, task, std::slice::from_ref(&r))?;
            Ok(vec![summarize(&r)])
        }
        Task::Task5Train => {
            let o = run_task5_train(ds, cfg, provider)?;
            write_train_outcome(ds, cfg, &o)?;
            Ok(vec![format!(
                "trained {} noise vectors over {} epochs; final mean loss {:.6}",
                o.dictionary.len(),
                o.loss_trace.len(),
                o.loss_trace.last().copied().unwrap_or(0.0)
            )])
        }
        Task::Task5Eval => {
            let path = cfg.dictionary.as_ref().expect("validated");
            let (dict, header) = NoiseDictionary::load(path)?;
            let r = run_task5_eval(ds, cfg, &dict, &header, provider)?;
            write_eval_report(ds, cfg, &r)?;
            let mut lines = vec![summarize(&r.without), summarize(&r.with)];
            for d in &r.deltas {
                lines.push(format!(
                    "class {}: distinct {} -> {}, entropy {:+.4} bits",
                    d.ground_truth,
                    d.without.distinct_labels,
                    d.with.distinct_labels,
                    d.entropy_delta
                ));
            }
            Ok(lines)
        }
    }
}
