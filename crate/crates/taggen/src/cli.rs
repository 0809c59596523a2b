//! Pipeline stages behind the command-line interface. Every stage reads and
//! writes only the documented files under one run directory, so any stage is
//! restartable from disk:
//!
//! ```text
//! <run>/config.resolved      resolved flat config of the last stage
//! <run>/corpus/{train,val,test}.jsonl
//! <run>/vocab.json           generator vocabulary
//! <run>/gazetteer.txt        copied gazetteer (possibly empty)
//! <run>/memory.ckpt          initial tweet-memory bank
//! <run>/graph.json           entity graph topology + tweet index
//! <run>/hashgen.ckpt         trained generator (plus hashgen.epochN.ckpt)
//! <run>/generated.jsonl      beam-search output per tweet
//! <run>/fused.jsonl          classifier inputs
//! <run>/labels.json          declared label set
//! <run>/clf.ckpt clf_vocab.json
//! <run>/predictions.jsonl report.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, LabeledText};
use crate::config::RunConfig;
use crate::corpus::{
    load_jsonl, preprocess, sample_low_resource, save_jsonl, RawTweetRecord, Split, Tweet,
    TweetRecord, Vocab,
};
use crate::eam::{build_graph, EntityGraph, Gazetteer};
use crate::fusion::{fuse, FusionMethod};
use crate::hashgen::{GeneratedHashtag, Generator};
use crate::metrics::{
    classification_metric, hashtag_counts, hashtag_prf, metric_for_task, MetricKind,
    MetricsReport,
};
use crate::synth::{make_synthetic, SyntheticCorpusSpec};
use crate::tam::build_memory;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing input: {0}")]
    MissingInput(PathBuf),
    #[error("run directory is locked by {0} (stale lock? remove it)")]
    Locked(PathBuf),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Num(#[from] numcore::NumError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Exclusive lock on a run directory; removed on drop.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
        let path = run_dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Locked(path))
            }
            Err(e) => Err(CliError::Io {
                path: path.display().to_string(),
                source: e,
            }),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn log_resolved(run_dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let text = cfg.resolved();
    for line in text.lines() {
        log::info!("config {line}");
    }
    fs::write(run_dir.join("config.resolved"), text).map_err(io_err(run_dir))?;
    Ok(())
}

fn require(path: PathBuf) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingInput(path))
    }
}

// ---------------------------------------------------------------------------
// Corpus files
// ---------------------------------------------------------------------------

fn split_path(run_dir: &Path, split: Split) -> PathBuf {
    run_dir.join("corpus").join(format!("{split}.jsonl"))
}

pub fn load_split(run_dir: &Path, split: Split) -> Result<Vec<Tweet>, CliError> {
    let path = split_path(run_dir, split);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let records: Vec<TweetRecord> = load_jsonl(&path)?;
    Ok(records.iter().map(|r| Tweet::from_record(r, split)).collect())
}

fn load_gazetteer(run_dir: &Path) -> Result<Gazetteer, CliError> {
    let path = run_dir.join("gazetteer.txt");
    if path.exists() {
        Gazetteer::load(&path).map_err(io_err(&path))
    } else {
        Ok(Gazetteer::default())
    }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Extraction + normalization over a raw JSONL file; writes per-split corpus
/// files and the generator vocabulary. `--sample` applies the size-tiered
/// low-resource subsample to the train split.
pub fn preprocess_stage(run_dir: &Path, input: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let _lock = RunLock::acquire(run_dir)?;
    log_resolved(run_dir, cfg)?;
    let input = require(input.to_path_buf())?;
    let raw: Vec<RawTweetRecord> = load_jsonl(&input)?;
    if raw.is_empty() {
        return Err(CliError::Invalid(format!(
            "no records in {}",
            input.display()
        )));
    }
    let mut tweets: Vec<Tweet> = raw.iter().map(preprocess).collect();
    if cfg.sample {
        let train: Vec<Tweet> = tweets
            .iter()
            .filter(|t| t.split == Split::Train)
            .cloned()
            .collect();
        let sampled = sample_low_resource(&train, cfg.seed)?;
        log::info!("low-resource sample: {} of {} train tweets", sampled.len(), train.len());
        tweets.retain(|t| t.split != Split::Train);
        tweets.extend(sampled);
    }
    fs::create_dir_all(run_dir.join("corpus")).map_err(io_err(run_dir))?;
    for split in [Split::Train, Split::Val, Split::Test] {
        let records: Vec<TweetRecord> = tweets
            .iter()
            .filter(|t| t.split == split)
            .map(|t| t.to_record())
            .collect();
        save_jsonl(&split_path(run_dir, split), &records)?;
        log::info!("{split}: {} tweets", records.len());
    }

    // Vocabulary over train+val tokens plus hashtag surface words.
    let streams: Vec<Vec<String>> = tweets
        .iter()
        .filter(|t| t.split != Split::Test)
        .map(|t| {
            let mut toks = t.tokens.clone();
            for h in &t.hashtags {
                toks.extend(h.surface.to_lowercase().split_whitespace().map(str::to_string));
            }
            toks
        })
        .collect();
    let vocab = Vocab::build(streams.iter().map(|v| v.as_slice()), cfg.min_count);
    vocab.save(&run_dir.join("vocab.json"))?;
    log::info!("vocabulary: {} tokens", vocab.len());
    Ok(())
}

/// Key/value memory over the train+val splits, written to `memory.ckpt`.
pub fn build_memory_stage(run_dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let _lock = RunLock::acquire(run_dir)?;
    log_resolved(run_dir, cfg)?;
    require(split_path(run_dir, Split::Train))?;
    let mut tweets = load_split(run_dir, Split::Train)?;
    tweets.extend(load_split(run_dir, Split::Val)?);
    let mut store = numcore::ParamStore::new();
    let bank = build_memory(&tweets, cfg.dim, cfg.seed, &mut store)?;
    let ckpt = numcore::Checkpoint::from_store(&store)
        .with_meta(crate::tam::IDS_META, serde_json::json!(bank.ids()));
    ckpt.save(&run_dir.join("memory.ckpt"))?;
    log::info!("memory bank: {} rows of dim {}", bank.len(), cfg.dim);
    Ok(())
}

/// Entity co-occurrence graph over train+val, written to `graph.json`; the
/// gazetteer (when given) is copied into the run directory.
pub fn build_graph_stage(run_dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let _lock = RunLock::acquire(run_dir)?;
    log_resolved(run_dir, cfg)?;
    require(split_path(run_dir, Split::Train))?;
    if let Some(src) = &cfg.gazetteer {
        let src = require(src.clone())?;
        fs::copy(&src, run_dir.join("gazetteer.txt")).map_err(io_err(&src))?;
    } else if !run_dir.join("gazetteer.txt").exists() {
        fs::write(run_dir.join("gazetteer.txt"), "").map_err(io_err(run_dir))?;
    }
    let gazetteer = load_gazetteer(run_dir)?;
    let mut tweets = load_split(run_dir, Split::Train)?;
    tweets.extend(load_split(run_dir, Split::Val)?);
    let graph = build_graph(&tweets, &gazetteer);
    graph
        .save(&run_dir.join("graph.json"))
        .map_err(io_err(run_dir))?;
    log::info!(
        "entity graph: {} nodes, {} edges",
        graph.node_count(),
        graph.edges.len()
    );
    Ok(())
}

fn load_generator_inputs(
    run_dir: &Path,
    cfg: &RunConfig,
) -> Result<(Vocab, EntityGraph, Gazetteer), CliError> {
    let vocab = Vocab::load(&require(run_dir.join("vocab.json"))?)?;
    let graph_path = require(run_dir.join("graph.json"))?;
    let graph = EntityGraph::load(&graph_path).map_err(io_err(&graph_path))?;
    let gazetteer = load_gazetteer(run_dir)?;
    let _ = cfg;
    Ok((vocab, graph, gazetteer))
}

/// Teacher-forced generator training over the hashtag-bearing tweets of
/// train+val (hashtag supervision needs no class labels); checkpoints per
/// epoch plus the final `hashgen.ckpt`.
pub fn train_hashgen_stage(run_dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let _lock = RunLock::acquire(run_dir)?;
    log_resolved(run_dir, cfg)?;
    let (vocab, graph, gazetteer) = load_generator_inputs(run_dir, cfg)?;
    let memory = numcore::Checkpoint::load(&require(run_dir.join("memory.ckpt"))?)?;
    let store = memory.into_store()?;
    let ids: Vec<String> = serde_json::from_value(
        memory
            .meta
            .get(crate::tam::IDS_META)
            .cloned()
            .unwrap_or_else(|| serde_json::json!([])),
    )
    .map_err(|e| CliError::Invalid(e.to_string()))?;
    let bank = crate::tam::MemoryBank::from_ids(ids);
    let mut generator = Generator::new(cfg.gen_config(), vocab, bank, graph, gazetteer, store)?;
    let mut train = load_split(run_dir, Split::Train)?;
    train.extend(load_split(run_dir, Split::Val)?);
    let run = run_dir.to_path_buf();
    let losses = generator.train(&train, |epoch, loss, gen| {
        log::info!("epoch {epoch}: loss {loss:.4}");
        let _ = gen.save(&run.join(format!("hashgen.epoch{epoch}.ckpt")));
    })?;
    generator.save(&run_dir.join("hashgen.ckpt"))?;
    log::info!(
        "trained {} epochs; final loss {:.4}",
        losses.len(),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub id: String,
    pub hashtags: Vec<GeneratedHashtag>,
    pub log_score: f64,
    pub finished: bool,
}

/// Beam-search generation; `splits` defaults to all three.
pub fn generate_stage(
    run_dir: &Path,
    cfg: &RunConfig,
    splits: &[Split],
) -> Result<(), CliError> {
    let _lock = RunLock::acquire(run_dir)?;
    log_resolved(run_dir, cfg)?;
    let (vocab, graph, gazetteer) = load_generator_inputs(run_dir, cfg)?;
    let generator = Generator::load(
        &require(run_dir.join("hashgen.ckpt"))?,
        vocab,
        graph,
        gazetteer,
    )?;
    let mut records = Vec::new();
    for &split in splits {
        for tweet in load_split(run_dir, split)? {
            let result = generator.beam_search(&tweet, cfg.beam, cfg.max_len)?;
            records.push(GeneratedRecord {
                id: tweet.id.clone(),
                hashtags: result.hashtags,
                log_score: result.log_score,
                finished: result.finished,
            });
        }
    }
    save_jsonl(&run_dir.join("generated.jsonl"), &records)?;
    log::info!("generated hashtags for {} tweets", records.len());
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FusedRecord {
    pub id: String,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub split: Split,
    pub method: FusionMethod,
    pub hashtags: Vec<String>,
}

fn fuse_tweet(tweet: &Tweet, generated: Option<&GeneratedRecord>, method: FusionMethod) -> FusedRecord {
    let pairs: Vec<(String, crate::corpus::HashtagKind)> = generated
        .map(|g| {
            g.hashtags
                .iter()
                .map(|h| (h.surface.clone(), h.kind))
                .collect()
        })
        .unwrap_or_default();
    let fused = fuse(&tweet.id, &pairs, &tweet.processed, method);
    FusedRecord {
        id: tweet.id.clone(),
        text: fused.text,
        label: tweet.label.clone(),
        split: tweet.split,
        method,
        hashtags: fused.hashtags,
    }
}

/// Combine generated hashtags with each tweet under the configured template.
pub fn fuse_stage(run_dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let _lock = RunLock::acquire(run_dir)?;
    log_resolved(run_dir, cfg)?;
    let generated: Vec<GeneratedRecord> = load_jsonl(&require(run_dir.join("generated.jsonl"))?)?;
    let by_id: BTreeMap<&str, &GeneratedRecord> =
        generated.iter().map(|g| (g.id.as_str(), g)).collect();
    let mut fused_records = Vec::new();
    for split in [Split::Train, Split::Val, Split::Test] {
        for tweet in load_split(run_dir, split)? {
            fused_records.push(fuse_tweet(
                &tweet,
                by_id.get(tweet.id.as_str()).copied(),
                cfg.fusion,
            ));
        }
    }
    save_jsonl(&run_dir.join("fused.jsonl"), &fused_records)?;
    log::info!("fused {} tweets with method {}", fused_records.len(), cfg.fusion);
    Ok(())
}

fn labeled(records: &[FusedRecord], split: Split) -> Vec<LabeledText> {
    records
        .iter()
        .filter(|r| r.split == split && r.label.is_some())
        .map(|r| LabeledText {
            text: r.text.clone(),
            label: r.label.clone().expect("filtered"),
        })
        .collect()
}

fn load_labels(run_dir: &Path, labels_file: Option<&Path>, fused: &[FusedRecord]) -> Result<Vec<String>, CliError> {
    if let Some(path) = labels_file {
        let path = require(path.to_path_buf())?;
        let body = fs::read_to_string(&path).map_err(io_err(&path))?;
        let labels: Vec<String> =
            serde_json::from_str(&body).map_err(|e| CliError::Invalid(e.to_string()))?;
        fs::write(
            run_dir.join("labels.json"),
            serde_json::to_string(&labels).map_err(|e| CliError::Invalid(e.to_string()))?,
        )
        .map_err(io_err(run_dir))?;
        return Ok(labels);
    }
    let stored = run_dir.join("labels.json");
    if stored.exists() {
        let body = fs::read_to_string(&stored).map_err(io_err(&stored))?;
        return serde_json::from_str(&body).map_err(|e| CliError::Invalid(e.to_string()));
    }
    // Derive from the corpus, sorted for determinism.
    let mut labels: Vec<String> = fused.iter().filter_map(|r| r.label.clone()).collect();
    labels.sort();
    labels.dedup();
    if labels.is_empty() {
        return Err(CliError::Invalid("no labels in the corpus and no --labels file".into()));
    }
    fs::write(
        run_dir.join("labels.json"),
        serde_json::to_string(&labels).map_err(|e| CliError::Invalid(e.to_string()))?,
    )
    .map_err(io_err(run_dir))?;
    Ok(labels)
}

fn task_metric(cfg: &RunConfig) -> Result<(String, MetricKind), CliError> {
    match &cfg.task {
        Some(task) => Ok((task.clone(), metric_for_task(task)?)),
        None => Ok(("synthetic".to_string(), MetricKind::Accuracy)),
    }
}

fn train_classifier_on(
    cfg: &RunConfig,
    fused: &[FusedRecord],
    labels: &[String],
    metric: &MetricKind,
) -> Result<Classifier, CliError> {
    let train = labeled(fused, Split::Train);
    let val = labeled(fused, Split::Val);
    if train.is_empty() {
        return Err(CliError::Invalid("no labeled train examples".into()));
    }
    // Reject labels outside the declared set before training.
    for ex in train.iter().chain(&val) {
        if !labels.contains(&ex.label) {
            return Err(CliError::Invalid(format!(
                "label `{}` not in the declared set",
                ex.label
            )));
        }
    }
    let streams: Vec<Vec<String>> = train
        .iter()
        .map(|e| crate::corpus::tokenize(&e.text))
        .collect();
    let vocab = Vocab::build(streams.iter().map(|v| v.as_slice()), cfg.min_count);
    let mut clf = Classifier::new(cfg.clf_config(), vocab, labels.to_vec())?;
    let (_losses, best) = clf.train(&train, &val, metric)?;
    log::info!("classifier best validation value {best:.4}");
    Ok(clf)
}

/// Train the downstream classifier on the fused train split.
pub fn train_clf_stage(
    run_dir: &Path,
    cfg: &RunConfig,
    labels_file: Option<&Path>,
) -> Result<(), CliError> {
    let _lock = RunLock::acquire(run_dir)?;
    log_resolved(run_dir, cfg)?;
    let fused: Vec<FusedRecord> = load_jsonl(&require(run_dir.join("fused.jsonl"))?)?;
    let labels = load_labels(run_dir, labels_file, &fused)?;
    let (_task, metric) = task_metric(cfg)?;
    let clf = train_classifier_on(cfg, &fused, &labels, &metric)?;
    clf.vocab.save(&run_dir.join("clf_vocab.json"))?;
    clf.save(&run_dir.join("clf.ckpt"))?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub label: String,
    pub scores: Vec<f64>,
}

fn evaluate_classifier(
    clf: &Classifier,
    fused: &[FusedRecord],
    task: &str,
    metric: &MetricKind,
    cfg: &RunConfig,
) -> Result<(MetricsReport, Vec<PredictionRecord>), CliError> {
    let test: Vec<&FusedRecord> = fused
        .iter()
        .filter(|r| r.split == Split::Test && r.label.is_some())
        .collect();
    if test.is_empty() {
        return Err(CliError::Invalid("no labeled test examples".into()));
    }
    let gold: Vec<String> = test.iter().map(|r| r.label.clone().expect("filtered")).collect();
    let mut predictions = Vec::new();
    let mut pred_labels = Vec::new();
    for rec in &test {
        let (scores, label) = clf.predict(&rec.text)?;
        pred_labels.push(label.clone());
        predictions.push(PredictionRecord {
            id: rec.id.clone(),
            label,
            scores,
        });
    }
    let mut report = classification_metric(task, metric, &clf.labels, &gold, &pred_labels)?;
    report.seed = Some(cfg.seed);
    if !cfg.per_class {
        report.per_class.clear();
    }
    Ok((report, predictions))
}

fn hashtag_quality_report(run_dir: &Path, cfg: &RunConfig) -> Result<Option<MetricsReport>, CliError> {
    let gen_path = run_dir.join("generated.jsonl");
    if !gen_path.exists() {
        return Ok(None);
    }
    let generated: Vec<GeneratedRecord> = load_jsonl(&gen_path)?;
    let by_id: BTreeMap<&str, &GeneratedRecord> =
        generated.iter().map(|g| (g.id.as_str(), g)).collect();
    let test = load_split(run_dir, Split::Test)?;
    let mut counts = Vec::new();
    for tweet in &test {
        if tweet.hashtags.is_empty() {
            continue;
        }
        let predicted: Vec<String> = by_id
            .get(tweet.id.as_str())
            .map(|g| g.hashtags.iter().map(|h| h.surface.clone()).collect())
            .unwrap_or_default();
        counts.push(hashtag_counts(&predicted, &tweet.hashtags));
    }
    if counts.is_empty() {
        return Ok(None);
    }
    let mut report = hashtag_prf(&counts, cfg.macro_hashtag_prf);
    report.seed = Some(cfg.seed);
    Ok(Some(report))
}

/// Evaluate on the test split. With `compare`, train classifiers on the
/// configured fusion and on bare tweets from the same inputs and report both.
pub fn eval_stage(run_dir: &Path, cfg: &RunConfig, compare: bool) -> Result<(), CliError> {
    let _lock = RunLock::acquire(run_dir)?;
    log_resolved(run_dir, cfg)?;
    let fused: Vec<FusedRecord> = load_jsonl(&require(run_dir.join("fused.jsonl"))?)?;
    let (task, metric) = task_metric(cfg)?;
    let mut report: BTreeMap<String, serde_json::Value> = BTreeMap::new();

    if compare {
        let labels = load_labels(run_dir, None, &fused)?;
        let generated: Vec<GeneratedRecord> =
            load_jsonl(&require(run_dir.join("generated.jsonl"))?)?;
        let by_id: BTreeMap<&str, &GeneratedRecord> =
            generated.iter().map(|g| (g.id.as_str(), g)).collect();
        let mut with_records = Vec::new();
        let mut without_records = Vec::new();
        for split in [Split::Train, Split::Val, Split::Test] {
            for tweet in load_split(run_dir, split)? {
                let gen = by_id.get(tweet.id.as_str()).copied();
                with_records.push(fuse_tweet(&tweet, gen, cfg.fusion));
                without_records.push(fuse_tweet(&tweet, gen, FusionMethod::Without));
            }
        }
        let clf_with = train_classifier_on(cfg, &with_records, &labels, &metric)?;
        let (with_report, predictions) =
            evaluate_classifier(&clf_with, &with_records, &task, &metric, cfg)?;
        save_jsonl(&run_dir.join("predictions.jsonl"), &predictions)?;
        let clf_without = train_classifier_on(cfg, &without_records, &labels, &metric)?;
        let (without_report, _) =
            evaluate_classifier(&clf_without, &without_records, &task, &metric, cfg)?;
        log::info!(
            "{}: with hashtags {:.4} vs without {:.4}",
            with_report.metric,
            with_report.value,
            without_report.value
        );
        report.insert(
            "with_hashtags".into(),
            serde_json::to_value(&with_report).expect("serializable"),
        );
        report.insert(
            "without_hashtags".into(),
            serde_json::to_value(&without_report).expect("serializable"),
        );
    } else {
        let clf = Classifier::load(
            &require(run_dir.join("clf.ckpt"))?,
            Vocab::load(&require(run_dir.join("clf_vocab.json"))?)?,
        )?;
        let (clf_report, predictions) = evaluate_classifier(&clf, &fused, &task, &metric, cfg)?;
        save_jsonl(&run_dir.join("predictions.jsonl"), &predictions)?;
        println!("{}", clf_report.to_table());
        report.insert(
            "classification".into(),
            serde_json::to_value(&clf_report).expect("serializable"),
        );
    }
    if let Some(quality) = hashtag_quality_report(run_dir, cfg)? {
        println!("{}", quality.to_table());
        report.insert(
            "hashtag_quality".into(),
            serde_json::to_value(&quality).expect("serializable"),
        );
    }
    fs::write(
        run_dir.join("report.json"),
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Invalid(e.to_string()))?,
    )
    .map_err(io_err(run_dir))?;
    Ok(())
}

/// Train/generate/score generator variants; one report per variant under
/// `ablate/`. `--no-tam`/`--no-eam` select which ablation axes to run.
pub fn ablate_stage(
    run_dir: &Path,
    cfg: &RunConfig,
    no_tam: bool,
    no_eam: bool,
) -> Result<(), CliError> {
    let mut variants: Vec<(&str, bool, bool)> = vec![("full", true, true)];
    if no_tam {
        variants.push(("no_tam", false, true));
    }
    if no_eam {
        variants.push(("no_eam", true, false));
    }
    if no_tam && no_eam {
        variants.push(("no_both", false, false));
    }
    fs::create_dir_all(run_dir.join("ablate")).map_err(io_err(run_dir))?;
    for (name, use_tam, use_eam) in variants {
        let mut variant_cfg = cfg.clone();
        variant_cfg.no_tam = !use_tam;
        variant_cfg.no_eam = !use_eam;
        let report = ablation_hashtag_f1(run_dir, &variant_cfg)?;
        log::info!("ablation {name}: hashtag F1 {:.4}", report.value);
        fs::write(
            run_dir.join("ablate").join(format!("report_{name}.json")),
            serde_json::to_string_pretty(&report).map_err(|e| CliError::Invalid(e.to_string()))?,
        )
        .map_err(io_err(run_dir))?;
    }
    Ok(())
}

/// Train a generator variant in memory and score hashtag quality on test.
pub fn ablation_hashtag_f1(run_dir: &Path, cfg: &RunConfig) -> Result<MetricsReport, CliError> {
    let _lock = RunLock::acquire(&run_dir.join("ablate"))?;
    let (vocab, graph, gazetteer) = load_generator_inputs(run_dir, cfg)?;
    let memory = numcore::Checkpoint::load(&require(run_dir.join("memory.ckpt"))?)?;
    let store = memory.into_store()?;
    let ids: Vec<String> = serde_json::from_value(
        memory
            .meta
            .get(crate::tam::IDS_META)
            .cloned()
            .unwrap_or_else(|| serde_json::json!([])),
    )
    .map_err(|e| CliError::Invalid(e.to_string()))?;
    let bank = crate::tam::MemoryBank::from_ids(ids);
    let mut generator = Generator::new(cfg.gen_config(), vocab, bank, graph, gazetteer, store)?;
    let mut train = load_split(run_dir, Split::Train)?;
    train.extend(load_split(run_dir, Split::Val)?);
    generator.train(&train, |_, _, _| {})?;
    let test = load_split(run_dir, Split::Test)?;
    let mut counts = Vec::new();
    for tweet in &test {
        if tweet.hashtags.is_empty() {
            continue;
        }
        let result = generator.beam_search(&tweet, cfg.beam, cfg.max_len)?;
        let predicted: Vec<String> = result.hashtags.iter().map(|h| h.surface.clone()).collect();
        counts.push(hashtag_counts(&predicted, &tweet.hashtags));
    }
    if counts.is_empty() {
        return Err(CliError::Invalid("no hashtag-bearing test tweets".into()));
    }
    let mut report = hashtag_prf(&counts, cfg.macro_hashtag_prf);
    report.seed = Some(cfg.seed);
    Ok(report)
}

/// Run the registered gradient checks; true iff all pass.
pub fn gradcheck_stage(seeds: u64) -> Result<bool, CliError> {
    let outcomes = crate::checks::run_all_checks(seeds)?;
    let mut all_ok = true;
    for o in &outcomes {
        let status = if o.passed() { "pass" } else { "FAIL" };
        println!(
            "{status}  {:<18} worst {:.3e}  tol {:.0e}  ({} seeds)",
            o.name, o.worst, o.tol, o.seeds
        );
        all_ok &= o.passed();
    }
    Ok(all_ok)
}

/// Write a synthetic corpus (and gazetteer for the entity flavor).
pub fn make_synthetic_stage(out_dir: &Path, spec: &SyntheticCorpusSpec) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let corpus = make_synthetic(spec);
    save_jsonl(&out_dir.join("raw.jsonl"), &corpus.records)?;
    fs::write(out_dir.join("gazetteer.txt"), corpus.gazetteer.join("\n")).map_err(io_err(out_dir))?;
    log::info!(
        "synthetic corpus: {} records ({:?})",
        corpus.records.len(),
        spec.flavor
    );
    Ok(())
}
