//! Task classification metrics and hashtag-quality P/R/F1 with a
//! present/absent breakdown.
//!
//! Zero-division convention everywhere: a metric component is 0 when its
//! denominator is 0. Duplicate predicted hashtags are collapsed before
//! scoring; surfaces compare case-insensitively after `#`-stripping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{HashtagKind, HashtagRecord};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("empty input")]
    Empty,
    #[error("gold and predicted lengths differ: {gold} vs {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("label `{0}` not in the declared label set")]
    UnknownLabel(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MetricKind {
    MacroF1,
    PositiveF1 { positive: String },
    MacroRecall,
    StanceF1 { favor: String, against: String },
    Accuracy,
}

impl MetricKind {
    pub fn name(&self) -> String {
        match self {
            Self::MacroF1 => "macro-f1".into(),
            Self::PositiveF1 { positive } => format!("f1({positive})"),
            Self::MacroRecall => "macro-recall".into(),
            Self::StanceF1 { .. } => "stance-f1".into(),
            Self::Accuracy => "accuracy".into(),
        }
    }
}

/// The metric each task is evaluated with: macro-F1 for emoji, emotion,
/// hate, and offensive; F1 of the positive class for irony; macro recall
/// for sentiment; mean F1 of the favor/against classes for stance.
pub fn metric_for_task(task: &str) -> Result<MetricKind, MetricError> {
    match task.to_lowercase().as_str() {
        "emoji" | "emotion" | "hate" | "offensive" => Ok(MetricKind::MacroF1),
        "irony" => Ok(MetricKind::PositiveF1 {
            positive: "irony".into(),
        }),
        "sentiment" => Ok(MetricKind::MacroRecall),
        "stance" => Ok(MetricKind::StanceF1 {
            favor: "favor".into(),
            against: "against".into(),
        }),
        other => Err(MetricError::UnknownTask(other.to_string())),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub metric: String,
    pub value: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub per_class: BTreeMap<String, ClassScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overall: Option<Prf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub present: Option<Prf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub absent: Option<Prf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub sample_count: usize,
}

impl MetricsReport {
    /// Aligned plain-text table of the report.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:<16} {:>8}\n",
            "task", "metric", "value"
        ));
        out.push_str(&format!(
            "{:<24} {:<16} {:>8.4}\n",
            self.task, self.metric, self.value
        ));
        if !self.per_class.is_empty() {
            out.push_str(&format!(
                "{:<24} {:>8} {:>8} {:>8} {:>8}\n",
                "class", "prec", "rec", "f1", "support"
            ));
            for (label, s) in &self.per_class {
                out.push_str(&format!(
                    "{:<24} {:>8.4} {:>8.4} {:>8.4} {:>8}\n",
                    label, s.precision, s.recall, s.f1, s.support
                ));
            }
        }
        for (name, prf) in [
            ("overall", self.overall),
            ("present", self.present),
            ("absent", self.absent),
        ] {
            if let Some(p) = prf {
                out.push_str(&format!(
                    "{:<24} P={:.4} R={:.4} F1={:.4}\n",
                    name, p.precision, p.recall, p.f1
                ));
            }
        }
        out
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn per_class_scores(
    labels: &[String],
    gold: &[String],
    pred: &[String],
) -> BTreeMap<String, ClassScores> {
    let mut scores = BTreeMap::new();
    for label in labels {
        let tp = gold
            .iter()
            .zip(pred)
            .filter(|(g, p)| *g == label && *p == label)
            .count() as f64;
        let fp = gold
            .iter()
            .zip(pred)
            .filter(|(g, p)| *g != label && *p == label)
            .count() as f64;
        let fn_ = gold
            .iter()
            .zip(pred)
            .filter(|(g, p)| *g == label && *p != label)
            .count() as f64;
        let support = gold.iter().filter(|g| *g == label).count();
        let precision = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
        let recall = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
        scores.insert(
            label.clone(),
            ClassScores {
                precision,
                recall,
                f1: f1_of(precision, recall),
                support,
            },
        );
    }
    scores
}

/// Compute the task's designated metric over aligned gold/predicted labels.
/// `labels` is the declared label set; every input label must belong to it.
pub fn classification_metric(
    task: &str,
    kind: &MetricKind,
    labels: &[String],
    gold: &[String],
    pred: &[String],
) -> Result<MetricsReport, MetricError> {
    if gold.is_empty() {
        return Err(MetricError::Empty);
    }
    if gold.len() != pred.len() {
        return Err(MetricError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    for l in gold.iter().chain(pred) {
        if !labels.contains(l) {
            return Err(MetricError::UnknownLabel(l.clone()));
        }
    }
    let per_class = per_class_scores(labels, gold, pred);
    let value = match kind {
        MetricKind::MacroF1 => {
            per_class.values().map(|s| s.f1).sum::<f64>() / labels.len() as f64
        }
        MetricKind::PositiveF1 { positive } => per_class
            .get(positive)
            .ok_or_else(|| MetricError::UnknownLabel(positive.clone()))?
            .f1,
        MetricKind::MacroRecall => {
            per_class.values().map(|s| s.recall).sum::<f64>() / labels.len() as f64
        }
        MetricKind::StanceF1 { favor, against } => {
            let f = per_class
                .get(favor)
                .ok_or_else(|| MetricError::UnknownLabel(favor.clone()))?
                .f1;
            let a = per_class
                .get(against)
                .ok_or_else(|| MetricError::UnknownLabel(against.clone()))?
                .f1;
            (f + a) / 2.0
        }
        MetricKind::Accuracy => {
            gold.iter().zip(pred).filter(|(g, p)| g == p).count() as f64 / gold.len() as f64
        }
    };
    Ok(MetricsReport {
        task: task.to_string(),
        metric: kind.name(),
        value,
        per_class,
        overall: None,
        present: None,
        absent: None,
        seed: None,
        sample_count: gold.len(),
    })
}

/// Intersection counts for one tweet's predictions against its gold records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HashtagCounts {
    pub pred: usize,
    pub gold: usize,
    pub hit: usize,
    pub gold_present: usize,
    pub hit_present: usize,
    pub gold_absent: usize,
    pub hit_absent: usize,
}

impl HashtagCounts {
    pub fn add(&mut self, other: &HashtagCounts) {
        self.pred += other.pred;
        self.gold += other.gold;
        self.hit += other.hit;
        self.gold_present += other.gold_present;
        self.hit_present += other.hit_present;
        self.gold_absent += other.gold_absent;
        self.hit_absent += other.hit_absent;
    }

    pub fn overall(&self) -> Prf {
        prf(self.hit, self.pred, self.gold)
    }

    pub fn present(&self) -> Prf {
        prf(self.hit_present, self.pred, self.gold_present)
    }

    pub fn absent(&self) -> Prf {
        prf(self.hit_absent, self.pred, self.gold_absent)
    }
}

fn prf(hit: usize, pred: usize, gold: usize) -> Prf {
    let precision = if pred == 0 { 0.0 } else { hit as f64 / pred as f64 };
    let recall = if gold == 0 { 0.0 } else { hit as f64 / gold as f64 };
    Prf {
        precision,
        recall,
        f1: f1_of(precision, recall),
    }
}

fn canon(surface: &str) -> String {
    surface.trim_start_matches('#').to_lowercase()
}

/// Set intersection counts for one tweet, split by the gold records' kinds.
pub fn hashtag_counts(predicted: &[String], gold: &[HashtagRecord]) -> HashtagCounts {
    let mut pred: Vec<String> = predicted.iter().map(|s| canon(s)).collect();
    pred.sort();
    pred.dedup();
    let mut gold_all: Vec<(String, HashtagKind)> = gold
        .iter()
        .map(|r| (canon(&r.surface), r.kind))
        .collect();
    gold_all.sort();
    gold_all.dedup();

    let mut counts = HashtagCounts {
        pred: pred.len(),
        gold: gold_all.len(),
        ..Default::default()
    };
    for (surface, kind) in &gold_all {
        let hit = pred.iter().any(|p| p == surface);
        match kind {
            HashtagKind::Present => {
                counts.gold_present += 1;
                if hit {
                    counts.hit_present += 1;
                    counts.hit += 1;
                }
            }
            HashtagKind::Absent => {
                counts.gold_absent += 1;
                if hit {
                    counts.hit_absent += 1;
                    counts.hit += 1;
                }
            }
        }
    }
    counts
}

/// Corpus-level hashtag quality. Micro averaging (aggregate counts) by
/// default; `macro_over_tweets` averages per-tweet F1 instead.
pub fn hashtag_prf(
    per_tweet: &[HashtagCounts],
    macro_over_tweets: bool,
) -> MetricsReport {
    let mut total = HashtagCounts::default();
    for c in per_tweet {
        total.add(c);
    }
    let overall = total.overall();
    let value = if macro_over_tweets && !per_tweet.is_empty() {
        per_tweet.iter().map(|c| c.overall().f1).sum::<f64>() / per_tweet.len() as f64
    } else {
        overall.f1
    };
    MetricsReport {
        task: "hashtag-generation".into(),
        metric: if macro_over_tweets {
            "macro-f1-per-tweet".into()
        } else {
            "micro-f1".into()
        },
        value,
        per_class: BTreeMap::new(),
        overall: Some(overall),
        present: Some(total.present()),
        absent: Some(total.absent()),
        seed: None,
        sample_count: per_tweet.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let ls = labels(&["a", "b"]);
        let gold = labels(&["a", "b", "a"]);
        for kind in [MetricKind::MacroF1, MetricKind::MacroRecall, MetricKind::Accuracy] {
            let r = classification_metric("emotion", &kind, &ls, &gold, &gold).unwrap();
            assert!((r.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_macro_f1_half() {
        // gold [1,1,0,0], pred [1,0,1,0]: both classes get F1 = 0.5.
        let ls = labels(&["0", "1"]);
        let gold = labels(&["1", "1", "0", "0"]);
        let pred = labels(&["1", "0", "1", "0"]);
        let r = classification_metric("hate", &MetricKind::MacroF1, &ls, &gold, &pred).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stance_excludes_neutral() {
        // Neutral perfect, favor/against swapped: stance-F1 is 0.
        let ls = labels(&["favor", "against", "none"]);
        let gold = labels(&["favor", "against", "none", "none"]);
        let pred = labels(&["against", "favor", "none", "none"]);
        let kind = MetricKind::StanceF1 {
            favor: "favor".into(),
            against: "against".into(),
        };
        let r = classification_metric("stance", &kind, &ls, &gold, &pred).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn unknown_task_and_empty_input_rejected() {
        assert!(matches!(
            metric_for_task("mystery"),
            Err(MetricError::UnknownTask(_))
        ));
        let ls = labels(&["a"]);
        assert!(matches!(
            classification_metric("emotion", &MetricKind::MacroF1, &ls, &[], &[]),
            Err(MetricError::Empty)
        ));
    }

    #[test]
    fn task_metric_assignments() {
        assert_eq!(metric_for_task("emoji").unwrap(), MetricKind::MacroF1);
        assert_eq!(metric_for_task("sentiment").unwrap(), MetricKind::MacroRecall);
        assert!(matches!(
            metric_for_task("irony").unwrap(),
            MetricKind::PositiveF1 { .. }
        ));
        assert!(matches!(
            metric_for_task("stance").unwrap(),
            MetricKind::StanceF1 { .. }
        ));
    }

    fn record(surface: &str, kind: HashtagKind) -> HashtagRecord {
        HashtagRecord {
            surface: surface.into(),
            kind,
            span: None,
        }
    }

    #[test]
    fn hashtag_set_arithmetic() {
        let pred = vec!["a".to_string(), "b".to_string()];
        let gold = vec![
            record("b", HashtagKind::Present),
            record("c", HashtagKind::Absent),
        ];
        let counts = hashtag_counts(&pred, &gold);
        let overall = counts.overall();
        assert_eq!(overall.precision, 0.5);
        assert_eq!(overall.recall, 0.5);
        assert_eq!(overall.f1, 0.5);
    }

    #[test]
    fn empty_predictions_are_all_zero() {
        let gold = vec![record("x", HashtagKind::Absent)];
        let counts = hashtag_counts(&[], &gold);
        let overall = counts.overall();
        assert_eq!((overall.precision, overall.recall, overall.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn duplicates_and_hash_prefixes_collapse() {
        let pred = vec!["#Tag".to_string(), "tag".to_string(), "TAG".to_string()];
        let gold = vec![record("tag", HashtagKind::Present)];
        let counts = hashtag_counts(&pred, &gold);
        assert_eq!(counts.pred, 1);
        assert_eq!(counts.hit, 1);
    }

    #[test]
    fn partition_consistency_of_recall() {
        let pred = vec!["a".into(), "c".into(), "d".into()];
        let gold = vec![
            record("a", HashtagKind::Present),
            record("b", HashtagKind::Present),
            record("c", HashtagKind::Absent),
        ];
        let c = hashtag_counts(&pred, &gold);
        let weighted = (c.gold_present as f64 * c.present().recall
            + c.gold_absent as f64 * c.absent().recall)
            / c.gold as f64;
        assert!((weighted - c.overall().recall).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_invariant_under_label_permutation() {
        let ls = labels(&["a", "b", "c"]);
        let gold = labels(&["a", "b", "c", "a", "b"]);
        let pred = labels(&["a", "c", "c", "b", "b"]);
        let r1 = classification_metric("emotion", &MetricKind::MacroF1, &ls, &gold, &pred).unwrap();
        // Permute label names consistently.
        let rename = |x: &str| match x {
            "a" => "c".to_string(),
            "b" => "a".to_string(),
            _ => "b".to_string(),
        };
        let gold2: Vec<String> = gold.iter().map(|s| rename(s)).collect();
        let pred2: Vec<String> = pred.iter().map(|s| rename(s)).collect();
        let r2 = classification_metric("emotion", &MetricKind::MacroF1, &ls, &gold2, &pred2).unwrap();
        assert!((r1.value - r2.value).abs() < 1e-12);
    }

    #[test]
    fn report_serializes_and_tabulates() {
        let ls = labels(&["x", "y"]);
        let gold = labels(&["x", "y"]);
        let r = classification_metric("hate", &MetricKind::MacroF1, &ls, &gold, &gold).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("macro-f1"));
        let table = r.to_table();
        assert!(table.contains("hate"));
        assert!(table.contains("1.0000"));
    }
}
