//! Synthetic corpus generators standing in for real tweet datasets.
//!
//! Three builders share the label/hashtag correlation machinery:
//! - `Topic`: a weakly informative body (one topic token among distractors)
//!   whose topic maps many-to-one onto label-correlated hashtags; a slice of
//!   test tweets are near-duplicates of train tweets.
//! - `Retrieval`: twin pairs sharing a bag of individually ambiguous tokens;
//!   the hashtag is recoverable only from the near-duplicate twin.
//! - `Entity`: capitalized hub/satellite entities; the hashtag follows the
//!   hub, test tweets carry only satellites, so the signal must travel over
//!   the co-occurrence graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use numcore::init::seeded_rng;

use crate::corpus::{RawTweetRecord, Split};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Topic,
    Retrieval,
    Entity,
}

impl std::str::FromStr for Flavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "topic" => Ok(Self::Topic),
            "retrieval" => Ok(Self::Retrieval),
            "entity" => Ok(Self::Entity),
            other => Err(format!("unknown corpus flavor `{other}`")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub labels: Vec<String>,
    /// Probability that a tweet's label follows its hashtag's label.
    pub strength: f64,
    /// Entity surfaces for the Entity flavor (capitalized in tweets).
    pub entities: Vec<String>,
    pub seed: u64,
    pub flavor: Flavor,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_val: 50,
            n_test: 100,
            labels: vec!["alpha".into(), "beta".into()],
            strength: 0.9,
            entities: Vec::new(),
            seed: 42,
            flavor: Flavor::Topic,
        }
    }
}

pub struct SyntheticCorpus {
    pub records: Vec<RawTweetRecord>,
    /// Gazetteer lines for the Entity flavor (empty otherwise).
    pub gazetteer: Vec<String>,
}

fn filler_pool() -> Vec<String> {
    let mut pool = Vec::new();
    for a in ["br", "cl", "dr", "fl", "gr", "pl", "sn", "st", "tr", "vn"] {
        for b in ["ade", "ift", "ock", "ome", "ule", "ara", "ino", "eld", "ost", "ura"] {
            pool.push(format!("{a}{b}"));
        }
    }
    pool
}

fn assign_label(
    rng: &mut impl Rng,
    labels: &[String],
    indicated: usize,
    strength: f64,
) -> String {
    if rng.gen_range(0.0..1.0) < strength {
        labels[indicated].clone()
    } else {
        labels[rng.gen_range(0..labels.len())].clone()
    }
}

/// Build the corpus described by `spec`; identical specs produce identical
/// corpora.
pub fn make_synthetic(spec: &SyntheticCorpusSpec) -> SyntheticCorpus {
    match spec.flavor {
        Flavor::Topic => make_topic(spec),
        Flavor::Retrieval => make_retrieval(spec),
        Flavor::Entity => make_entity(spec),
    }
}

/// Topic flavor. Hashtags are label-indicative at `strength`; each hashtag
/// covers several topic tokens, each tweet shows one topic token plus
/// distractors, and hashtags are appended at the end of the raw text so
/// extraction makes them Absent.
fn make_topic(spec: &SyntheticCorpusSpec) -> SyntheticCorpus {
    let mut rng = seeded_rng(spec.seed, "synth.topic");
    let n_labels = spec.labels.len().max(1);
    let tags_per_label = 2usize;
    let topics_per_tag = 8usize;
    let n_tags = n_labels * tags_per_label;
    let tags: Vec<String> = (0..n_tags).map(|i| format!("tagword{i}")).collect();
    let topics: Vec<String> = (0..n_tags * topics_per_tag)
        .map(|i| format!("topic{i}"))
        .collect();
    let fillers = filler_pool();

    let total = spec.n_train + spec.n_val + spec.n_test;
    let mut records = Vec::with_capacity(total);
    fn body_of(fillers: &[String], topic: &str, rng: &mut impl Rng) -> String {
        let n_fill = 8;
        let mut words: Vec<String> = (0..n_fill)
            .map(|_| fillers[rng.gen_range(0..fillers.len())].clone())
            .collect();
        let pos = rng.gen_range(0..=words.len());
        words.insert(pos, topic.to_string());
        words.join(" ")
    }

    for i in 0..total {
        let split = if i < spec.n_train {
            Split::Train
        } else if i < spec.n_train + spec.n_val {
            Split::Val
        } else {
            Split::Test
        };
        let topic_idx = rng.gen_range(0..topics.len());
        let tag_idx = topic_idx / topics_per_tag;
        let label_idx = tag_idx / tags_per_label;
        let body = body_of(&fillers, &topics[topic_idx], &mut rng);
        let raw = format!("{body} #{}", tags[tag_idx]);
        let label = assign_label(&mut rng, &spec.labels, label_idx, spec.strength);
        records.push(RawTweetRecord {
            id: format!("syn{i}"),
            raw,
            label: Some(label),
            split,
        });
    }

    // Retrieval-dependent cases: a slice of test tweets become near
    // duplicates of train tweets (same topic and fillers, reshuffled).
    let n_dup = spec.n_test / 5;
    for k in 0..n_dup {
        let test_idx = spec.n_train + spec.n_val + k;
        let train_idx = k % spec.n_train;
        let source_body: Vec<String> = {
            let raw = &records[train_idx].raw;
            let cut = raw.rfind(" #").unwrap_or(raw.len());
            raw[..cut].split_whitespace().map(str::to_string).collect()
        };
        let mut shuffled = source_body;
        for i in (1..shuffled.len()).rev() {
            let j = rng.gen_range(0..=i);
            shuffled.swap(i, j);
        }
        let tag = records[train_idx]
            .raw
            .rsplit(" #")
            .next()
            .unwrap_or_default()
            .to_string();
        let label = records[train_idx].label.clone();
        records[test_idx] = RawTweetRecord {
            id: format!("syn{test_idx}"),
            raw: format!("{} #{tag}", shuffled.join(" ")),
            label,
            split: Split::Test,
        };
    }

    SyntheticCorpus {
        records,
        gazetteer: Vec::new(),
    }
}

/// Retrieval flavor: twin pairs share a bag of individually ambiguous
/// tokens. One twin carries its hashtag word in the body (the tag is
/// Present and copyable); the other drops it (Absent), so the tag is
/// recoverable only from the near-duplicate twin. Absent twins appear both
/// in train (which teaches the memory pathway) and in test (which probes it).
fn make_retrieval(spec: &SyntheticCorpusSpec) -> SyntheticCorpus {
    let mut rng = seeded_rng(spec.seed, "synth.retrieval");
    let pool: Vec<String> = (0..30).map(|i| format!("word{i}")).collect();
    let tags: Vec<String> = (0..6).map(|i| format!("pairtag{i}")).collect();
    let n_labels = spec.labels.len().max(1);
    let bag_len = 7;

    let mut shuffled = |bag: &[String], rng: &mut rand_chacha::ChaCha8Rng| -> Vec<String> {
        let mut out = bag.to_vec();
        for i in (1..out.len()).rev() {
            let j = rng.gen_range(0..=i);
            out.swap(i, j);
        }
        let _ = &mut *rng;
        out
    };

    let n_test_pairs = spec.n_test.max(1);
    let n_train_pairs = spec.n_train.saturating_sub(n_test_pairs) / 2;
    let mut train_records = Vec::new();
    let mut test_records = Vec::new();
    for k in 0..(n_test_pairs + n_train_pairs) {
        let mut bag: Vec<String> = Vec::new();
        while bag.len() < bag_len {
            let w = pool[rng.gen_range(0..pool.len())].clone();
            if !bag.contains(&w) {
                bag.push(w);
            }
        }
        let tag_idx = rng.gen_range(0..tags.len());
        let label_idx = tag_idx % n_labels;
        let label = assign_label(&mut rng, &spec.labels, label_idx, spec.strength);

        // Present-style twin: tag word inside the body.
        let mut with_tag = bag.clone();
        with_tag.push(tags[tag_idx].clone());
        let body_a = shuffled(&with_tag, &mut rng).join(" ");
        train_records.push(RawTweetRecord {
            id: format!("pair{k}a"),
            raw: format!("{body_a} #{}", tags[tag_idx]),
            label: Some(label.clone()),
            split: Split::Train,
        });
        // Absent-style twin: same bag, no tag word.
        let body_b = shuffled(&bag, &mut rng).join(" ");
        let record_b = RawTweetRecord {
            id: format!("pair{k}b"),
            raw: format!("{body_b} #{}", tags[tag_idx]),
            label: Some(label),
            split: if k < n_test_pairs { Split::Test } else { Split::Train },
        };
        if k < n_test_pairs {
            test_records.push(record_b);
        } else {
            train_records.push(record_b);
        }
    }
    // Validation: a few present-style noise tweets.
    for k in 0..spec.n_val {
        let mut bag: Vec<String> = Vec::new();
        while bag.len() < bag_len {
            let w = pool[rng.gen_range(0..pool.len())].clone();
            if !bag.contains(&w) {
                bag.push(w);
            }
        }
        let tag_idx = rng.gen_range(0..tags.len());
        let label_idx = tag_idx % n_labels;
        let label = assign_label(&mut rng, &spec.labels, label_idx, spec.strength);
        bag.push(tags[tag_idx].clone());
        let body = shuffled(&bag, &mut rng).join(" ");
        train_records.push(RawTweetRecord {
            id: format!("val{k}"),
            raw: format!("{body} #{}", tags[tag_idx]),
            label: Some(label),
            split: Split::Val,
        });
    }
    train_records.extend(test_records);
    SyntheticCorpus {
        records: train_records,
        gazetteer: Vec::new(),
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Entity flavor: each hashtag has a hub entity; many satellites co-occur
/// with their hub in train tweets (each satellite only a handful of times),
/// and test tweets mention only satellites, so the hashtag signal must
/// travel over the hub-satellite co-occurrence edges.
fn make_entity(spec: &SyntheticCorpusSpec) -> SyntheticCorpus {
    let mut rng = seeded_rng(spec.seed, "synth.entity");
    let n_labels = spec.labels.len().max(1);
    let hubs: Vec<String> = if spec.entities.is_empty() {
        (0..4).map(|i| format!("Hubplace{i}")).collect()
    } else {
        spec.entities.iter().map(|e| capitalize(e)).collect()
    };
    let sats_per_hub = 12usize;
    let satellites: Vec<String> = (0..hubs.len() * sats_per_hub)
        .map(|i| format!("Satsite{i}"))
        .collect();
    let tags: Vec<String> = (0..hubs.len()).map(|i| format!("hubtag{i}")).collect();
    let fillers = filler_pool();

    let total = spec.n_train + spec.n_val;
    let mut records = Vec::new();
    for i in 0..total {
        let split = if i < spec.n_train { Split::Train } else { Split::Val };
        // Round-robin over satellites keeps per-satellite counts low & even.
        let sat_idx = i % satellites.len();
        let hub_idx = sat_idx / sats_per_hub;
        let mut words: Vec<String> = (0..4)
            .map(|_| fillers[rng.gen_range(0..fillers.len())].clone())
            .collect();
        words.insert(rng.gen_range(0..=words.len()), hubs[hub_idx].clone());
        words.insert(rng.gen_range(0..=words.len()), satellites[sat_idx].clone());
        let label_idx = hub_idx % n_labels;
        let label = assign_label(&mut rng, &spec.labels, label_idx, spec.strength);
        records.push(RawTweetRecord {
            id: format!("ent{i}"),
            raw: format!("{} #{}", words.join(" "), tags[hub_idx]),
            label: Some(label),
            split,
        });
    }
    for k in 0..spec.n_test {
        let sat_idx = k % satellites.len();
        let hub_idx = sat_idx / sats_per_hub;
        let mut words: Vec<String> = (0..5)
            .map(|_| fillers[rng.gen_range(0..fillers.len())].clone())
            .collect();
        words.insert(rng.gen_range(0..=words.len()), satellites[sat_idx].clone());
        let label_idx = hub_idx % n_labels;
        let label = assign_label(&mut rng, &spec.labels, label_idx, spec.strength);
        records.push(RawTweetRecord {
            id: format!("enttest{k}"),
            raw: format!("{} #{}", words.join(" "), tags[hub_idx]),
            label: Some(label),
            split: Split::Test,
        });
    }
    let gazetteer = hubs
        .iter()
        .chain(satellites.iter())
        .map(|e| e.to_lowercase())
        .collect();
    SyntheticCorpus { records, gazetteer }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn spec(strength: f64, flavor: Flavor) -> SyntheticCorpusSpec {
        SyntheticCorpusSpec {
            n_train: 700,
            n_val: 100,
            n_test: 200,
            labels: vec!["up".into(), "down".into()],
            strength,
            entities: Vec::new(),
            seed: 7,
            flavor,
        }
    }

    fn tag_of(raw: &str) -> String {
        raw.rsplit('#').next().unwrap().to_string()
    }

    #[test]
    fn full_strength_labels_follow_hashtags() {
        let corpus = make_synthetic(&spec(1.0, Flavor::Topic));
        let mut map: HashMap<String, String> = HashMap::new();
        for rec in &corpus.records {
            let tag = tag_of(&rec.raw);
            let label = rec.label.clone().unwrap();
            match map.get(&tag) {
                None => {
                    map.insert(tag, label);
                }
                Some(existing) => assert_eq!(existing, &label, "tag {tag} maps to two labels"),
            }
        }
    }

    #[test]
    fn zero_strength_is_independent_by_chi_squared() {
        let mut s = spec(0.0, Flavor::Topic);
        s.n_train = 1000;
        s.n_val = 0;
        s.n_test = 0;
        let corpus = make_synthetic(&s);
        assert_eq!(corpus.records.len(), 1000);
        // Contingency counts hashtag x label.
        let mut tags: Vec<String> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        let mut counts: HashMap<(String, String), f64> = HashMap::new();
        for rec in &corpus.records {
            let t = tag_of(&rec.raw);
            let l = rec.label.clone().unwrap();
            if !tags.contains(&t) {
                tags.push(t.clone());
            }
            if !labels.contains(&l) {
                labels.push(l.clone());
            }
            *counts.entry((t, l)).or_default() += 1.0;
        }
        let n = corpus.records.len() as f64;
        let mut stat = 0.0;
        for t in &tags {
            let row: f64 = labels
                .iter()
                .map(|l| counts.get(&(t.clone(), l.clone())).copied().unwrap_or(0.0))
                .sum();
            for l in &labels {
                let col: f64 = tags
                    .iter()
                    .map(|tt| counts.get(&(tt.clone(), l.clone())).copied().unwrap_or(0.0))
                    .sum();
                let expected = row * col / n;
                if expected > 0.0 {
                    let obs = counts.get(&(t.clone(), l.clone())).copied().unwrap_or(0.0);
                    stat += (obs - expected).powi(2) / expected;
                }
            }
        }
        let df = (tags.len() - 1) * (labels.len() - 1);
        // 0.95 quantiles of chi-squared for df 1..8.
        let critical = [3.841, 5.991, 7.815, 9.488, 11.070, 12.592, 14.067, 15.507];
        assert!(df >= 1 && df <= critical.len(), "df {df}");
        assert!(
            stat < critical[df - 1],
            "chi-squared {stat} exceeds critical {} at df {df}",
            critical[df - 1]
        );
    }

    #[test]
    fn identical_specs_identical_corpora() {
        for flavor in [Flavor::Topic, Flavor::Retrieval, Flavor::Entity] {
            let a = make_synthetic(&spec(0.9, flavor));
            let b = make_synthetic(&spec(0.9, flavor));
            let aj = serde_json::to_string(&a.records).unwrap();
            let bj = serde_json::to_string(&b.records).unwrap();
            assert_eq!(aj, bj);
        }
    }

    #[test]
    fn retrieval_pairs_share_token_bags() {
        let corpus = make_synthetic(&spec(0.9, Flavor::Retrieval));
        let by_id: HashMap<&str, &RawTweetRecord> = corpus
            .records
            .iter()
            .map(|r| (r.id.as_str(), r))
            .collect();
        let a = by_id["pair0a"];
        let b = by_id["pair0b"];
        let tag = tag_of(&a.raw);
        assert_eq!(tag, tag_of(&b.raw));
        let bag = |raw: &str, drop: &str| {
            let mut toks: Vec<&str> = raw
                .split_whitespace()
                .filter(|t| !t.starts_with('#') && *t != drop)
                .collect();
            toks.sort();
            toks.join(" ")
        };
        // The present-style twin carries the tag word in its body; stripped
        // of it, the bags match.
        assert!(a.raw.split_whitespace().any(|t| t == tag));
        assert!(!b.raw.split_whitespace().any(|t| t == tag));
        assert_eq!(bag(&a.raw, &tag), bag(&b.raw, &tag));
        assert_ne!(a.split, b.split);
        // In-train absent twins exist so the memory pathway gets trained.
        let n_test = corpus
            .records
            .iter()
            .filter(|r| r.split == Split::Test)
            .count();
        let in_train_absent = corpus
            .records
            .iter()
            .filter(|r| r.split == Split::Train && r.id.ends_with('b'))
            .count();
        assert_eq!(n_test, 200);
        assert!(in_train_absent > 0);
    }

    #[test]
    fn entity_test_tweets_hide_the_hub() {
        let corpus = make_synthetic(&spec(0.9, Flavor::Entity));
        assert!(!corpus.gazetteer.is_empty());
        for rec in corpus.records.iter().filter(|r| r.split == Split::Test) {
            assert!(
                !rec.raw.contains("Hubplace"),
                "test tweet leaks hub: {}",
                rec.raw
            );
            assert!(rec.raw.contains("Satsite"), "test tweet missing satellite");
        }
    }
}
