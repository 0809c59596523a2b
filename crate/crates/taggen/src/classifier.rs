//! Downstream tweet classifier over fused inputs: transformer encoder,
//! mean pooling over non-pad positions, linear softmax head, cross-entropy
//! training with early stopping on a validation metric.
//!
//! The classifier reads only the fused text; hashtags influence it through
//! that single channel.

use std::path::Path;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use numcore::init::{seeded_rng, stream_seed, xavier_uniform};
use numcore::tensor::BoolMat;
use numcore::{AdamW, Bind, Checkpoint, NumError, ParamStore, Tape, Var};

use crate::corpus::{tokenize, Vocab, PAD};
use crate::layers::{encoder_stack, init_encoder_stack, StackConfig};
use crate::metrics::{classification_metric, MetricKind};
use crate::{Real, Tsr};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ClfConfig {
    pub d: usize,
    pub heads: usize,
    pub ff: usize,
    pub layers: usize,
    pub input_len: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ClfConfig {
    fn default() -> Self {
        Self {
            d: 64,
            heads: 2,
            ff: 128,
            layers: 2,
            input_len: 64,
            lr: 1e-3,
            weight_decay: 0.01,
            batch: 16,
            epochs: 50,
            patience: 5,
            seed: 42,
        }
    }
}

/// A labeled text pair; the classifier never sees hashtag records.
#[derive(Clone, Debug)]
pub struct LabeledText {
    pub text: String,
    pub label: String,
}

pub struct Classifier {
    pub cfg: ClfConfig,
    pub store: ParamStore<Real>,
    pub vocab: Vocab,
    pub labels: Vec<String>,
}

impl Classifier {
    fn stack(cfg: &ClfConfig) -> StackConfig {
        StackConfig {
            d: cfg.d,
            heads: cfg.heads,
            ff: cfg.ff,
            layers: cfg.layers,
        }
    }

    /// Initialize with a declared label set. The head row for each label is
    /// seeded from a stream named by the label itself, so permuting the
    /// label order permutes predictions identically.
    pub fn new(cfg: ClfConfig, vocab: Vocab, labels: Vec<String>) -> Result<Self, NumError> {
        if labels.is_empty() {
            return Err(NumError::Empty { op: "classifier labels" });
        }
        let mut rng = seeded_rng(cfg.seed, "clf.init");
        let mut store: ParamStore<Real> = ParamStore::new();
        store.insert("clf.tok_embed", xavier_uniform(vocab.len(), cfg.d, &mut rng))?;
        store.insert("clf.pos", xavier_uniform(cfg.input_len, cfg.d, &mut rng))?;
        init_encoder_stack(&mut store, "clf.enc", &Self::stack(&cfg), &mut rng)?;
        let mut head = Tsr::zeros(&[cfg.d, labels.len()]);
        for (j, label) in labels.iter().enumerate() {
            let mut label_rng = seeded_rng(stream_seed(cfg.seed, "clf.head"), label);
            // Small scale keeps the initial label distribution near uniform.
            let col: Tsr = xavier_uniform::<Real>(cfg.d, 1, &mut label_rng).scale(0.02);
            for i in 0..cfg.d {
                *head.at_mut(i, j) = col.data()[i];
            }
        }
        store.insert("clf.head.w", head)?;
        store.insert("clf.head.b", Tsr::zeros(&[labels.len()]))?;
        Ok(Self {
            cfg,
            store,
            vocab,
            labels,
        })
    }

    fn input_ids(&self, text: &str) -> (Vec<usize>, usize) {
        let mut ids: Vec<usize> = tokenize(text)
            .iter()
            .take(self.cfg.input_len)
            .map(|t| self.vocab.id(t))
            .collect();
        let n_real = ids.len().max(1);
        if ids.is_empty() {
            ids.push(PAD);
        }
        while ids.len() < self.cfg.input_len {
            ids.push(PAD);
        }
        (ids, n_real)
    }

    /// Logits `[1, #labels]` for one text.
    pub fn logits<'t>(&self, ctx: &Bind<'t, Real>, text: &str) -> Result<Var<'t, Real>, NumError> {
        let (ids, n_real) = self.input_ids(text);
        let cols: Vec<bool> = (0..self.cfg.input_len).map(|i| i < n_real).collect();
        let tok = ctx.p("clf.tok_embed").embedding(&ids)?;
        let x = tok.add(ctx.p("clf.pos"))?;
        let mask = Rc::new(BoolMat::from_cols(self.cfg.input_len, &cols));
        let h = encoder_stack(ctx, "clf.enc", x, &mask, &Self::stack(&self.cfg))?;
        // Mean over the non-pad prefix only.
        let pool = {
            let mut m = Tsr::zeros(&[1, self.cfg.input_len]);
            for i in 0..n_real {
                *m.at_mut(0, i) = 1.0 / n_real as Real;
            }
            ctx.constant(m)
        };
        let pooled = pool.matmul(h)?;
        pooled
            .matmul(ctx.p("clf.head.w"))?
            .add_row(ctx.p("clf.head.b"))
    }

    fn label_index(&self, label: &str) -> Result<usize, NumError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| NumError::Invalid(format!("label `{label}` not in the declared set")))
    }

    pub fn example_loss<'t>(
        &self,
        ctx: &Bind<'t, Real>,
        example: &LabeledText,
    ) -> Result<Var<'t, Real>, NumError> {
        let target = self.label_index(&example.label)?;
        self.logits(ctx, &example.text)?.cross_entropy_mean(&[target])
    }

    /// Cross-entropy training with per-epoch validation; keeps the
    /// best-on-validation parameters and stops after `patience` epochs
    /// without improvement. Returns `(train losses, best validation value)`.
    pub fn train(
        &mut self,
        train: &[LabeledText],
        val: &[LabeledText],
        metric: &MetricKind,
    ) -> Result<(Vec<f64>, f64), NumError> {
        if train.is_empty() {
            return Err(NumError::Empty { op: "train_classifier" });
        }
        for ex in train.iter().chain(val) {
            self.label_index(&ex.label)?;
        }
        let mut opt: AdamW<Real> = AdamW::new(self.cfg.lr, self.cfg.weight_decay);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = seeded_rng(self.cfg.seed, "clf.shuffle");
        let mut losses = Vec::new();
        let mut best_value = f64::NEG_INFINITY;
        let mut best_params: Option<Checkpoint> = None;
        let mut stale = 0usize;
        for _epoch in 0..self.cfg.epochs {
            shuffle(&mut order, &mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(self.cfg.batch) {
                let inv = 1.0 / batch.len() as Real;
                let mut grads: Vec<(String, Tsr)> = Vec::new();
                for &i in batch {
                    let tape: Tape<Real> = Tape::new();
                    let ctx = Bind::new(&tape, &self.store);
                    let loss = self.example_loss(&ctx, &train[i])?;
                    epoch_loss += loss.value().item()?;
                    tape.backward(loss)?;
                    grads.extend(ctx.collect_grads());
                }
                for (name, g) in grads {
                    self.store.accumulate_grad(&name, &g.scale(inv))?;
                }
                opt.step(&mut self.store)?;
            }
            losses.push(epoch_loss / train.len() as f64);

            let value = if val.is_empty() {
                // No validation split: track training loss instead.
                -losses.last().copied().unwrap_or(f64::INFINITY)
            } else {
                let gold: Vec<String> = val.iter().map(|e| e.label.clone()).collect();
                let pred: Vec<String> = val
                    .iter()
                    .map(|e| self.predict(&e.text).map(|(_, l)| l))
                    .collect::<Result<_, _>>()?;
                classification_metric("validation", metric, &self.labels, &gold, &pred)
                    .map_err(|e| NumError::Invalid(e.to_string()))?
                    .value
            };
            if value > best_value {
                best_value = value;
                best_params = Some(Checkpoint::from_store(&self.store));
                stale = 0;
            } else {
                stale += 1;
                if stale >= self.cfg.patience {
                    break;
                }
            }
        }
        if let Some(best) = best_params {
            self.store = best.into_store()?;
        }
        Ok((losses, best_value))
    }

    /// Label distribution and argmax label; ties break to the lowest index.
    pub fn predict(&self, text: &str) -> Result<(Vec<f64>, String), NumError> {
        let tape: Tape<Real> = Tape::new();
        let ctx = Bind::new(&tape, &self.store);
        let probs = self.logits(&ctx, text)?.softmax(1)?.value();
        let dist: Vec<f64> = probs.data().to_vec();
        let mut best = 0;
        for (i, &p) in dist.iter().enumerate() {
            if p > dist[best] {
                best = i;
            }
        }
        Ok((dist, self.labels[best].clone()))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(&self.store)
            .with_meta("clf.labels", serde_json::json!(self.labels))
            .with_meta(
                "clf.config",
                serde_json::to_value(&self.cfg).expect("config serializes"),
            )
    }

    pub fn save(&self, path: &Path) -> Result<(), NumError> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path, vocab: Vocab) -> Result<Self, NumError> {
        let ckpt = Checkpoint::load(path)?;
        let cfg: ClfConfig = serde_json::from_value(
            ckpt.meta
                .get("clf.config")
                .cloned()
                .ok_or_else(|| NumError::Invalid("checkpoint missing clf.config".into()))?,
        )?;
        let labels: Vec<String> = serde_json::from_value(
            ckpt.meta
                .get("clf.labels")
                .cloned()
                .ok_or_else(|| NumError::Invalid("checkpoint missing clf.labels".into()))?,
        )?;
        Ok(Self {
            cfg,
            store: ckpt.into_store()?,
            vocab,
            labels,
        })
    }
}

fn shuffle(order: &mut [usize], rng: &mut impl rand::Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}
