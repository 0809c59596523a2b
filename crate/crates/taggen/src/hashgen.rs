//! Transformer encoder-decoder hashtag generator.
//!
//! Encodes the tweet, adds the tweet-memory output vector and the entity
//! node encodings into the hidden states, decodes SEP-separated hashtag
//! sequences with teacher forcing, and generates with length-wise beam
//! search. The output head attends over the fused states from the decoder
//! state, concatenates state and context, and applies two stacked linear
//! maps (no intermediate nonlinearity) before the vocabulary softmax.

use std::collections::HashMap;
use std::path::Path;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use numcore::init::{seeded_rng, xavier_uniform};
use numcore::tensor::BoolMat;
use numcore::{AdamW, Bind, Checkpoint, NumError, ParamStore, Tape, Var};

use crate::corpus::{matches_contiguous, HashtagKind, Tweet, Vocab, BOS, EOS, PAD, SEP, UNK};
use crate::eam::{encode_graph, token_entity_map, EntityGraph, Gazetteer};
use crate::layers::{decoder_stack, encoder_stack, StackConfig};
use crate::tam::{address, query_encoding, MemoryBank};
use crate::{Real, Tsr};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GenConfig {
    pub d: usize,
    pub heads: usize,
    pub ff: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub input_len: usize,
    pub max_len: usize,
    pub beam: usize,
    pub gcn_layers: usize,
    pub gat_layers: usize,
    pub use_tam: bool,
    pub use_eam: bool,
    pub exclude_self: bool,
    pub length_norm: bool,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            d: 64,
            heads: 2,
            ff: 128,
            enc_layers: 2,
            dec_layers: 2,
            input_len: 64,
            max_len: 40,
            beam: 10,
            gcn_layers: 1,
            gat_layers: 1,
            use_tam: true,
            use_eam: true,
            exclude_self: false,
            length_norm: false,
            lr: 1e-3,
            weight_decay: 0.01,
            batch: 16,
            epochs: 30,
            seed: 42,
        }
    }
}

impl GenConfig {
    fn enc_stack(&self) -> StackConfig {
        StackConfig {
            d: self.d,
            heads: self.heads,
            ff: self.ff,
            layers: self.enc_layers,
        }
    }

    fn dec_stack(&self) -> StackConfig {
        StackConfig {
            d: self.d,
            heads: self.heads,
            ff: self.ff,
            layers: self.dec_layers,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedHashtag {
    pub surface: String,
    pub kind: HashtagKind,
}

/// Beam-search outcome: deduplicated surfaces in decode order, the summed
/// token log-probabilities of the winning hypothesis, and whether it reached
/// EOS within the length budget.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerationResult {
    pub hashtags: Vec<GeneratedHashtag>,
    pub log_score: f64,
    pub finished: bool,
}

pub struct Generator {
    pub cfg: GenConfig,
    pub store: ParamStore<Real>,
    pub vocab: Vocab,
    pub bank: MemoryBank,
    pub graph: EntityGraph,
    pub gazetteer: Gazetteer,
    memory_pos: HashMap<String, usize>,
}

/// Present-or-absent call for a generated surface against the tweet body.
/// Empty surfaces are Absent by convention.
pub fn classify_generated(surface: &str, processed: &str) -> HashtagKind {
    if matches_contiguous(surface, processed) {
        HashtagKind::Present
    } else {
        HashtagKind::Absent
    }
}

impl Generator {
    /// Initialize parameters (Xavier-uniform, seeded) next to an existing
    /// memory bank and entity graph. The bank's key/value matrices must
    /// already be registered in `store` by `tam::build_memory`.
    pub fn new(
        cfg: GenConfig,
        vocab: Vocab,
        bank: MemoryBank,
        graph: EntityGraph,
        gazetteer: Gazetteer,
        mut store: ParamStore<Real>,
    ) -> Result<Self, NumError> {
        let mut rng = seeded_rng(cfg.seed, "hashgen.init");
        let v = vocab.len();
        store.insert("hashgen.tok_embed", xavier_uniform(v, cfg.d, &mut rng))?;
        store.insert(
            "hashgen.enc_pos",
            xavier_uniform(cfg.input_len, cfg.d, &mut rng),
        )?;
        store.insert("hashgen.dec_pos", xavier_uniform(cfg.max_len, cfg.d, &mut rng))?;
        crate::layers::init_encoder_stack(&mut store, "hashgen.enc", &cfg.enc_stack(), &mut rng)?;
        crate::layers::init_decoder_stack(&mut store, "hashgen.dec", &cfg.dec_stack(), &mut rng)?;
        store.insert(
            "hashgen.combine",
            xavier_uniform(2 * cfg.d, cfg.d, &mut rng),
        )?;
        // Small output scale keeps the initial vocabulary distribution near
        // uniform (initial loss ~ ln |V|).
        store.insert(
            "hashgen.out",
            xavier_uniform::<Real>(cfg.d, v, &mut rng).scale(0.1),
        )?;
        crate::eam::init_eam_params(
            &mut store,
            graph.node_count(),
            cfg.d,
            cfg.gcn_layers,
            cfg.gat_layers,
            &mut rng,
        )?;
        let memory_pos = bank
            .ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(Self {
            cfg,
            store,
            vocab,
            bank,
            graph,
            gazetteer,
            memory_pos,
        })
    }

    // -- input preparation --------------------------------------------------

    fn input_ids(&self, tweet: &Tweet) -> (Vec<usize>, usize) {
        let mut ids: Vec<usize> = tweet
            .tokens
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

    fn enc_columns(&self, n_real: usize) -> Vec<bool> {
        (0..self.cfg.input_len).map(|i| i < n_real).collect()
    }

    /// Indicator matrix `[input_len, N]`: 1 where token i is associated with
    /// entity node j in this tweet.
    fn entity_matrix(&self, tweet: &Tweet) -> Option<Tsr> {
        if !self.cfg.use_eam || self.graph.is_empty() {
            return None;
        }
        let map = token_entity_map(&tweet.processed, &self.graph, &self.gazetteer);
        let n = self.graph.node_count();
        let mut m = Tsr::zeros(&[self.cfg.input_len, n]);
        let mut any = false;
        for (i, nodes) in map.iter().take(self.cfg.input_len).enumerate() {
            for &j in nodes {
                *m.at_mut(i, j) = 1.0;
                any = true;
            }
        }
        if any {
            Some(m)
        } else {
            None
        }
    }

    /// Target token ids: surfaces in Present-then-Absent order, words joined
    /// by SEP between hashtags, terminated by EOS; truncated to `max_len`.
    pub fn target_ids(&self, tweet: &Tweet) -> Vec<usize> {
        let mut ids = Vec::new();
        for (i, record) in tweet.ordered_targets().iter().enumerate() {
            if i > 0 {
                ids.push(SEP);
            }
            for word in record.surface.to_lowercase().split_whitespace() {
                ids.push(self.vocab.id(word));
            }
        }
        ids.push(EOS);
        ids.truncate(self.cfg.max_len);
        ids
    }

    // -- forward passes -----------------------------------------------------

    /// Encoder states with the memory vector and entity encodings added:
    /// `h~_i = h_i + o + sum_j H(L)_j over nodes mapped to token i`.
    pub fn encode_fused<'t>(
        &self,
        ctx: &Bind<'t, Real>,
        tweet: &Tweet,
    ) -> Result<(Var<'t, Real>, Vec<bool>), NumError> {
        let (ids, n_real) = self.input_ids(tweet);
        let cols = self.enc_columns(n_real);
        let tok = ctx.p("hashgen.tok_embed").embedding(&ids)?;
        let pos = ctx.p("hashgen.enc_pos");
        let x = tok.add(pos)?;
        let mask = Rc::new(BoolMat::from_cols(self.cfg.input_len, &cols));
        let mut h = encoder_stack(ctx, "hashgen.enc", x, &mask, &self.cfg.enc_stack())?;

        if self.cfg.use_tam && !self.bank.is_empty() {
            let real_ids: Vec<usize> = ids[..n_real].iter().copied().filter(|&i| i != PAD).collect();
            let e = query_encoding(ctx, "hashgen.tok_embed", &real_ids, self.cfg.d)?;
            let exclude = if self.cfg.exclude_self {
                self.memory_pos.get(&tweet.id).copied()
            } else {
                None
            };
            let (_, o) = address(e, ctx.p(crate::tam::KEYS), ctx.p(crate::tam::VALUES), exclude)?;
            h = h.add_row(o.reshape(&[self.cfg.d])?)?;
        }

        if let Some(m) = self.entity_matrix(tweet) {
            if let Some(nodes) = encode_graph(ctx, &self.graph, self.cfg.gcn_layers, self.cfg.gat_layers)? {
                let contribution = ctx.constant(m).matmul(nodes)?;
                h = h.add(contribution)?;
            }
        }
        Ok((h, cols))
    }

    /// Decoder states for a teacher-forced prefix (causal self-attention).
    fn decoder_states<'t>(
        &self,
        ctx: &Bind<'t, Real>,
        dec_in: &[usize],
        fused: Var<'t, Real>,
        enc_cols: &[bool],
    ) -> Result<Var<'t, Real>, NumError> {
        let m = dec_in.len();
        let tok = ctx.p("hashgen.tok_embed").embedding(dec_in)?;
        let pos = ctx.p("hashgen.dec_pos").embedding(&(0..m).collect::<Vec<_>>())?;
        let y = tok.add(pos)?;
        let self_mask = Rc::new(BoolMat::causal(m));
        let cross_mask = Rc::new(BoolMat::from_cols(m, enc_cols));
        decoder_stack(
            ctx,
            "hashgen.dec",
            y,
            fused,
            &self_mask,
            &cross_mask,
            &self.cfg.dec_stack(),
        )
    }

    /// Output head for all steps at once: attention over the fused states,
    /// context vectors, and the two stacked output maps. Returns
    /// `(attention [m, L], context [m, d], logits [m, V])`.
    pub fn output_head<'t>(
        &self,
        ctx: &Bind<'t, Real>,
        states: Var<'t, Real>,
        fused: Var<'t, Real>,
        enc_cols: &[bool],
    ) -> Result<(Var<'t, Real>, Var<'t, Real>, Var<'t, Real>), NumError> {
        let m = states.shape()[0];
        let mask = Rc::new(BoolMat::from_cols(m, enc_cols));
        let attn = states.matmul(fused.transpose()?)?.masked_softmax(mask)?;
        let context = attn.matmul(fused)?;
        let combined = ctx.tape().concat(&[states, context], 1)?;
        let logits = combined
            .matmul(ctx.p("hashgen.combine"))?
            .matmul(ctx.p("hashgen.out"))?;
        Ok((attn, context, logits))
    }

    /// One decoding step from a nonempty prefix (BOS first): the attention
    /// over encoder positions, its context vector, and the vocabulary
    /// distribution for the next token.
    pub fn decode_step<'t>(
        &self,
        ctx: &Bind<'t, Real>,
        prefix: &[usize],
        fused: Var<'t, Real>,
        enc_cols: &[bool],
    ) -> Result<(Var<'t, Real>, Var<'t, Real>, Var<'t, Real>), NumError> {
        assert!(!prefix.is_empty(), "decoder prefix starts with BOS");
        let states = self.decoder_states(ctx, prefix, fused, enc_cols)?;
        let (attn, context, logits) = self.output_head(ctx, states, fused, enc_cols)?;
        let dist = logits.softmax(1)?;
        Ok((attn, context, dist))
    }

    /// Teacher-forced mean cross-entropy for one tweet.
    pub fn example_loss<'t>(&self, ctx: &Bind<'t, Real>, tweet: &Tweet) -> Result<Var<'t, Real>, NumError> {
        let targets = self.target_ids(tweet);
        let mut dec_in = vec![BOS];
        dec_in.extend(&targets[..targets.len() - 1]);
        let (fused, cols) = self.encode_fused(ctx, tweet)?;
        let states = self.decoder_states(ctx, &dec_in, fused, &cols)?;
        let (_, _, logits) = self.output_head(ctx, states, fused, &cols)?;
        logits.cross_entropy_mean(&targets)
    }

    // -- training -----------------------------------------------------------

    /// Teacher-forced training over hashtag-bearing tweets. Returns per-epoch
    /// mean losses; `on_epoch` runs after each epoch (checkpointing).
    pub fn train(
        &mut self,
        tweets: &[Tweet],
        mut on_epoch: impl FnMut(usize, f64, &Self),
    ) -> Result<Vec<f64>, NumError> {
        let examples: Vec<&Tweet> = tweets.iter().filter(|t| !t.hashtags.is_empty()).collect();
        if examples.is_empty() {
            return Err(NumError::Empty { op: "train_hashgen" });
        }
        let mut opt: AdamW<Real> = AdamW::new(self.cfg.lr, self.cfg.weight_decay);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = seeded_rng(self.cfg.seed, "hashgen.shuffle");
        let mut losses = Vec::with_capacity(self.cfg.epochs);
        for epoch in 0..self.cfg.epochs {
            shuffle(&mut order, &mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(self.cfg.batch) {
                let inv = 1.0 / batch.len() as Real;
                let mut grads: Vec<(String, Tsr)> = Vec::new();
                for &i in batch {
                    let tape: Tape<Real> = Tape::new();
                    let ctx = Bind::new(&tape, &self.store);
                    let loss = self.example_loss(&ctx, examples[i])?;
                    epoch_loss += loss.value().item()?;
                    tape.backward(loss)?;
                    grads.extend(ctx.collect_grads());
                }
                for (name, g) in grads {
                    self.store.accumulate_grad(&name, &g.scale(inv))?;
                }
                opt.step(&mut self.store)?;
            }
            let mean = epoch_loss / examples.len() as Real;
            losses.push(mean);
            on_epoch(epoch, mean, self);
        }
        Ok(losses)
    }

    // -- generation ---------------------------------------------------------

    /// Token ids the beam may extend a hypothesis with.
    pub fn allowed_continuations(&self) -> Vec<usize> {
        (0..self.vocab.len())
            .filter(|&id| id != PAD && id != BOS)
            .collect()
    }

    /// Log-probabilities of the next token after `prefix` (BOS-prefixed).
    fn next_token_logprobs(
        &self,
        fused_value: &Tsr,
        enc_cols: &[bool],
        prefix: &[usize],
    ) -> Result<Vec<f64>, NumError> {
        let tape: Tape<Real> = Tape::new();
        let ctx = Bind::new(&tape, &self.store);
        let fused = ctx.constant(fused_value.clone());
        let (_, _, dist) = self.decode_step(&ctx, prefix, fused, enc_cols)?;
        let probs = dist.value();
        let last = probs.row(probs.shape()[0] - 1);
        Ok(last.iter().map(|&p| p.max(1e-300).ln()).collect())
    }

    /// Length-wise beam search over SEP-separated hashtag tokens.
    pub fn beam_search(&self, tweet: &Tweet, beam: usize, max_len: usize) -> Result<GenerationResult, NumError> {
        let (fused_value, cols) = {
            let tape: Tape<Real> = Tape::new();
            let ctx = Bind::new(&tape, &self.store);
            let (fused, cols) = self.encode_fused(&ctx, tweet)?;
            (fused.value(), cols)
        };
        let allowed = self.allowed_continuations();

        struct Hyp {
            ids: Vec<usize>,
            score: f64,
        }
        let rank = |score: f64, len: usize, length_norm: bool| -> f64 {
            if length_norm && len > 0 {
                score / len as f64
            } else {
                score
            }
        };

        let mut live = vec![Hyp { ids: Vec::new(), score: 0.0 }];
        let mut best_finished: Option<Hyp> = None;
        for _ in 0..max_len {
            let mut candidates: Vec<Hyp> = Vec::new();
            for hyp in &live {
                let mut prefix = Vec::with_capacity(hyp.ids.len() + 1);
                prefix.push(BOS);
                prefix.extend(&hyp.ids);
                let logp = self.next_token_logprobs(&fused_value, &cols, &prefix)?;
                for &tok in &allowed {
                    let mut ids = hyp.ids.clone();
                    ids.push(tok);
                    candidates.push(Hyp {
                        ids,
                        score: hyp.score + logp[tok],
                    });
                }
            }
            // Stable sort: ties keep earlier-expanded hypotheses first.
            candidates.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
            candidates.truncate(beam);
            let mut next_live = Vec::new();
            for hyp in candidates {
                if *hyp.ids.last().expect("nonempty") == EOS {
                    let better = match &best_finished {
                        None => true,
                        Some(best) => {
                            rank(hyp.score, hyp.ids.len(), self.cfg.length_norm)
                                > rank(best.score, best.ids.len(), self.cfg.length_norm)
                        }
                    };
                    if better {
                        best_finished = Some(hyp);
                    }
                } else {
                    next_live.push(hyp);
                }
            }
            live = next_live;
            if live.is_empty() {
                break;
            }
        }

        let (winner, finished) = match best_finished {
            Some(h) => (h, true),
            None => {
                let mut best = 0;
                for (i, h) in live.iter().enumerate() {
                    if h.score > live[best].score {
                        best = i;
                    }
                }
                (live.swap_remove(best), false)
            }
        };

        let hashtags = self.surfaces_from_ids(&winner.ids, &tweet.processed);
        Ok(GenerationResult {
            hashtags,
            log_score: winner.score,
            finished,
        })
    }

    /// Split decoded ids on SEP, join each segment's tokens, deduplicate
    /// case-insensitively preserving first occurrence, classify kinds.
    fn surfaces_from_ids(&self, ids: &[usize], processed: &str) -> Vec<GeneratedHashtag> {
        let mut segments: Vec<Vec<usize>> = vec![Vec::new()];
        for &id in ids {
            match id {
                SEP => segments.push(Vec::new()),
                EOS => break,
                UNK => {} // untranslatable; dropped from the surface
                _ => segments.last_mut().expect("nonempty").push(id),
            }
        }
        let mut seen: Vec<String> = Vec::new();
        let mut out = Vec::new();
        for seg in segments {
            if seg.is_empty() {
                continue;
            }
            let surface = seg
                .iter()
                .map(|&id| self.vocab.token(id))
                .collect::<Vec<_>>()
                .join(" ");
            let key = surface.to_lowercase();
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let kind = classify_generated(&surface, processed);
            out.push(GeneratedHashtag { surface, kind });
        }
        out
    }

    // -- persistence ----------------------------------------------------------

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(&self.store)
            .with_meta(crate::tam::IDS_META, serde_json::json!(self.bank.ids()))
            .with_meta(
                "hashgen.config",
                serde_json::to_value(&self.cfg).expect("config serializes"),
            )
    }

    pub fn save(&self, path: &Path) -> Result<(), NumError> {
        self.to_checkpoint().save(path)
    }

    /// Rebuild from a checkpoint plus the sidecar vocab/graph/gazetteer.
    pub fn load(
        path: &Path,
        vocab: Vocab,
        graph: EntityGraph,
        gazetteer: Gazetteer,
    ) -> Result<Self, NumError> {
        let ckpt = Checkpoint::load(path)?;
        let cfg: GenConfig = serde_json::from_value(
            ckpt.meta
                .get("hashgen.config")
                .cloned()
                .ok_or_else(|| NumError::Invalid("checkpoint missing hashgen.config".into()))?,
        )?;
        let ids: Vec<String> = serde_json::from_value(
            ckpt.meta
                .get(crate::tam::IDS_META)
                .cloned()
                .unwrap_or_else(|| serde_json::json!([])),
        )?;
        let store = ckpt.into_store()?;
        let bank = MemoryBank::from_ids(ids);
        let memory_pos = bank
            .ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(Self {
            cfg,
            store,
            vocab,
            bank,
            graph,
            gazetteer,
            memory_pos,
        })
    }
}

fn shuffle(order: &mut [usize], rng: &mut impl rand::Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}
