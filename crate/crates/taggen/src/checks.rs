//! Registry of gradient checks over every differentiable layer and both
//! end-to-end losses. The `gradcheck` subcommand runs a small sweep; the
//! acceptance suite runs the full one.
//!
//! Draws whose forward pass puts a relu input within 1e-3 of the kink are
//! re-rolled: central differences require smoothness at the evaluation
//! point.

use std::rc::Rc;

use numcore::init::{seeded_rng, xavier_uniform};
use numcore::tensor::BoolMat;
use numcore::{
    gradient_check, gradient_check_store, relu_margin_of_store, NumError, ParamStore,
};
use rand::Rng;

use crate::classifier::{Classifier, ClfConfig, LabeledText};
use crate::corpus::{preprocess, RawTweetRecord, Split, Tweet, Vocab};
use crate::eam::{build_graph, gat_layer, gcn_layer, Gazetteer};
use crate::hashgen::{GenConfig, Generator};
use crate::layers::{decoder_stack, encoder_stack, init_decoder_stack, init_encoder_stack, StackConfig};
use crate::tam::address;
use crate::{Real, Tsr};

const EPS: Real = 1e-5;
const MARGIN: Real = 1e-3;
pub const SINGLE_LAYER_TOL: f64 = 1e-5;
pub const END_TO_END_TOL: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub seeds: u64,
    pub worst: f64,
    pub tol: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.worst < self.tol
    }
}

/// Small corpus with present and absent hashtags and capitalized entities.
pub fn toy_corpus() -> Vec<Tweet> {
    let raws = [
        ("t0", "visiting Paris today #travel", Some("go")),
        ("t1", "Paris Metro is busy #metro #travel", Some("go")),
        ("t2", "i love #coffee mornings", Some("stay")),
        ("t3", "Berlin trip soon #travel", Some("go")),
    ];
    raws.iter()
        .map(|(id, raw, label)| {
            preprocess(&RawTweetRecord {
                id: id.to_string(),
                raw: raw.to_string(),
                label: label.map(str::to_string),
                split: Split::Train,
            })
        })
        .collect()
}

fn toy_gen_config(seed: u64) -> GenConfig {
    GenConfig {
        d: 8,
        heads: 2,
        ff: 16,
        enc_layers: 1,
        dec_layers: 1,
        input_len: 6,
        max_len: 6,
        beam: 3,
        gcn_layers: 1,
        gat_layers: 1,
        use_tam: true,
        use_eam: true,
        exclude_self: false,
        length_norm: false,
        lr: 1e-3,
        weight_decay: 0.0,
        batch: 4,
        epochs: 1,
        seed,
    }
}

/// Generator over the toy corpus with memory and entity graph attached.
pub fn toy_generator(seed: u64) -> Result<Generator, NumError> {
    let tweets = toy_corpus();
    let cfg = toy_gen_config(seed);
    let streams: Vec<Vec<String>> = tweets
        .iter()
        .map(|t| {
            let mut toks = t.tokens.clone();
            for h in &t.hashtags {
                toks.extend(h.surface.to_lowercase().split_whitespace().map(str::to_string));
            }
            toks
        })
        .collect();
    let vocab = Vocab::build(streams.iter().map(|v| v.as_slice()), 1);
    let gazetteer = Gazetteer::default();
    let graph = build_graph(&tweets, &gazetteer);
    let mut store = ParamStore::new();
    let bank = crate::tam::build_memory(&tweets, cfg.d, seed, &mut store)?;
    Generator::new(cfg, vocab, bank, graph, gazetteer, store)
}

fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tsr {
    let n: usize = shape.iter().product();
    Tsr::from_vec(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .expect("shape matches")
}

/// Worst relative error over `seeds` accepted draws of `run_one`.
fn sweep(
    label: &str,
    seeds: u64,
    mut run_one: impl FnMut(u64) -> Result<Option<f64>, NumError>,
) -> Result<f64, NumError> {
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut candidate = 0;
    while done < seeds {
        candidate += 1;
        if candidate > seeds * 60 {
            return Err(NumError::Invalid(format!(
                "{label}: too many draws rejected by the kink guard"
            )));
        }
        match run_one(candidate)? {
            None => continue,
            Some(err) => {
                worst = worst.max(err);
                done += 1;
            }
        }
    }
    Ok(worst)
}

fn check_softmax(seeds: u64) -> Result<f64, NumError> {
    sweep("softmax", seeds, |seed| {
        let mut rng = seeded_rng(seed, "check.softmax");
        let params = vec![random_tensor(&[1, 5], &mut rng), random_tensor(&[5, 1], &mut rng)];
        let err = gradient_check(&params, EPS, |_, v| {
            Ok(v[0].softmax(1)?.matmul(v[1])?.sum_all())
        })?;
        Ok(Some(err))
    })
}

fn check_gcn_layer(seeds: u64) -> Result<f64, NumError> {
    sweep("gcn", seeds, |seed| {
        let mut rng = seeded_rng(seed, "check.gcn");
        let mut adj = Tsr::zeros(&[4, 4]);
        for (i, j) in [(0usize, 1usize), (1, 2), (2, 3)] {
            *adj.at_mut(i, j) = 1.0;
            *adj.at_mut(j, i) = 1.0;
        }
        let mut store: ParamStore<Real> = ParamStore::new();
        store.insert("w", xavier_uniform(3, 3, &mut rng))?;
        let h = random_tensor(&[4, 3], &mut rng);
        let adj2 = adj.clone();
        let build = numcore::store_loss(move |ctx, vars: &[numcore::Var<'_, Real>]| {
            Ok(gcn_layer(vars[0], &adj2, ctx.p("w"))?.sum_all())
        });
        if let Some(m) = relu_margin_of_store(&store, &[h.clone()], &build)? {
            if m < MARGIN {
                return Ok(None);
            }
        }
        Ok(Some(gradient_check_store(&store, &[h], EPS, &build)?))
    })
}

fn check_gat_layer(seeds: u64) -> Result<f64, NumError> {
    sweep("gat", seeds, |seed| {
        let mut rng = seeded_rng(seed, "check.gat");
        let mask = Rc::new(BoolMat::new(
            3,
            3,
            vec![true, true, false, true, true, true, false, true, true],
        )?);
        let mut store: ParamStore<Real> = ParamStore::new();
        store.insert("wq", xavier_uniform(3, 3, &mut rng))?;
        store.insert("wk", xavier_uniform(3, 3, &mut rng))?;
        store.insert("w", xavier_uniform(3, 3, &mut rng))?;
        let h = random_tensor(&[3, 3], &mut rng);
        let build = numcore::store_loss(move |ctx, vars: &[numcore::Var<'_, Real>]| {
            Ok(gat_layer(vars[0], &mask, ctx.p("wq"), ctx.p("wk"), ctx.p("w"))?.sum_all())
        });
        if let Some(m) = relu_margin_of_store(&store, &[h.clone()], &build)? {
            if m < MARGIN {
                return Ok(None);
            }
        }
        Ok(Some(gradient_check_store(&store, &[h], EPS, &build)?))
    })
}

fn check_tam_address(seeds: u64) -> Result<f64, NumError> {
    sweep("tam", seeds, |seed| {
        let mut rng = seeded_rng(seed, "check.tam");
        let mut store: ParamStore<Real> = ParamStore::new();
        store.insert("keys", xavier_uniform(4, 3, &mut rng))?;
        store.insert("values", xavier_uniform(4, 3, &mut rng))?;
        let e = random_tensor(&[1, 3], &mut rng);
        let read = random_tensor(&[3, 1], &mut rng);
        let build = numcore::store_loss(move |ctx, vars: &[numcore::Var<'_, Real>]| {
            let (_, o) = address(vars[0], ctx.p("keys"), ctx.p("values"), None)?;
            let w = ctx.constant(read.clone());
            Ok(o.matmul(w)?.sum_all())
        });
        Ok(Some(gradient_check_store(&store, &[e], EPS, &build)?))
    })
}

fn check_encoder_block(seeds: u64) -> Result<f64, NumError> {
    let cfg = StackConfig { d: 4, heads: 2, ff: 8, layers: 1 };
    sweep("encoder", seeds, move |seed| {
        let mut rng = seeded_rng(seed, "check.encoder");
        let mut store: ParamStore<Real> = ParamStore::new();
        init_encoder_stack(&mut store, "enc", &cfg, &mut rng)?;
        let x = random_tensor(&[3, 4], &mut rng);
        // Random readout keeps the loss non-degenerate: with unit layer-norm
        // gain a plain sum of the output is constant in the input.
        let readout = random_tensor(&[3, 4], &mut rng);
        let mask = Rc::new(BoolMat::from_cols(3, &[true, true, true]));
        let build = numcore::store_loss(move |ctx, vars: &[numcore::Var<'_, Real>]| {
            let out = encoder_stack(ctx, "enc", vars[0], &mask, &cfg)?;
            Ok(out.mul(ctx.constant(readout.clone()))?.sum_all())
        });
        if let Some(m) = relu_margin_of_store(&store, &[x.clone()], &build)? {
            if m < MARGIN {
                return Ok(None);
            }
        }
        Ok(Some(gradient_check_store(&store, &[x], EPS, &build)?))
    })
}

fn check_decoder_block(seeds: u64) -> Result<f64, NumError> {
    let cfg = StackConfig { d: 4, heads: 2, ff: 8, layers: 1 };
    sweep("decoder", seeds, move |seed| {
        let mut rng = seeded_rng(seed, "check.decoder");
        let mut store: ParamStore<Real> = ParamStore::new();
        init_decoder_stack(&mut store, "dec", &cfg, &mut rng)?;
        let y = random_tensor(&[3, 4], &mut rng);
        let enc = random_tensor(&[5, 4], &mut rng);
        let readout = random_tensor(&[3, 4], &mut rng);
        let self_mask = Rc::new(BoolMat::causal(3));
        let cross_mask = Rc::new(BoolMat::from_cols(3, &[true, true, true, true, false]));
        let build = numcore::store_loss(move |ctx, vars: &[numcore::Var<'_, Real>]| {
            let out =
                decoder_stack(ctx, "dec", vars[0], vars[1], &self_mask, &cross_mask, &cfg)?;
            Ok(out.mul(ctx.constant(readout.clone()))?.sum_all())
        });
        if let Some(m) = relu_margin_of_store(&store, &[y.clone(), enc.clone()], &build)? {
            if m < MARGIN {
                return Ok(None);
            }
        }
        Ok(Some(gradient_check_store(&store, &[y, enc], EPS, &build)?))
    })
}

fn check_output_head(seeds: u64) -> Result<f64, NumError> {
    sweep("head", seeds, |seed| {
        let mut rng = seeded_rng(seed, "check.head");
        let d = 4;
        let v = 6;
        let mut store: ParamStore<Real> = ParamStore::new();
        store.insert("combine", xavier_uniform(2 * d, d, &mut rng))?;
        store.insert("out", xavier_uniform(d, v, &mut rng))?;
        let states = random_tensor(&[2, d], &mut rng);
        let fused = random_tensor(&[5, d], &mut rng);
        let cols = vec![true, true, true, false, false];
        let build = numcore::store_loss(move |ctx, vars: &[numcore::Var<'_, Real>]| {
            let mask = Rc::new(BoolMat::from_cols(2, &cols));
            let attn = vars[0].matmul(vars[1].transpose()?)?.masked_softmax(mask)?;
            let context = attn.matmul(vars[1])?;
            let combined = ctx.tape().concat(&[vars[0], context], 1)?;
            let logits = combined.matmul(ctx.p("combine"))?.matmul(ctx.p("out"))?;
            logits.cross_entropy_mean(&[1, 3])
        });
        Ok(Some(gradient_check_store(&store, &[states, fused], EPS, &build)?))
    })
}

fn check_hashgen_loss(seeds: u64) -> Result<f64, NumError> {
    let corpus = toy_corpus();
    // Three-token example with an entity and an absent hashtag.
    let tweet = &corpus[3];
    assert_eq!(tweet.tokens.len(), 3);
    sweep("hashgen-e2e", seeds, |seed| {
        let generator = toy_generator(seed)?;
        let build = numcore::store_loss(|ctx, _: &[numcore::Var<'_, Real>]| {
            generator.example_loss(ctx, tweet)
        });
        if let Some(m) = relu_margin_of_store(&generator.store, &[], &build)? {
            if m < MARGIN {
                return Ok(None);
            }
        }
        Ok(Some(gradient_check_store(&generator.store, &[], EPS, &build)?))
    })
}

fn check_classifier_loss(seeds: u64) -> Result<f64, NumError> {
    sweep("classifier-e2e", seeds, |seed| {
        let texts = ["paris visit was #travel fun", "quiet #coffee morning here"];
        let streams: Vec<Vec<String>> = texts.iter().map(|t| crate::corpus::tokenize(t)).collect();
        let vocab = Vocab::build(streams.iter().map(|v| v.as_slice()), 1);
        let cfg = ClfConfig {
            d: 8,
            heads: 2,
            ff: 16,
            layers: 1,
            input_len: 6,
            seed,
            ..ClfConfig::default()
        };
        let clf = Classifier::new(cfg, vocab, vec!["go".into(), "stay".into()])?;
        let example = LabeledText {
            text: texts[0].to_string(),
            label: "go".into(),
        };
        let build = numcore::store_loss(|ctx, _: &[numcore::Var<'_, Real>]| {
            clf.example_loss(ctx, &example)
        });
        if let Some(m) = relu_margin_of_store(&clf.store, &[], &build)? {
            if m < MARGIN {
                return Ok(None);
            }
        }
        Ok(Some(gradient_check_store(&clf.store, &[], EPS, &build)?))
    })
}

/// Run every registered check with `seeds` accepted draws each.
pub fn run_all_checks(seeds: u64) -> Result<Vec<CheckOutcome>, NumError> {
    let items: Vec<(&str, fn(u64) -> Result<f64, NumError>, f64)> = vec![
        ("softmax", check_softmax, SINGLE_LAYER_TOL),
        ("gcn-layer", check_gcn_layer, SINGLE_LAYER_TOL),
        ("gat-layer", check_gat_layer, SINGLE_LAYER_TOL),
        ("tam-addressing", check_tam_address, SINGLE_LAYER_TOL),
        ("encoder-block", check_encoder_block, SINGLE_LAYER_TOL),
        ("decoder-block", check_decoder_block, SINGLE_LAYER_TOL),
        ("output-head", check_output_head, SINGLE_LAYER_TOL),
        ("hashgen-loss", check_hashgen_loss, END_TO_END_TOL),
        ("classifier-loss", check_classifier_loss, END_TO_END_TOL),
    ];
    let mut outcomes = Vec::new();
    for (name, f, tol) in items {
        let worst = f(seeds)?;
        outcomes.push(CheckOutcome {
            name: name.to_string(),
            seeds,
            worst,
            tol,
        });
    }
    Ok(outcomes)
}
