//! Transformer building blocks shared by the generator and the classifier.
//!
//! Pre-norm blocks; multi-head attention keeps one projection triple per
//! head so everything stays rank-2 on the tape. Parameters are addressed by
//! name: `{prefix}.l{i}.attn.q0`, `{prefix}.l{i}.ff.w1`, and so on.

use std::rc::Rc;

use numcore::init::xavier_uniform;
use numcore::tensor::BoolMat;
use numcore::{Bind, NumError, ParamStore, Var};
use rand::Rng;

use crate::{Real, Tsr};

pub const LN_EPS: Real = 1e-5;

#[derive(Clone, Copy, Debug)]
pub struct StackConfig {
    pub d: usize,
    pub heads: usize,
    pub ff: usize,
    pub layers: usize,
}

pub fn init_linear(
    store: &mut ParamStore<Real>,
    name: &str,
    d_in: usize,
    d_out: usize,
    rng: &mut impl Rng,
) -> Result<(), NumError> {
    store.insert(format!("{name}.w"), xavier_uniform(d_in, d_out, rng))?;
    store.insert(format!("{name}.b"), Tsr::zeros(&[d_out]))?;
    Ok(())
}

pub fn linear<'t>(ctx: &Bind<'t, Real>, name: &str, x: Var<'t, Real>) -> Result<Var<'t, Real>, NumError> {
    x.matmul(ctx.p(&format!("{name}.w")))?
        .add_row(ctx.p(&format!("{name}.b")))
}

pub fn init_layer_norm(store: &mut ParamStore<Real>, name: &str, d: usize) -> Result<(), NumError> {
    store.insert(format!("{name}.gain"), Tsr::filled(&[d], 1.0))?;
    store.insert(format!("{name}.bias"), Tsr::zeros(&[d]))?;
    Ok(())
}

pub fn layer_norm<'t>(
    ctx: &Bind<'t, Real>,
    name: &str,
    x: Var<'t, Real>,
) -> Result<Var<'t, Real>, NumError> {
    x.layer_norm(
        ctx.p(&format!("{name}.gain")),
        ctx.p(&format!("{name}.bias")),
        LN_EPS,
    )
}

pub fn init_attention(
    store: &mut ParamStore<Real>,
    prefix: &str,
    d: usize,
    heads: usize,
    rng: &mut impl Rng,
) -> Result<(), NumError> {
    assert!(d % heads == 0, "hidden size must divide into heads");
    let dh = d / heads;
    for h in 0..heads {
        store.insert(format!("{prefix}.q{h}"), xavier_uniform(d, dh, rng))?;
        store.insert(format!("{prefix}.k{h}"), xavier_uniform(d, dh, rng))?;
        store.insert(format!("{prefix}.v{h}"), xavier_uniform(d, dh, rng))?;
    }
    init_linear(store, &format!("{prefix}.o"), d, d, rng)
}

/// Scaled dot-product attention; `mask` restricts which key positions each
/// query row may attend to. Returns `[rows(q_in), d]`.
pub fn attention<'t>(
    ctx: &Bind<'t, Real>,
    prefix: &str,
    q_in: Var<'t, Real>,
    kv_in: Var<'t, Real>,
    mask: &Rc<BoolMat>,
    heads: usize,
) -> Result<Var<'t, Real>, NumError> {
    let d = q_in.shape()[1];
    let dh = d / heads;
    let scale = 1.0 / (dh as Real).sqrt();
    let mut per_head = Vec::with_capacity(heads);
    for h in 0..heads {
        let q = q_in.matmul(ctx.p(&format!("{prefix}.q{h}")))?;
        let k = kv_in.matmul(ctx.p(&format!("{prefix}.k{h}")))?;
        let v = kv_in.matmul(ctx.p(&format!("{prefix}.v{h}")))?;
        let scores = q.matmul(k.transpose()?)?.scale(scale);
        let probs = scores.masked_softmax(Rc::clone(mask))?;
        per_head.push(probs.matmul(v)?);
    }
    let joined = ctx.tape().concat(&per_head, 1)?;
    linear(ctx, &format!("{prefix}.o"), joined)
}

/// Attention probabilities of head 0, for normalization checks.
pub fn attention_probs<'t>(
    ctx: &Bind<'t, Real>,
    prefix: &str,
    q_in: Var<'t, Real>,
    kv_in: Var<'t, Real>,
    mask: &Rc<BoolMat>,
    heads: usize,
) -> Result<Var<'t, Real>, NumError> {
    let d = q_in.shape()[1];
    let dh = d / heads;
    let scale = 1.0 / (dh as Real).sqrt();
    let q = q_in.matmul(ctx.p(&format!("{prefix}.q0")))?;
    let k = kv_in.matmul(ctx.p(&format!("{prefix}.k0")))?;
    q.matmul(k.transpose()?)?.scale(scale).masked_softmax(Rc::clone(mask))
}

pub fn init_ff(
    store: &mut ParamStore<Real>,
    prefix: &str,
    d: usize,
    ff: usize,
    rng: &mut impl Rng,
) -> Result<(), NumError> {
    init_linear(store, &format!("{prefix}.w1"), d, ff, rng)?;
    init_linear(store, &format!("{prefix}.w2"), ff, d, rng)
}

pub fn feed_forward<'t>(
    ctx: &Bind<'t, Real>,
    prefix: &str,
    x: Var<'t, Real>,
) -> Result<Var<'t, Real>, NumError> {
    let hidden = linear(ctx, &format!("{prefix}.w1"), x)?.relu();
    linear(ctx, &format!("{prefix}.w2"), hidden)
}

pub fn init_encoder_stack(
    store: &mut ParamStore<Real>,
    prefix: &str,
    cfg: &StackConfig,
    rng: &mut impl Rng,
) -> Result<(), NumError> {
    for l in 0..cfg.layers {
        let base = format!("{prefix}.l{l}");
        init_layer_norm(store, &format!("{base}.ln1"), cfg.d)?;
        init_attention(store, &format!("{base}.attn"), cfg.d, cfg.heads, rng)?;
        init_layer_norm(store, &format!("{base}.ln2"), cfg.d)?;
        init_ff(store, &format!("{base}.ff"), cfg.d, cfg.ff, rng)?;
    }
    init_layer_norm(store, &format!("{prefix}.ln_out"), cfg.d)
}

/// Pre-norm encoder: `x + attn(ln1(x))`, then `x + ff(ln2(x))`, with a final
/// layer norm. `mask` restricts attention to non-pad columns.
pub fn encoder_stack<'t>(
    ctx: &Bind<'t, Real>,
    prefix: &str,
    mut x: Var<'t, Real>,
    mask: &Rc<BoolMat>,
    cfg: &StackConfig,
) -> Result<Var<'t, Real>, NumError> {
    for l in 0..cfg.layers {
        let base = format!("{prefix}.l{l}");
        let normed = layer_norm(ctx, &format!("{base}.ln1"), x)?;
        let attended = attention(ctx, &format!("{base}.attn"), normed, normed, mask, cfg.heads)?;
        x = x.add(attended)?;
        let normed = layer_norm(ctx, &format!("{base}.ln2"), x)?;
        let ffed = feed_forward(ctx, &format!("{base}.ff"), normed)?;
        x = x.add(ffed)?;
    }
    layer_norm(ctx, &format!("{prefix}.ln_out"), x)
}

pub fn init_decoder_stack(
    store: &mut ParamStore<Real>,
    prefix: &str,
    cfg: &StackConfig,
    rng: &mut impl Rng,
) -> Result<(), NumError> {
    for l in 0..cfg.layers {
        let base = format!("{prefix}.l{l}");
        init_layer_norm(store, &format!("{base}.ln1"), cfg.d)?;
        init_attention(store, &format!("{base}.self_attn"), cfg.d, cfg.heads, rng)?;
        init_layer_norm(store, &format!("{base}.ln2"), cfg.d)?;
        init_attention(store, &format!("{base}.cross_attn"), cfg.d, cfg.heads, rng)?;
        init_layer_norm(store, &format!("{base}.ln3"), cfg.d)?;
        init_ff(store, &format!("{base}.ff"), cfg.d, cfg.ff, rng)?;
    }
    init_layer_norm(store, &format!("{prefix}.ln_out"), cfg.d)
}

/// Pre-norm decoder: causal self-attention, cross-attention over the encoder
/// states, feed-forward; final layer norm gives the decoder states.
pub fn decoder_stack<'t>(
    ctx: &Bind<'t, Real>,
    prefix: &str,
    mut y: Var<'t, Real>,
    enc: Var<'t, Real>,
    self_mask: &Rc<BoolMat>,
    cross_mask: &Rc<BoolMat>,
    cfg: &StackConfig,
) -> Result<Var<'t, Real>, NumError> {
    for l in 0..cfg.layers {
        let base = format!("{prefix}.l{l}");
        let normed = layer_norm(ctx, &format!("{base}.ln1"), y)?;
        let attended = attention(ctx, &format!("{base}.self_attn"), normed, normed, self_mask, cfg.heads)?;
        y = y.add(attended)?;
        let normed = layer_norm(ctx, &format!("{base}.ln2"), y)?;
        let crossed = attention(ctx, &format!("{base}.cross_attn"), normed, enc, cross_mask, cfg.heads)?;
        y = y.add(crossed)?;
        let normed = layer_norm(ctx, &format!("{base}.ln3"), y)?;
        let ffed = feed_forward(ctx, &format!("{base}.ff"), normed)?;
        y = y.add(ffed)?;
    }
    layer_norm(ctx, &format!("{prefix}.ln_out"), y)
}
