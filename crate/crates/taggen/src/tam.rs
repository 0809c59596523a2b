//! Corpus-level tweet attention: a key/value memory with one row per tweet
//! in the train+val collection, addressed by a query encoding to produce a
//! latent-topic vector.
//!
//! Keys and values start from a deterministic feature-hash bag-of-words
//! projection of each tweet's content (similar tweets start with similar
//! rows) and are trained jointly with the generator. The query is the mean
//! of the model's own token embeddings.

use std::rc::Rc;

use numcore::init::{hashed_bow, stream_seed};
use numcore::tensor::BoolMat;
use numcore::{Bind, NumError, ParamStore, Var};

use crate::corpus::Tweet;
use crate::{Real, Tsr};

pub const KEYS: &str = "tam.keys";
pub const VALUES: &str = "tam.values";
pub const IDS_META: &str = "tam.ids";

/// Ordered tweet ids backing the memory rows; the trainable matrices live in
/// the parameter store under [`KEYS`] and [`VALUES`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MemoryBank {
    ids: Vec<String>,
}

impl MemoryBank {
    pub fn from_ids(ids: Vec<String>) -> Self {
        Self { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, tweet_id: &str) -> Option<usize> {
        self.ids.iter().position(|id| id == tweet_id)
    }
}

/// Build one (key, value) row per tweet, deterministically initialized from
/// tweet content, and register both matrices as trainable parameters.
pub fn build_memory(
    tweets: &[Tweet],
    d: usize,
    seed: u64,
    store: &mut ParamStore<Real>,
) -> Result<MemoryBank, NumError> {
    if tweets.is_empty() {
        return Err(NumError::Empty { op: "build_memory" });
    }
    let key_salt = stream_seed(seed, "tam.keys");
    let value_salt = stream_seed(seed, "tam.values");
    let l = tweets.len();
    let mut keys = Tsr::zeros(&[l, d]);
    let mut values = Tsr::zeros(&[l, d]);
    let mut ids = Vec::with_capacity(l);
    for (row, tweet) in tweets.iter().enumerate() {
        ids.push(tweet.id.clone());
        let k: Tsr = hashed_bow(&tweet.tokens, d, key_salt);
        let v: Tsr = hashed_bow(&tweet.tokens, d, value_salt);
        for j in 0..d {
            *keys.at_mut(row, j) = k.data()[j];
            *values.at_mut(row, j) = v.data()[j];
        }
    }
    store.insert(KEYS, keys)?;
    store.insert(VALUES, values)?;
    Ok(MemoryBank { ids })
}

/// Mean of the token embeddings as a `[1, d]` query. Empty token sequences
/// produce a zero vector with a warning.
pub fn query_encoding<'t>(
    ctx: &Bind<'t, Real>,
    embed_param: &str,
    token_ids: &[usize],
    d: usize,
) -> Result<Var<'t, Real>, NumError> {
    if token_ids.is_empty() {
        log::warn!("query encoding over empty token sequence; using zero vector");
        return Ok(ctx.constant(Tsr::zeros(&[1, d])));
    }
    let table = ctx.p(embed_param);
    table.embedding(token_ids)?.mean_axis0()?.reshape(&[1, d])
}

/// Addressing: `p = softmax(e . u_k)` over memory rows, `o = sum_k p_k v_k`.
/// Returns `(p, o)` with `p` of shape `[1, l]` and `o` of shape `[1, d]`.
/// `exclude` masks one row out of the softmax (self-exclusion ablation).
pub fn address<'t>(
    e: Var<'t, Real>,
    keys: Var<'t, Real>,
    values: Var<'t, Real>,
    exclude: Option<usize>,
) -> Result<(Var<'t, Real>, Var<'t, Real>), NumError> {
    let logits = e.matmul(keys.transpose()?)?;
    let p = match exclude {
        None => logits.softmax(1)?,
        Some(skip) => {
            let l = logits.shape()[1];
            let allowed: Vec<bool> = (0..l).map(|k| k != skip).collect();
            logits.masked_softmax(Rc::new(BoolMat::from_cols(1, &allowed)))?
        }
    };
    let o = p.matmul(values)?;
    Ok((p, o))
}
