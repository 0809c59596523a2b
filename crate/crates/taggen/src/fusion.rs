//! Templates that combine hashtags with the tweet before classification.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{token_core, HashtagKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    /// Identity on the tweet.
    Without,
    /// Reattach `#` to the in-text word for present hashtags; append absent
    /// ones (with `#`) at the end.
    Standard,
    /// Hashtags concatenated before the tweet.
    Start,
    /// Hashtags concatenated after the tweet.
    End,
}

impl FromStr for FusionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "without" => Ok(Self::Without),
            "standard" => Ok(Self::Standard),
            "start" => Ok(Self::Start),
            "end" => Ok(Self::End),
            other => Err(format!(
                "unknown fusion method `{other}` (expected without|standard|start|end)"
            )),
        }
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Without => "without",
            Self::Standard => "standard",
            Self::Start => "start",
            Self::End => "end",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedInput {
    pub tweet_id: String,
    pub text: String,
    pub method: FusionMethod,
    pub hashtags: Vec<String>,
}

/// Apply the fusion template. An empty hashtag list leaves the tweet
/// unchanged under every method.
pub fn fuse(
    tweet_id: &str,
    hashtags: &[(String, HashtagKind)],
    processed: &str,
    method: FusionMethod,
) -> FusedInput {
    let surfaces: Vec<String> = hashtags.iter().map(|(s, _)| s.clone()).collect();
    let text = if hashtags.is_empty() {
        processed.to_string()
    } else {
        match method {
            FusionMethod::Without => processed.to_string(),
            FusionMethod::Start => format!("{} {}", surfaces.join(" "), processed),
            FusionMethod::End => format!("{} {}", processed, surfaces.join(" ")),
            FusionMethod::Standard => standard_fuse(hashtags, processed),
        }
    };
    FusedInput {
        tweet_id: tweet_id.to_string(),
        text: text.trim().to_string(),
        method,
        hashtags: surfaces,
    }
}

/// Present hashtags get `#` reattached to the first case-insensitive token
/// match (later duplicates untouched); absent or multi-token surfaces are
/// appended with `#` at the end, in order.
fn standard_fuse(hashtags: &[(String, HashtagKind)], processed: &str) -> String {
    let mut tokens: Vec<String> = processed.split_whitespace().map(str::to_string).collect();
    let mut appended: Vec<String> = Vec::new();
    for (surface, kind) in hashtags {
        let single_word = surface.split_whitespace().count() == 1;
        let mut attached = false;
        if *kind == HashtagKind::Present && single_word {
            let want = token_core(surface).to_lowercase();
            for tok in tokens.iter_mut() {
                if !tok.starts_with('#') && token_core(tok).to_lowercase() == want {
                    *tok = format!("#{tok}");
                    attached = true;
                    break;
                }
            }
        }
        if !attached {
            appended.push(format!("#{surface}"));
        }
    }
    let mut out = tokens.join(" ");
    if !appended.is_empty() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&appended.join(" "));
    }
    out
}
