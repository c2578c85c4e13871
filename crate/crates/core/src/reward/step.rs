//! Stage-wise reasoning similarity.
//!
//! A reasoning trace is split into observation, reasoning and action
//! segments at keyword anchors ("therefore"/"because" start the reasoning
//! stage, "I will"/"action" start the action stage). Traces without both
//! anchors in that order fall back to equal thirds by token count.

use std::sync::LazyLock;

use regex::Regex;

use crate::judge::normalize_text;

static REASON_ANCHOR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(therefore|because|thus|so that)\b").expect("valid regex"));
static ACTION_ANCHOR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(i will|i'll|action)\b").expect("valid regex"));

/// Maps text to an embedding vector. Cosine similarity is taken between
/// the vectors, so they need not be normalized.
pub trait Embedder {
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// L2-normalized bag-of-words counts, hashed (FNV-1a) into `dim` buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenCountEmbedder {
    pub dim: usize,
}

impl Default for TokenCountEmbedder {
    fn default() -> Self {
        Self { dim: 4096 }
    }
}

impl TokenCountEmbedder {
    pub fn bucket(&self, token: &str) -> usize {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in token.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        (h % self.dim as u64) as usize
    }
}

impl Embedder for TokenCountEmbedder {
    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in normalize_text(text).split_whitespace() {
            v[self.bucket(token)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    pub observation: String,
    pub reasoning: String,
    pub action: String,
}

impl Segments {
    pub fn as_array(&self) -> [&str; 3] {
        [&self.observation, &self.reasoning, &self.action]
    }
}

pub fn segment_reasoning(text: &str) -> Segments {
    let reason = REASON_ANCHOR.find(text).map(|m| m.start());
    let action = reason.and_then(|r| ACTION_ANCHOR.find_at(text, r).map(|m| m.start()));
    if let (Some(r), Some(a)) = (reason, action) {
        if r < a {
            return Segments {
                observation: text[..r].trim().to_owned(),
                reasoning: text[r..a].trim().to_owned(),
                action: text[a..].trim().to_owned(),
            };
        }
    }
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let n = tokens.len();
    let (c1, c2) = (n.div_ceil(3), (2 * n).div_ceil(3));
    Segments {
        observation: tokens[..c1].join(" "),
        reasoning: tokens[c1..c2].join(" "),
        action: tokens[c2..].join(" "),
    }
}

/// `sum_k beta_k * cos(e_k(clean), e_k(pert))` over the three stages,
/// clamped to `[0, 1]`. Identical stage texts (including two empty stages)
/// score exactly 1.
pub fn step_level_reward<E: Embedder + ?Sized>(
    clean: &str,
    pert: &str,
    embedder: &E,
    betas: [f64; 3],
) -> f64 {
    let c = segment_reasoning(clean);
    let p = segment_reasoning(pert);
    let total: f64 = c
        .as_array()
        .iter()
        .zip(p.as_array())
        .zip(betas)
        .map(|((a, b), beta)| {
            let sim = if *a == b { 1.0 } else { cosine(&embedder.embed(a), &embedder.embed(b)) };
            beta * sim
        })
        .sum();
    total.clamp(0.0, 1.0)
}
