//! Splitting long articles into context-sized pieces.
//!
//! Tokens are approximated by whitespace-delimited words.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Upper bound on segments sent for one article.
pub const MAX_SAMPLED_SEGMENTS: usize = 10;

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Contiguous slices of `text` with at most `max_tokens` words each.
/// Concatenating them gives back `text` exactly.
pub fn split_segments(text: &str, max_tokens: usize) -> Vec<&str> {
    assert!(max_tokens > 0, "max_tokens must be positive");
    let mut word_starts = Vec::new();
    let mut prev_ws = true;
    for (i, c) in text.char_indices() {
        let ws = c.is_whitespace();
        if prev_ws && !ws {
            word_starts.push(i);
        }
        prev_ws = ws;
    }
    let mut bounds: Vec<usize> = word_starts
        .iter()
        .step_by(max_tokens)
        .skip(1)
        .copied()
        .collect();
    bounds.insert(0, 0);
    bounds.push(text.len());
    bounds.windows(2).map(|w| &text[w[0]..w[1]]).collect()
}

/// Splits `text` and, when there are more than [`MAX_SAMPLED_SEGMENTS`]
/// pieces, keeps a seeded random subset of that size in original order.
pub fn segment_article(text: &str, max_tokens: usize, seed: u64) -> Vec<String> {
    let segments = split_segments(text, max_tokens);
    if segments.len() <= MAX_SAMPLED_SEGMENTS {
        return segments.into_iter().map(str::to_string).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::fork(seed, text));
    let mut picked = rand::seq::index::sample(&mut rng, segments.len(), MAX_SAMPLED_SEGMENTS).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| segments[i].to_string()).collect()
}
