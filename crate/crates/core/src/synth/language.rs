//! Pseudo-languages: seeded word-substitution ciphers over template vocabulary.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::encoder::hash_ngram;

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "th", "kr", "pl"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

pub(crate) fn syllable_word(rng: &mut impl Rng, min: usize, max: usize) -> String {
    let n = rng.random_range(min..=max);
    (0..n)
        .map(|_| {
            let onset = ONSETS[rng.random_range(0..ONSETS.len())];
            let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
            format!("{onset}{vowel}")
        })
        .collect()
}

fn is_placeholder(token: &str) -> bool {
    token.starts_with('{') && token.ends_with('}')
}

/// Splits a whitespace token into leading punctuation, core, trailing punctuation.
fn split_token(token: &str) -> (&str, &str, &str) {
    if is_placeholder(token.trim_matches(|c: char| c.is_ascii_punctuation() && c != '{' && c != '}')) {
        let start = token.find('{').unwrap_or(0);
        let end = token.rfind('}').map_or(token.len(), |i| i + 1);
        return (&token[..start], &token[start..end], &token[end..]);
    }
    let start = token.find(|c: char| !c.is_ascii_punctuation()).unwrap_or(token.len());
    let end = token
        .rfind(|c: char| !c.is_ascii_punctuation())
        .map_or(start, |i| i + token[i..].chars().next().map_or(1, char::len_utf8));
    (&token[..start], &token[start..end], &token[end..])
}

/// Bijective English-word to cipher-word map. Placeholders and punctuation
/// pass through unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLanguage {
    pub tag: String,
    pub lexicon: BTreeMap<String, String>,
    #[serde(skip)]
    inverse: BTreeMap<String, String>,
}

impl PseudoLanguage {
    /// Builds the cipher for `vocabulary`, deterministic in `(seed, tag)`.
    /// Cipher words never coincide with a source word or with each other.
    pub fn new<'a>(tag: &str, vocabulary: impl IntoIterator<Item = &'a str>, seed: u64) -> Self {
        let source: BTreeSet<String> = vocabulary.into_iter().map(str::to_string).collect();
        let lowered: BTreeSet<String> = source.iter().map(|w| w.to_lowercase()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ hash_ngram(tag.as_bytes(), 0x7a6));
        let mut lexicon = BTreeMap::new();
        let mut taken: BTreeSet<String> = BTreeSet::new();
        for word in &source {
            let cipher = loop {
                let candidate = syllable_word(&mut rng, 1, 3);
                if !lowered.contains(&candidate) && taken.insert(candidate.clone()) {
                    break candidate;
                }
            };
            lexicon.insert(word.clone(), cipher);
        }
        Self::from_lexicon(tag, lexicon)
    }

    fn from_lexicon(tag: &str, lexicon: BTreeMap<String, String>) -> Self {
        let inverse = lexicon.iter().map(|(k, v)| (v.clone(), k.clone())).collect();
        Self {
            tag: tag.to_string(),
            lexicon,
            inverse,
        }
    }

    /// Restores the inverse map after deserialization.
    pub fn rebuild(self) -> Self {
        Self::from_lexicon(&self.tag, self.lexicon)
    }

    fn map_words(text: &str, map: &BTreeMap<String, String>) -> Result<String, SynthError> {
        let mut out = Vec::new();
        for token in text.split_whitespace() {
            let (lead, core, trail) = split_token(token);
            let mapped = if core.is_empty() || is_placeholder(core) {
                core.to_string()
            } else {
                map.get(core)
                    .cloned()
                    .ok_or_else(|| SynthError::UnknownWord(core.to_string()))?
            };
            out.push(format!("{lead}{mapped}{trail}"));
        }
        Ok(out.join(" "))
    }

    pub fn translate(&self, text: &str) -> Result<String, SynthError> {
        Self::map_words(text, &self.lexicon)
    }

    pub fn invert(&self, text: &str) -> Result<String, SynthError> {
        Self::map_words(text, &self.inverse)
    }
}
