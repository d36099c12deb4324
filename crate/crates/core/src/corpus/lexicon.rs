use std::collections::HashSet;
use std::path::Path;

use crate::wordlist::{self, parse_words};
use crate::Result;

/// Noun lexicon plus the stop-noun exclusion list.
///
/// A token is a source-word candidate when it is in the lexicon and not in
/// the stop list. Stop nouns are nouns whose replacement would not change
/// the meaning of a caption much ("a row of ...", "a group of ...").
#[derive(Debug, Clone)]
pub struct NounLexicon {
    nouns: HashSet<String>,
    stop_nouns: HashSet<String>,
}

impl NounLexicon {
    pub fn new(nouns: impl IntoIterator<Item = String>, stop_nouns: impl IntoIterator<Item = String>) -> Self {
        NounLexicon {
            nouns: nouns.into_iter().map(|w| w.to_lowercase()).collect(),
            stop_nouns: stop_nouns.into_iter().map(|w| w.to_lowercase()).collect(),
        }
    }

    /// The lexicon and stop list shipped with the crate.
    pub fn shipped() -> Self {
        Self::new(
            parse_words(wordlist::SHIPPED_NOUNS),
            parse_words(wordlist::SHIPPED_STOP_NOUNS),
        )
    }

    /// Loads from files; `None` falls back to the shipped list for that part.
    pub fn load(nouns: Option<&Path>, stop_nouns: Option<&Path>) -> Result<Self> {
        let nouns = match nouns {
            Some(p) => parse_words(&wordlist::read_to_string(p)?),
            None => parse_words(wordlist::SHIPPED_NOUNS),
        };
        let stop = match stop_nouns {
            Some(p) => parse_words(&wordlist::read_to_string(p)?),
            None => parse_words(wordlist::SHIPPED_STOP_NOUNS),
        };
        Ok(Self::new(nouns, stop))
    }

    pub fn is_noun(&self, word: &str) -> bool {
        self.nouns.contains(word)
    }

    pub fn is_stop_noun(&self, word: &str) -> bool {
        self.stop_nouns.contains(word)
    }

    pub fn len(&self) -> usize {
        self.nouns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nouns.is_empty()
    }
}

/// Indices of eligible source nouns in `tokens`, strictly increasing.
pub fn tag_nouns(tokens: &[String], lexicon: &NounLexicon) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| lexicon.is_noun(t) && !lexicon.is_stop_noun(t))
        .map(|(i, _)| i)
        .collect()
}
