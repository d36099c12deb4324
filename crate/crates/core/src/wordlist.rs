//! Plain-text word list helpers and the word lists shipped with the crate.

use std::path::Path;

use crate::{Error, Result};

pub const SHIPPED_NOUNS: &str = include_str!("../data/nouns.txt");
pub const SHIPPED_STOP_NOUNS: &str = include_str!("../data/stop_nouns.txt");
pub const SHIPPED_CONCEPT_GROUPS: &str = include_str!("../data/concept_groups.tsv");
pub const SHIPPED_SYNONYMS: &str = include_str!("../data/synonyms.tsv");
pub const SHIPPED_VOCAB: &str = include_str!("../data/vocab.txt");
pub const SHIPPED_DANGER: &str = include_str!("../data/danger.txt");

/// Content lines of a list file: trimmed, with blank lines and `#` comments removed.
pub fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
}

/// One lowercase word per content line.
pub fn parse_words(text: &str) -> Vec<String> {
    content_lines(text).map(str::to_lowercase).collect()
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// True when `word` is non-empty and made only of ASCII lowercase letters.
pub fn is_letter_word(word: &str) -> bool {
    !word.is_empty() && word.bytes().all(|b| b.is_ascii_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blanks_are_skipped() {
        let words = parse_words("# header\n\nGun\n  knife \n#x\n");
        assert_eq!(words, ["gun", "knife"]);
    }

    #[test]
    fn letter_words() {
        assert!(is_letter_word("umbrella"));
        assert!(!is_letter_word("don't"));
        assert!(!is_letter_word("Gun"));
        assert!(!is_letter_word(""));
    }
}
