//! Caption tokenization.
//!
//! Text is split on whitespace; leading and trailing punctuation of every
//! chunk is split off into separate non-word pieces, while interior
//! apostrophes and hyphens stay inside the word. Word pieces are lowercased
//! for the token list, but the original surface form is kept so captions
//! can be re-rendered after a word is removed or replaced.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceKind {
    Word,
    Punct,
}

/// One word or punctuation run of a caption, with its original surface form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub surface: String,
    pub kind: PieceKind,
    /// Whether whitespace preceded this piece in the source text.
    pub spaced: bool,
}

impl Piece {
    fn new(surface: &str, kind: PieceKind, spaced: bool) -> Self {
        Piece {
            surface: surface.to_string(),
            kind,
            spaced,
        }
    }

    pub fn is_word(&self) -> bool {
        self.kind == PieceKind::Word
    }
}

fn is_edge_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Splits `text` into word and punctuation pieces.
pub fn segment(text: &str) -> Vec<Piece> {
    let mut pieces = Vec::new();
    for chunk in text.split_whitespace() {
        let core_start = chunk
            .char_indices()
            .find(|&(_, c)| !is_edge_punct(c))
            .map(|(i, _)| i);
        let Some(core_start) = core_start else {
            pieces.push(Piece::new(chunk, PieceKind::Punct, true));
            continue;
        };
        let core_end = chunk
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_edge_punct(c))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(chunk.len());

        let mut spaced = true;
        if core_start > 0 {
            pieces.push(Piece::new(&chunk[..core_start], PieceKind::Punct, true));
            spaced = false;
        }
        pieces.push(Piece::new(&chunk[core_start..core_end], PieceKind::Word, spaced));
        if core_end < chunk.len() {
            pieces.push(Piece::new(&chunk[core_end..], PieceKind::Punct, false));
        }
    }
    pieces
}

/// Lowercased word tokens of `text`; punctuation is not part of the word list.
pub fn tokenize(text: &str) -> Vec<String> {
    segment(text)
        .into_iter()
        .filter(Piece::is_word)
        .map(|p| p.surface.to_lowercase())
        .collect()
}

pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}

/// Canonical whitespace form of a caption: its tokens joined by single spaces.
pub fn canonical_form(text: &str) -> String {
    detokenize(&tokenize(text))
}

/// Renders pieces back to text with single spaces between spaced pieces.
pub fn render<'a>(pieces: impl IntoIterator<Item = &'a Piece>) -> String {
    let mut out = String::new();
    for piece in pieces {
        if !out.is_empty() && piece.spaced {
            out.push(' ');
        }
        out.push_str(&piece.surface);
    }
    out
}
