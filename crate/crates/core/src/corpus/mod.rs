//! COCO-style test split ingestion, tokenization and noun tagging.

mod karpathy;
mod lexicon;
mod tokenize;

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use karpathy::{load_karpathy_split, IngestOptions, Split};
pub use lexicon::{tag_nouns, NounLexicon};
pub use tokenize::{canonical_form, detokenize, render, segment, tokenize, Piece, PieceKind};

/// Captions per image under the COCO 5K protocol.
pub const CAPTIONS_PER_IMAGE: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    /// Path relative to the image root.
    pub file_path: String,
    pub caption_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub caption_id: String,
    pub image_id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub noun_indices: Vec<usize>,
}

impl CaptionRecord {
    /// Builds a record from raw text, tokenizing and tagging it.
    pub fn from_text(caption_id: impl Into<String>, image_id: impl Into<String>, text: impl Into<String>, lexicon: &NounLexicon) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        let noun_indices = tag_nouns(&tokens, lexicon);
        CaptionRecord {
            caption_id: caption_id.into(),
            image_id: image_id.into(),
            text,
            tokens,
            noun_indices,
        }
    }

    /// Pieces used to re-render the caption after an edit.
    ///
    /// When the stored tokens disagree with the raw text (trusted external
    /// tokens), the tokens themselves become the pieces.
    pub fn pieces(&self) -> Vec<Piece> {
        let pieces = segment(&self.text);
        let words = pieces.iter().filter(|p| p.is_word());
        let aligned = words.clone().count() == self.tokens.len()
            && words.zip(&self.tokens).all(|(p, t)| p.surface.to_lowercase() == *t);
        if aligned {
            return pieces;
        }
        self.tokens
            .iter()
            .map(|t| Piece {
                surface: t.clone(),
                kind: PieceKind::Word,
                spaced: true,
            })
            .collect()
    }

    /// The caption rendered from its pieces (single-spaced).
    pub fn rendered(&self) -> String {
        render(&self.pieces())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CorpusHeader {
    format: String,
    version: u32,
    split: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CorpusLine {
    image_id: String,
    file_path: String,
    captions: Vec<CaptionLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CaptionLine {
    caption_id: String,
    text: String,
    tokens: Vec<String>,
    noun_indices: Vec<usize>,
}

const CORPUS_FORMAT: &str = "rocoforge-corpus";

/// An immutable test split: images in file order and their captions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub split_name: String,
    pub images: Vec<ImageRecord>,
    pub captions: BTreeMap<String, CaptionRecord>,
}

impl Corpus {
    /// Assembles a corpus and checks its invariants.
    pub fn new(split_name: impl Into<String>, images: Vec<ImageRecord>, captions: Vec<CaptionRecord>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for caption in captions {
            let id = caption.caption_id.clone();
            if map.insert(id.clone(), caption).is_some() {
                return Err(Error::Validation {
                    id,
                    reason: "duplicate caption id".into(),
                });
            }
        }
        let corpus = Corpus {
            split_name: split_name.into(),
            images,
            captions: map,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        let mut image_ids = HashSet::new();
        let mut referenced = 0usize;
        for image in &self.images {
            if !image_ids.insert(image.image_id.as_str()) {
                return Err(Error::Validation {
                    id: image.image_id.clone(),
                    reason: "duplicate image id".into(),
                });
            }
            if image.caption_ids.len() != CAPTIONS_PER_IMAGE {
                return Err(Error::Validation {
                    id: image.image_id.clone(),
                    reason: format!("expected {CAPTIONS_PER_IMAGE} captions, found {}", image.caption_ids.len()),
                });
            }
            for cid in &image.caption_ids {
                let caption = self.captions.get(cid).ok_or_else(|| Error::Validation {
                    id: image.image_id.clone(),
                    reason: format!("caption {cid} is missing"),
                })?;
                if caption.image_id != image.image_id {
                    return Err(Error::Validation {
                        id: cid.clone(),
                        reason: format!("owned by {} but listed under {}", caption.image_id, image.image_id),
                    });
                }
                referenced += 1;
            }
        }
        if referenced != self.captions.len() {
            return Err(Error::Validation {
                id: self.split_name.clone(),
                reason: format!("{} orphan captions", self.captions.len().saturating_sub(referenced)),
            });
        }
        for caption in self.captions.values() {
            let n = caption.tokens.len();
            let sorted = caption.noun_indices.windows(2).all(|w| w[0] < w[1]);
            if !sorted || caption.noun_indices.iter().any(|&i| i >= n) {
                return Err(Error::Validation {
                    id: caption.caption_id.clone(),
                    reason: "noun indices must be strictly increasing and within the token list".into(),
                });
            }
        }
        Ok(())
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.image_id == image_id)
    }

    pub fn caption(&self, caption_id: &str) -> Option<&CaptionRecord> {
        self.captions.get(caption_id)
    }

    /// Captions in corpus order: image order, then caption order within an image.
    pub fn captions_in_order(&self) -> impl Iterator<Item = &CaptionRecord> + '_ {
        self.images
            .iter()
            .flat_map(|img| img.caption_ids.iter())
            .map(|cid| &self.captions[cid])
    }

    pub fn caption_count(&self) -> usize {
        self.captions.len()
    }

    /// Writes the internal JSONL format: a header line, then one line per image.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        let header = CorpusHeader {
            format: CORPUS_FORMAT.into(),
            version: 1,
            split: self.split_name.clone(),
        };
        let io = |e| Error::io("<corpus>", e);
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n").map_err(io)?;
        for image in &self.images {
            let line = CorpusLine {
                image_id: image.image_id.clone(),
                file_path: image.file_path.clone(),
                captions: image
                    .caption_ids
                    .iter()
                    .map(|cid| {
                        let c = &self.captions[cid];
                        CaptionLine {
                            caption_id: c.caption_id.clone(),
                            text: c.text.clone(),
                            tokens: c.tokens.clone(),
                            noun_indices: c.noun_indices.clone(),
                        }
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n").map_err(io)?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead, source: &Path) -> Result<Self> {
        let mut lines = input.lines();
        let header_line = match lines.next() {
            Some(line) => line.map_err(|e| Error::io(source, e))?,
            None => {
                return Err(Error::Validation {
                    id: source.display().to_string(),
                    reason: "empty corpus file".into(),
                })
            }
        };
        let header: CorpusHeader =
            serde_json::from_str(&header_line).map_err(|e| Error::parse(source, &header_line, e))?;
        if header.format != CORPUS_FORMAT {
            return Err(Error::Validation {
                id: source.display().to_string(),
                reason: format!("unknown corpus format {:?}", header.format),
            });
        }
        let mut images = Vec::new();
        let mut captions = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CorpusLine = serde_json::from_str(&line).map_err(|e| Error::parse(source, &line, e))?;
            images.push(ImageRecord {
                image_id: rec.image_id.clone(),
                file_path: rec.file_path,
                caption_ids: rec.captions.iter().map(|c| c.caption_id.clone()).collect(),
            });
            captions.extend(rec.captions.into_iter().map(|c| CaptionRecord {
                caption_id: c.caption_id,
                image_id: rec.image_id.clone(),
                text: c.text,
                tokens: c.tokens,
                noun_indices: c.noun_indices,
            }));
        }
        Corpus::new(header.split, images, captions)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn open(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(file), path)
    }
}
