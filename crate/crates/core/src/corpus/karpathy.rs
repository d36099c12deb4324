use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{tag_nouns, tokenize, CaptionRecord, Corpus, ImageRecord, NounLexicon, CAPTIONS_PER_IMAGE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Test,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Test => "test",
            Split::Val => "val",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(Split::Test),
            "val" => Ok(Split::Val),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Reject images with fewer than five captions instead of dropping them.
    pub strict: bool,
    pub lexicon: NounLexicon,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            strict: true,
            lexicon: NounLexicon::shipped(),
        }
    }
}

#[derive(Deserialize)]
struct KarpathyFile {
    images: Vec<KarpathyImage>,
}

#[derive(Deserialize)]
struct KarpathyImage {
    filename: String,
    #[serde(default)]
    filepath: Option<String>,
    split: String,
    #[serde(default)]
    cocoid: Option<serde_json::Value>,
    #[serde(default)]
    imgid: Option<serde_json::Value>,
    sentences: Vec<KarpathySentence>,
}

#[derive(Deserialize)]
struct KarpathySentence {
    raw: String,
    #[serde(default)]
    tokens: Option<Vec<String>>,
    #[serde(default)]
    sentid: Option<serde_json::Value>,
}

fn id_string(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Loads the records of `split` from a Karpathy-style annotation file.
///
/// Images with more than five captions keep their first five. Images with
/// fewer are a validation error in strict mode and are dropped otherwise.
pub fn load_karpathy_split(path: &Path, split: Split, options: &IngestOptions) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: KarpathyFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, &text, e))?;

    let mut images = Vec::new();
    let mut captions = Vec::new();
    let mut dropped = 0usize;
    for image in file.images.into_iter().filter(|i| i.split == split.as_str()) {
        let image_id = image
            .cocoid
            .as_ref()
            .or(image.imgid.as_ref())
            .map(id_string)
            .unwrap_or_else(|| image.filename.clone());
        if image.sentences.len() < CAPTIONS_PER_IMAGE {
            if options.strict {
                return Err(Error::Validation {
                    id: image_id,
                    reason: format!(
                        "{} captions, {CAPTIONS_PER_IMAGE} required",
                        image.sentences.len()
                    ),
                });
            }
            log::warn!("dropping image {image_id}: only {} captions", image.sentences.len());
            dropped += 1;
            continue;
        }
        let file_path = match &image.filepath {
            Some(dir) if !dir.is_empty() => format!("{dir}/{}", image.filename),
            _ => image.filename.clone(),
        };
        let mut caption_ids = Vec::with_capacity(CAPTIONS_PER_IMAGE);
        for (k, sentence) in image.sentences.into_iter().take(CAPTIONS_PER_IMAGE).enumerate() {
            let caption_id = sentence
                .sentid
                .as_ref()
                .map(id_string)
                .unwrap_or_else(|| format!("{image_id}-{k}"));
            let tokens: Vec<String> = match sentence.tokens {
                Some(tokens) => tokens.iter().map(|t| t.to_lowercase()).collect(),
                None => tokenize(&sentence.raw),
            };
            let noun_indices = tag_nouns(&tokens, &options.lexicon);
            caption_ids.push(caption_id.clone());
            captions.push(CaptionRecord {
                caption_id,
                image_id: image_id.clone(),
                text: sentence.raw,
                tokens,
                noun_indices,
            });
        }
        images.push(ImageRecord {
            image_id,
            file_path,
            caption_ids,
        });
    }
    if dropped > 0 {
        log::info!("{dropped} images dropped for having fewer than {CAPTIONS_PER_IMAGE} captions");
    }
    Corpus::new(split.as_str(), images, captions)
}
