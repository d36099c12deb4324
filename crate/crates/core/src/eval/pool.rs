use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::caption_forge::CaptionManifestEntry;
use crate::corpus::Corpus;
use crate::image_forge::ImageManifestEntry;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Image queries against a caption gallery.
    I2t,
    /// Caption queries against an image gallery.
    T2i,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::I2t => "i2t",
            Direction::T2i => "t2i",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i2t" => Ok(Direction::I2t),
            "t2i" => Ok(Direction::T2i),
            other => Err(Error::InvalidArgument(format!("unknown direction {other:?}"))),
        }
    }
}

/// Which original captions count as correct for an image query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositiveRule {
    /// Any of the image's captions (the usual COCO protocol).
    #[default]
    Any,
    /// Only the image's first caption.
    First,
}

impl PositiveRule {
    pub fn as_str(self) -> &'static str {
        match self {
            PositiveRule::Any => "any",
            PositiveRule::First => "first",
        }
    }
}

impl fmt::Display for PositiveRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PositiveRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any" => Ok(PositiveRule::Any),
            "first" => Ok(PositiveRule::First),
            other => Err(Error::InvalidArgument(format!("unknown positive rule {other:?}"))),
        }
    }
}

/// A generated gallery item and the original it was derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoolingItem {
    pub id: String,
    pub orig_id: String,
}

impl From<&CaptionManifestEntry> for FoolingItem {
    fn from(e: &CaptionManifestEntry) -> Self {
        FoolingItem {
            id: e.new_caption_id.clone(),
            orig_id: e.orig_caption_id.clone(),
        }
    }
}

impl From<&ImageManifestEntry> for FoolingItem {
    fn from(e: &ImageManifestEntry) -> Self {
        FoolingItem {
            id: e.new_image_id.clone(),
            orig_id: e.orig_image_id.clone(),
        }
    }
}

/// A retrieval pool. Gallery order is: originals in corpus order, then
/// generated items in manifest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    pub direction: Direction,
    pub queries: Vec<String>,
    pub gallery: Vec<String>,
    /// Sorted gallery indices of each query's positives.
    pub positives: Vec<Vec<u32>>,
    /// Whether each gallery item is a generated (fooling) item.
    pub fooling: Vec<bool>,
}

impl Pool {
    /// Builds a pool from explicit parts. Positive lists may come in any
    /// order; they are sorted and deduplicated here.
    pub fn from_parts(direction: Direction, queries: Vec<String>, gallery: Vec<String>, mut positives: Vec<Vec<u32>>, fooling: Vec<bool>) -> Result<Self> {
        if positives.len() != queries.len() || fooling.len() != gallery.len() {
            return Err(Error::Shape(format!(
                "{} queries / {} positive lists, {} gallery items / {} fooling flags",
                queries.len(),
                positives.len(),
                gallery.len(),
                fooling.len()
            )));
        }
        for (q, pos) in positives.iter_mut().enumerate() {
            pos.sort_unstable();
            pos.dedup();
            for &g in pos.iter() {
                let flag = fooling.get(g as usize).ok_or(Error::IndexOutOfRange {
                    index: g as usize,
                    len: gallery.len(),
                })?;
                if *flag {
                    return Err(Error::Manifest(format!("query {} has a fooling item as positive", queries[q])));
                }
            }
        }
        Ok(Pool {
            direction,
            queries,
            gallery,
            positives,
            fooling,
        })
    }

    /// `(queries, gallery)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.queries.len(), self.gallery.len())
    }

    pub fn fooling_count(&self) -> usize {
        self.fooling.iter().filter(|&&f| f).count()
    }

    pub fn is_positive(&self, query: usize, item: u32) -> bool {
        self.positives[query].binary_search(&item).is_ok()
    }

    pub fn is_fooling(&self, item: u32) -> bool {
        self.fooling[item as usize]
    }

    /// The same pool restricted to its first `len` gallery items.
    pub fn truncated(&self, len: usize) -> Pool {
        let len = len.min(self.gallery.len());
        Pool {
            direction: self.direction,
            queries: self.queries.clone(),
            gallery: self.gallery[..len].to_vec(),
            positives: self
                .positives
                .iter()
                .map(|p| p.iter().copied().filter(|&g| (g as usize) < len).collect())
                .collect(),
            fooling: self.fooling[..len].to_vec(),
        }
    }
}

/// Builds the enlarged pool: originals plus `fooling` items.
///
/// i2t: queries are images, positives are the image's original captions.
/// t2i: queries are original captions, the positive is the owner image.
/// Generated items are never positives.
pub fn assemble_pool(corpus: &Corpus, fooling: &[FoolingItem], direction: Direction) -> Result<Pool> {
    assemble_pool_with(corpus, fooling, direction, PositiveRule::Any)
}

/// [`assemble_pool`] with an explicit image-query positive rule.
pub fn assemble_pool_with(corpus: &Corpus, fooling: &[FoolingItem], direction: Direction, rule: PositiveRule) -> Result<Pool> {
    let (queries, mut gallery, positives): (Vec<String>, Vec<String>, Vec<Vec<u32>>) = match direction {
        Direction::I2t => {
            let gallery: Vec<String> = corpus.captions_in_order().map(|c| c.caption_id.clone()).collect();
            let index: HashMap<&str, u32> = gallery
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_str(), i as u32))
                .collect();
            let positives = corpus
                .images
                .iter()
                .map(|img| {
                    let take = match rule {
                        PositiveRule::Any => img.caption_ids.len(),
                        PositiveRule::First => 1,
                    };
                    let mut p: Vec<u32> = img.caption_ids.iter().take(take).map(|c| index[c.as_str()]).collect();
                    p.sort_unstable();
                    p
                })
                .collect();
            let queries = corpus.images.iter().map(|i| i.image_id.clone()).collect();
            (queries, gallery, positives)
        }
        Direction::T2i => {
            let gallery: Vec<String> = corpus.images.iter().map(|i| i.image_id.clone()).collect();
            let index: HashMap<&str, u32> = gallery
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_str(), i as u32))
                .collect();
            let captions: Vec<_> = corpus.captions_in_order().collect();
            let positives = captions.iter().map(|c| vec![index[c.image_id.as_str()]]).collect();
            let queries = captions.iter().map(|c| c.caption_id.clone()).collect();
            (queries, gallery, positives)
        }
    };

    let originals: HashSet<&str> = gallery.iter().map(String::as_str).collect();
    let mut ids: HashSet<&str> = originals.clone();
    for item in fooling {
        let known = originals.contains(item.orig_id.as_str());
        if !known {
            return Err(Error::Manifest(format!(
                "{} refers to unknown original {}",
                item.id, item.orig_id
            )));
        }
        if !ids.insert(item.id.as_str()) {
            return Err(Error::Manifest(format!("duplicate gallery id {}", item.id)));
        }
    }
    let n_orig = gallery.len();
    gallery.extend(fooling.iter().map(|f| f.id.clone()));
    let mut flags = vec![false; n_orig];
    flags.resize(gallery.len(), true);
    Pool::from_parts(direction, queries, gallery, positives, flags)
}

pub fn caption_fooling(entries: &[CaptionManifestEntry]) -> Vec<FoolingItem> {
    entries.iter().map(FoolingItem::from).collect()
}

pub fn image_fooling(entries: &[ImageManifestEntry]) -> Vec<FoolingItem> {
    entries.iter().map(FoolingItem::from).collect()
}
