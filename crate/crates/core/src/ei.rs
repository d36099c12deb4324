//! Embedding-influence (EI) scores.
//!
//! The EI of word `c_s` in caption `C` under text encoder `f_T` is
//! `1 - cos(f_T(C), f_T(C \ c_s))`: how far the caption embedding moves when
//! the word is dropped. Each model picks its lowest-EI (or highest-EI) noun
//! independently, and the models then vote on a single source word.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{render, CaptionRecord, Corpus};
use crate::embedding::{Embedder, ProviderId};
use crate::seed::derive_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extreme {
    Lowest,
    Highest,
}

impl Extreme {
    pub fn as_str(self) -> &'static str {
        match self {
            Extreme::Lowest => "lowest",
            Extreme::Highest => "highest",
        }
    }
}

impl FromStr for Extreme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowest" => Ok(Extreme::Lowest),
            "highest" => Ok(Extreme::Highest),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EiRecord {
    pub caption_id: String,
    pub model: ProviderId,
    pub word_scores: BTreeMap<usize, f64>,
    pub lowest_noun_idx: usize,
    pub highest_noun_idx: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusRecord {
    pub caption_id: String,
    pub per_model_choice: BTreeMap<String, usize>,
    pub consensus_idx: usize,
    pub consensus_count: usize,
    pub tie_broken: bool,
    pub seed: u64,
}

/// Caption text with word token `idx` removed, everything else kept as is.
pub fn leave_one_out(caption: &CaptionRecord, idx: usize) -> Result<String> {
    let mut pieces = caption.pieces();
    let pos = word_position(&pieces, idx).ok_or(Error::IndexOutOfRange {
        index: idx,
        len: caption.tokens.len(),
    })?;
    pieces.remove(pos);
    Ok(render(&pieces))
}

/// Index into `pieces` of the `idx`-th word piece.
pub(crate) fn word_position(pieces: &[crate::corpus::Piece], idx: usize) -> Option<usize> {
    pieces
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_word())
        .nth(idx)
        .map(|(i, _)| i)
}

/// `1 - cos(a, b)` in f64.
pub fn ei_from_embeddings(full: &[f32], reduced: &[f32]) -> Result<f64> {
    if full.len() != reduced.len() {
        return Err(Error::Shape(format!("embeddings of length {} and {}", full.len(), reduced.len())));
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&a, &b) in full.iter().zip(reduced) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::NumericalDegeneracy("zero-norm embedding in EI score".into()));
    }
    let ei = 1.0 - dot / (na.sqrt() * nb.sqrt());
    if !ei.is_finite() {
        return Err(Error::NumericalDegeneracy("non-finite EI score".into()));
    }
    // Only rounding can push the cosine outside [-1, 1].
    Ok(ei.clamp(0.0, 2.0))
}

fn require_words(caption: &CaptionRecord) -> Result<()> {
    if caption.tokens.len() < 2 {
        return Err(Error::NoSourceWord(caption.caption_id.clone()));
    }
    Ok(())
}

/// EI score of word `idx` of `caption` under `provider`.
pub fn ei_score(embedder: &Embedder, provider: &ProviderId, caption: &CaptionRecord, idx: usize) -> Result<f64> {
    require_words(caption)?;
    let texts = vec![caption.rendered(), leave_one_out(caption, idx)?];
    let m = embedder.embed_texts(provider, &texts)?;
    ei_from_embeddings(m.row(0), m.row(1))
}

/// Argmin / argmax of `scores` over `candidates`; ties go to the smallest index.
pub fn select_extreme(scores: &BTreeMap<usize, f64>, candidates: &[usize], mode: Extreme) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    let mut sorted: Vec<usize> = candidates.to_vec();
    sorted.sort_unstable();
    for idx in sorted {
        let Some(&score) = scores.get(&idx) else { continue };
        let better = match best {
            None => true,
            Some((_, b)) => match mode {
                Extreme::Lowest => score < b,
                Extreme::Highest => score > b,
            },
        };
        if better {
            best = Some((idx, score));
        }
    }
    best.map(|(i, _)| i)
}

/// Lowest- or highest-EI noun of `caption` under `provider`.
pub fn select_extreme_noun(embedder: &Embedder, provider: &ProviderId, caption: &CaptionRecord, mode: Extreme) -> Result<usize> {
    let record = score_caption(embedder, provider, caption, false)?;
    Ok(match mode {
        Extreme::Lowest => record.lowest_noun_idx,
        Extreme::Highest => record.highest_noun_idx,
    })
}

/// Scores the caption's nouns (or every word with `full_heatmap`) in one
/// provider request.
pub fn score_caption(embedder: &Embedder, provider: &ProviderId, caption: &CaptionRecord, full_heatmap: bool) -> Result<EiRecord> {
    require_words(caption)?;
    if caption.noun_indices.is_empty() {
        return Err(Error::NoSourceWord(caption.caption_id.clone()));
    }
    let scored: Vec<usize> = if full_heatmap {
        (0..caption.tokens.len()).collect()
    } else {
        caption.noun_indices.clone()
    };
    let mut texts = Vec::with_capacity(scored.len() + 1);
    texts.push(caption.rendered());
    for &idx in &scored {
        texts.push(leave_one_out(caption, idx)?);
    }
    let m = embedder.embed_texts(provider, &texts)?;
    let mut word_scores = BTreeMap::new();
    for (k, &idx) in scored.iter().enumerate() {
        word_scores.insert(idx, ei_from_embeddings(m.row(0), m.row(k + 1))?);
    }
    let lowest = select_extreme(&word_scores, &caption.noun_indices, Extreme::Lowest);
    let highest = select_extreme(&word_scores, &caption.noun_indices, Extreme::Highest);
    Ok(EiRecord {
        caption_id: caption.caption_id.clone(),
        model: provider.clone(),
        word_scores,
        lowest_noun_idx: lowest.expect("caption has nouns"),
        highest_noun_idx: highest.expect("caption has nouns"),
    })
}

/// Outcome of a vote among model choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vote {
    pub idx: usize,
    pub count: usize,
    pub tie_broken: bool,
}

/// Most frequent index in `choices`; among several equally frequent
/// indices, a uniform draw from `rng`.
pub fn vote<R: Rng + ?Sized>(choices: &BTreeMap<String, usize>, rng: &mut R) -> Result<Vote> {
    if choices.is_empty() {
        return Err(Error::EmptyConsensus);
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &idx in choices.values() {
        *counts.entry(idx).or_default() += 1;
    }
    let count = *counts.values().max().unwrap();
    let tied: Vec<usize> = counts
        .iter()
        .filter(|&(_, &c)| c == count)
        .map(|(&i, _)| i)
        .collect();
    let idx = if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.random_range(0..tied.len())]
    };
    Ok(Vote {
        idx,
        count,
        tie_broken: tied.len() > 1,
    })
}

/// Consensus source word for one caption, with ties drawn from a generator
/// keyed by `(seed, mode, caption_id)`.
pub fn consensus_source_word(caption_id: &str, choices: &BTreeMap<String, usize>, seed: u64, mode: Extreme) -> Result<ConsensusRecord> {
    let mut rng = derive_rng(seed, &["consensus", mode.as_str(), caption_id]);
    let v = vote(choices, &mut rng)?;
    Ok(ConsensusRecord {
        caption_id: caption_id.to_string(),
        per_model_choice: choices.clone(),
        consensus_idx: v.idx,
        consensus_count: v.count,
        tie_broken: v.tie_broken,
        seed,
    })
}

/// Everything the EI stage produces for a corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusScores {
    /// Caption order, then model order.
    pub records: Vec<EiRecord>,
    pub lowest: Vec<ConsensusRecord>,
    pub highest: Vec<ConsensusRecord>,
    /// Captions without an eligible source word.
    pub skipped: Vec<String>,
}

/// Scores every caption under every model and forms both consensus streams.
/// Runs on the current rayon pool; the output does not depend on its size.
pub fn score_corpus(embedder: &Embedder, models: &[ProviderId], corpus: &Corpus, seed: u64, full_heatmap: bool) -> Result<CorpusScores> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("no scoring models".into()));
    }
    let captions: Vec<&CaptionRecord> = corpus.captions_in_order().collect();
    let per_caption: Vec<Option<Vec<EiRecord>>> = captions
        .par_iter()
        .map(|c| {
            let mut out = Vec::with_capacity(models.len());
            for model in models {
                match score_caption(embedder, model, c, full_heatmap) {
                    Ok(r) => out.push(r),
                    Err(Error::NoSourceWord(id)) => {
                        log::info!("caption {id}: no eligible source word, skipped");
                        return Ok(None);
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(Some(out))
        })
        .collect::<Result<_>>()?;

    let mut scores = CorpusScores::default();
    for (caption, records) in captions.iter().zip(per_caption) {
        let Some(records) = records else {
            scores.skipped.push(caption.caption_id.clone());
            continue;
        };
        let lowest: BTreeMap<String, usize> = records
            .iter()
            .map(|r| (r.model.name.clone(), r.lowest_noun_idx))
            .collect();
        let highest: BTreeMap<String, usize> = records
            .iter()
            .map(|r| (r.model.name.clone(), r.highest_noun_idx))
            .collect();
        scores.lowest.push(consensus_source_word(&caption.caption_id, &lowest, seed, Extreme::Lowest)?);
        scores.highest.push(consensus_source_word(&caption.caption_id, &highest, seed, Extreme::Highest)?);
        scores.records.extend(records);
    }
    Ok(scores)
}

/// Consensus histogram and source-word frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    /// Fraction of captions per consensus count, buckets `1..=max(4, models)`.
    pub histogram: BTreeMap<usize, f64>,
    /// Source words by descending count, ties alphabetical.
    pub source_words: Vec<(String, usize)>,
}

pub fn ei_statistics(records: &[ConsensusRecord], corpus: &Corpus) -> StatsReport {
    let top = records
        .iter()
        .map(|r| r.consensus_count)
        .chain(records.iter().map(|r| r.per_model_choice.len()))
        .max()
        .unwrap_or(0)
        .max(4);
    let mut histogram: BTreeMap<usize, f64> = (1..=top).map(|b| (b, 0.0)).collect();
    let mut words: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        *histogram.get_mut(&r.consensus_count).expect("bucket exists") += 1.0;
        if let Some(word) = corpus
            .caption(&r.caption_id)
            .and_then(|c| c.tokens.get(r.consensus_idx))
        {
            *words.entry(word.clone()).or_default() += 1;
        }
    }
    if !records.is_empty() {
        let n = records.len() as f64;
        for v in histogram.values_mut() {
            *v /= n;
        }
    }
    let mut source_words: Vec<(String, usize)> = words.into_iter().collect();
    source_words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    StatsReport { histogram, source_words }
}

impl StatsReport {
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bucket,frequency\n");
        for (b, f) in &self.histogram {
            writeln!(out, "{b},{f:.6}").unwrap();
        }
        out
    }

    pub fn words_csv(&self) -> String {
        let mut out = String::from("word,count\n");
        for (w, c) in &self.source_words {
            writeln!(out, "{w},{c}").unwrap();
        }
        out
    }

    /// Share of captions where at least two models agreed.
    pub fn agreement_mass(&self) -> f64 {
        self.histogram.range(2..).map(|(_, f)| f).sum()
    }
}
