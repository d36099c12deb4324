//! Fooling captions.
//!
//! Single-word substitution of the consensus source word under four target
//! policies, deletion ablations, and random multi-word substitution. Every
//! entry draws from its own generator keyed by `(seed, caption_id, policy)`,
//! so generation parallelizes without changing the output.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concept::{sample_diff_concept, sample_same_concept, ConceptRegistry};
use crate::corpus::{render, CaptionRecord, Corpus};
use crate::ei::{leave_one_out, word_position, ConsensusRecord};
use crate::seed::derive_rng;
use crate::wordlist::{self, is_letter_word, parse_words};
use crate::{Error, Result};

/// Rejection-sampling attempts before a policy gives up on a caption.
pub const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Policy {
    RandVoca,
    SameConcept,
    DiffConcept,
    Danger,
    DeleteRandom,
    DeleteHighEi,
    DeleteLowEi,
    /// Substitute `k` random words, `2 <= k <= 5`.
    Multiword(u8),
}

impl Policy {
    pub const ALL: [Policy; 11] = [
        Policy::RandVoca,
        Policy::SameConcept,
        Policy::DiffConcept,
        Policy::Danger,
        Policy::DeleteRandom,
        Policy::DeleteHighEi,
        Policy::DeleteLowEi,
        Policy::Multiword(2),
        Policy::Multiword(3),
        Policy::Multiword(4),
        Policy::Multiword(5),
    ];

    pub fn is_deletion(self) -> bool {
        matches!(self, Policy::DeleteRandom | Policy::DeleteHighEi | Policy::DeleteLowEi)
    }

    pub fn is_single_word(self) -> bool {
        matches!(self, Policy::RandVoca | Policy::SameConcept | Policy::DiffConcept | Policy::Danger)
    }

    /// Whether the policy consumes the EI consensus.
    pub fn needs_ei(self) -> bool {
        self.is_single_word() || matches!(self, Policy::DeleteHighEi | Policy::DeleteLowEi)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::RandVoca => f.write_str("rand_voca"),
            Policy::SameConcept => f.write_str("same_concept"),
            Policy::DiffConcept => f.write_str("diff_concept"),
            Policy::Danger => f.write_str("danger"),
            Policy::DeleteRandom => f.write_str("delete_random"),
            Policy::DeleteHighEi => f.write_str("delete_high_ei"),
            Policy::DeleteLowEi => f.write_str("delete_low_ei"),
            Policy::Multiword(k) => write!(f, "multiword_{k}"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let p = match s {
            "rand_voca" => Policy::RandVoca,
            "same_concept" => Policy::SameConcept,
            "diff_concept" => Policy::DiffConcept,
            "danger" => Policy::Danger,
            "delete_random" => Policy::DeleteRandom,
            "delete_high_ei" => Policy::DeleteHighEi,
            "delete_low_ei" => Policy::DeleteLowEi,
            other => {
                let k = other
                    .strip_prefix("multiword_")
                    .and_then(|k| k.parse::<u8>().ok())
                    .filter(|k| (2..=5).contains(k))
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown policy {other:?}")))?;
                Policy::Multiword(k)
            }
        };
        Ok(p)
    }
}

impl TryFrom<String> for Policy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Policy> for String {
    fn from(p: Policy) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionManifestEntry {
    pub new_caption_id: String,
    pub orig_caption_id: String,
    pub image_id: String,
    pub policy: Policy,
    pub source_indices: Vec<usize>,
    pub source_words: Vec<String>,
    pub target_words: Vec<String>,
    pub text: String,
    pub seed: u64,
    pub fallback: bool,
}

pub fn new_caption_id(orig: &str, policy: Policy, seed: u64) -> String {
    format!("{orig}#{policy}#s{seed}")
}

/// Replacement vocabulary: lowercase words of English letters only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
}

impl Vocabulary {
    /// Keeps lowercased `[a-z]+` words, first occurrence order.
    pub fn new(words: impl IntoIterator<Item = String>) -> Self {
        let mut seen = HashSet::new();
        let words = words
            .into_iter()
            .map(|w| w.to_lowercase())
            .filter(|w| is_letter_word(w) && seen.insert(w.clone()))
            .collect();
        Vocabulary { words }
    }

    pub fn shipped() -> Self {
        Self::new(parse_words(wordlist::SHIPPED_VOCAB))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(parse_words(&wordlist::read_to_string(path)?)))
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Public-security words used by the danger policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DangerList(Vocabulary);

impl DangerList {
    pub fn new(words: impl IntoIterator<Item = String>) -> Self {
        DangerList(Vocabulary::new(words))
    }

    pub fn shipped() -> Self {
        Self::new(parse_words(wordlist::SHIPPED_DANGER))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(DangerList(Vocabulary::load(path)?))
    }

    pub fn words(&self) -> &[String] {
        self.0.words()
    }
}

/// Word lists shared by the generators.
#[derive(Debug, Clone)]
pub struct ForgeContext {
    pub registry: ConceptRegistry,
    pub vocab: Vocabulary,
    pub danger: DangerList,
    /// Skip instead of falling back to rand_voca when a policy runs out of candidates.
    pub strict: bool,
}

impl ForgeContext {
    pub fn shipped() -> Self {
        ForgeContext {
            registry: ConceptRegistry::shipped(),
            vocab: Vocabulary::shipped(),
            danger: DangerList::shipped(),
            strict: false,
        }
    }
}

/// Generated captions plus the number of originals skipped, by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionSet {
    pub policy: Option<Policy>,
    pub seed: u64,
    pub entries: Vec<CaptionManifestEntry>,
    pub skipped: BTreeMap<String, usize>,
}

impl CaptionSet {
    fn skip(&mut self, reason: &str) {
        *self.skipped.entry(reason.to_string()).or_default() += 1;
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Vec<CaptionManifestEntry>> {
        let text = wordlist::read_to_string(path)?;
        let mut entries = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            if !line.trim().is_empty() {
                let e = serde_json::from_str(line).map_err(|e| Error::parse(path, &text[offset..], e))?;
                entries.push(e);
            }
            offset += line.len();
        }
        Ok(entries)
    }
}

/// Replaces word token `idx` with `target`, keeping everything else.
pub fn substitute(caption: &CaptionRecord, idx: usize, target: &str) -> Result<String> {
    substitute_many(caption, &[(idx, target)])
}

/// Replaces several word tokens at once.
pub fn substitute_many(caption: &CaptionRecord, edits: &[(usize, &str)]) -> Result<String> {
    let mut pieces = caption.pieces();
    for &(idx, target) in edits {
        if target.is_empty() {
            return Err(Error::InvalidArgument("empty target word".into()));
        }
        let pos = word_position(&pieces, idx).ok_or(Error::IndexOutOfRange {
            index: idx,
            len: caption.tokens.len(),
        })?;
        if pieces[pos].surface.to_lowercase() == target.to_lowercase() {
            return Err(Error::NoOpSubstitution(target.to_string()));
        }
        pieces[pos].surface = target.to_string();
    }
    Ok(render(&pieces))
}

/// rand_voca acceptance rule: a different word, not a synonym, and not in
/// the source's concept group when both are mapped.
pub fn rand_voca_allows(registry: &ConceptRegistry, source: &str, candidate: &str) -> bool {
    if registry.is_excluded(source, candidate) {
        return false;
    }
    match (registry.group_of(source), registry.group_of(candidate)) {
        (Some(a), Some(b)) => a != b,
        _ => true,
    }
}

fn rejection_sample<R: Rng + ?Sized>(pool: &[String], rng: &mut R, accept: impl Fn(&str) -> bool) -> Option<String> {
    if pool.is_empty() {
        return None;
    }
    (0..MAX_ATTEMPTS)
        .map(|_| &pool[rng.random_range(0..pool.len())])
        .find(|w| accept(w))
        .cloned()
}

pub fn sample_rand_voca<R: Rng + ?Sized>(source: &str, ctx: &ForgeContext, rng: &mut R) -> Option<String> {
    rejection_sample(ctx.vocab.words(), rng, |w| rand_voca_allows(&ctx.registry, source, w))
}

enum Target {
    Word { word: String, fallback: bool },
    Skip(&'static str),
}

fn pick_target<R: Rng + ?Sized>(policy: Policy, source: &str, ctx: &ForgeContext, rng: &mut R) -> Target {
    let drawn = match policy {
        Policy::RandVoca => {
            return match sample_rand_voca(source, ctx, rng) {
                Some(word) => Target::Word { word, fallback: false },
                None => Target::Skip("no_candidate"),
            }
        }
        Policy::SameConcept => sample_same_concept(source, rng, &ctx.registry),
        Policy::DiffConcept => sample_diff_concept(source, rng, &ctx.registry),
        Policy::Danger => rejection_sample(ctx.danger.words(), rng, |w| !ctx.registry.is_excluded(source, w))
            .ok_or_else(|| Error::NoCandidate(source.to_string())),
        _ => unreachable!("not a single-word policy"),
    };
    let fall_back = |reason: &'static str, rng: &mut R| match sample_rand_voca(source, ctx, rng) {
        Some(word) => Target::Word { word, fallback: true },
        None => Target::Skip(reason),
    };
    match drawn {
        Ok(word) => Target::Word { word, fallback: false },
        Err(Error::UnmappedWord(_)) => {
            log::debug!("{source:?} has no concept group; falling back to rand_voca");
            fall_back("unmapped", rng)
        }
        Err(_) if ctx.strict => Target::Skip("no_candidate"),
        Err(_) => {
            log::debug!("{policy} found no candidate for {source:?}; falling back to rand_voca");
            fall_back("no_candidate", rng)
        }
    }
}

fn consensus_map(records: &[ConsensusRecord]) -> BTreeMap<&str, usize> {
    records
        .iter()
        .map(|r| (r.caption_id.as_str(), r.consensus_idx))
        .collect()
}

fn entry_rng(seed: u64, caption_id: &str, policy: Policy) -> rand_chacha::ChaCha8Rng {
    derive_rng(seed, &["caption", caption_id, &policy.to_string()])
}

fn collect_set(policy: Policy, seed: u64, results: Vec<std::result::Result<CaptionManifestEntry, &'static str>>) -> CaptionSet {
    let mut set = CaptionSet {
        policy: Some(policy),
        seed,
        ..Default::default()
    };
    for r in results {
        match r {
            Ok(e) => set.entries.push(e),
            Err(reason) => set.skip(reason),
        }
    }
    set
}

/// One substituted caption per original caption with a consensus source word.
pub fn gen_single_word_set(corpus: &Corpus, consensus: &[ConsensusRecord], policy: Policy, ctx: &ForgeContext, seed: u64) -> Result<CaptionSet> {
    if !policy.is_single_word() {
        return Err(Error::InvalidArgument(format!("{policy} is not a substitution policy")));
    }
    let sources = consensus_map(consensus);
    let captions: Vec<&CaptionRecord> = corpus.captions_in_order().collect();
    let results = captions
        .par_iter()
        .map(|c| {
            let Some(&idx) = sources.get(c.caption_id.as_str()) else {
                return Ok(Err("no_source_word"));
            };
            let source = c.tokens.get(idx).ok_or(Error::IndexOutOfRange {
                index: idx,
                len: c.tokens.len(),
            })?;
            let mut rng = entry_rng(seed, &c.caption_id, policy);
            let (target, fallback) = match pick_target(policy, source, ctx, &mut rng) {
                Target::Word { word, fallback } => (word, fallback),
                Target::Skip(reason) => return Ok(Err(reason)),
            };
            Ok(Ok(CaptionManifestEntry {
                new_caption_id: new_caption_id(&c.caption_id, policy, seed),
                orig_caption_id: c.caption_id.clone(),
                image_id: c.image_id.clone(),
                policy,
                source_indices: vec![idx],
                source_words: vec![source.clone()],
                text: substitute(c, idx, &target)?,
                target_words: vec![target],
                seed,
                fallback,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_set(policy, seed, results))
}

/// One caption per original with a noun deleted: a uniform noun
/// (`DeleteRandom`) or the consensus lowest / highest EI noun.
pub fn gen_deletion_set(corpus: &Corpus, policy: Policy, consensus: Option<&[ConsensusRecord]>, seed: u64) -> Result<CaptionSet> {
    if !policy.is_deletion() {
        return Err(Error::InvalidArgument(format!("{policy} is not a deletion policy")));
    }
    let sources = match (policy, consensus) {
        (Policy::DeleteRandom, _) => None,
        (_, Some(records)) => Some(consensus_map(records)),
        (_, None) => return Err(Error::InvalidArgument(format!("{policy} needs EI consensus records"))),
    };
    let captions: Vec<&CaptionRecord> = corpus.captions_in_order().collect();
    let results = captions
        .par_iter()
        .map(|c| {
            if c.tokens.len() < 2 {
                return Ok(Err("single_word"));
            }
            let idx = match &sources {
                Some(map) => match map.get(c.caption_id.as_str()) {
                    Some(&i) => i,
                    None => return Ok(Err("no_source_word")),
                },
                None => {
                    if c.noun_indices.is_empty() {
                        return Ok(Err("no_source_word"));
                    }
                    let mut rng = entry_rng(seed, &c.caption_id, policy);
                    c.noun_indices[rng.random_range(0..c.noun_indices.len())]
                }
            };
            Ok(Ok(CaptionManifestEntry {
                new_caption_id: new_caption_id(&c.caption_id, policy, seed),
                orig_caption_id: c.caption_id.clone(),
                image_id: c.image_id.clone(),
                policy,
                source_indices: vec![idx],
                source_words: vec![c.tokens[idx].clone()],
                target_words: Vec::new(),
                text: leave_one_out(c, idx)?,
                seed,
                fallback: false,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_set(policy, seed, results))
}

/// One caption per original with `k` distinct random words (any part of
/// speech) replaced by vocabulary words.
pub fn gen_multiword_set(corpus: &Corpus, k: usize, ctx: &ForgeContext, seed: u64) -> Result<CaptionSet> {
    if !(2..=5).contains(&k) {
        return Err(Error::InvalidArgument(format!("multiword k must be in 2..=5, got {k}")));
    }
    let policy = Policy::Multiword(k as u8);
    let captions: Vec<&CaptionRecord> = corpus.captions_in_order().collect();
    let results = captions
        .par_iter()
        .map(|c| {
            if c.tokens.len() < k {
                return Ok(Err("too_short"));
            }
            let mut rng = entry_rng(seed, &c.caption_id, policy);
            let mut positions = sample(&mut rng, c.tokens.len(), k).into_vec();
            positions.sort_unstable();
            let mut targets = Vec::with_capacity(k);
            for &p in &positions {
                match sample_rand_voca(&c.tokens[p], ctx, &mut rng) {
                    Some(t) => targets.push(t),
                    None => return Ok(Err("no_candidate")),
                }
            }
            let edits: Vec<(usize, &str)> = positions
                .iter()
                .zip(&targets)
                .map(|(&p, t)| (p, t.as_str()))
                .collect();
            Ok(Ok(CaptionManifestEntry {
                new_caption_id: new_caption_id(&c.caption_id, policy, seed),
                orig_caption_id: c.caption_id.clone(),
                image_id: c.image_id.clone(),
                policy,
                source_words: positions.iter().map(|&p| c.tokens[p].clone()).collect(),
                text: substitute_many(c, &edits)?,
                source_indices: positions,
                target_words: targets,
                seed,
                fallback: false,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_set(policy, seed, results))
}

/// Dispatches to the generator of `policy`. `lowest` and `highest` are the
/// two consensus streams of the EI stage.
pub fn gen_caption_set(
    corpus: &Corpus,
    policy: Policy,
    lowest: Option<&[ConsensusRecord]>,
    highest: Option<&[ConsensusRecord]>,
    ctx: &ForgeContext,
    seed: u64,
) -> Result<CaptionSet> {
    fn need(r: Option<&[ConsensusRecord]>, policy: Policy) -> Result<&[ConsensusRecord]> {
        r.ok_or_else(|| Error::InvalidArgument(format!("{policy} needs EI consensus records")))
    }
    match policy {
        p if p.is_single_word() => gen_single_word_set(corpus, need(lowest, policy)?, p, ctx, seed),
        Policy::DeleteRandom => gen_deletion_set(corpus, policy, None, seed),
        Policy::DeleteLowEi => gen_deletion_set(corpus, policy, Some(need(lowest, policy)?), seed),
        Policy::DeleteHighEi => gen_deletion_set(corpus, policy, Some(need(highest, policy)?), seed),
        Policy::Multiword(k) => gen_multiword_set(corpus, k as usize, ctx, seed),
        _ => unreachable!(),
    }
}

/// Positions where the re-tokenized entry text differs from the original.
pub fn changed_positions(original: &[String], entry: &CaptionManifestEntry) -> Vec<usize> {
    let new = crate::corpus::tokenize(&entry.text);
    if entry.policy.is_deletion() {
        // Align by dropping the declared position.
        return match entry.source_indices.first() {
            Some(&i) if new.len() + 1 == original.len() => {
                let mut kept = original.to_vec();
                kept.remove(i);
                if kept == new {
                    vec![i]
                } else {
                    (0..original.len()).collect()
                }
            }
            _ => (0..original.len()).collect(),
        };
    }
    if new.len() != original.len() {
        return (0..original.len().max(new.len())).collect();
    }
    (0..new.len()).filter(|&i| new[i] != original[i]).collect()
}
