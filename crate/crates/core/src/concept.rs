//! Concept groups and target-word sampling for the same-concept and
//! different-concept policies.
//!
//! The registry file is a TSV of `group_id<TAB>lemma` rows; the synonym file
//! is a TSV of `word<TAB>word` pairs. Both accept `#` comments. The shipped
//! registry has 24 object/scene groups plus seven attribute groups
//! (material, color, direction, vehicle_part, shape, event, number).

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::Rng;

use crate::corpus::tokenize;
use crate::wordlist::{self, content_lines};
use crate::{Error, Result};

/// Attribute groups every strict registry must carry, with their minimum sizes.
pub const REQUIRED_GROUPS: [(&str, usize); 7] = [
    ("material", 32),
    ("color", 28),
    ("direction", 50),
    ("vehicle_part", 12),
    ("shape", 15),
    ("event", 11),
    ("number", 14),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptGroup {
    pub group_id: String,
    /// Lemmas in file order.
    pub lemmas: Vec<String>,
}

/// Symmetric word-pair table of meaning-preserving substitutions.
#[derive(Debug, Clone, Default)]
pub struct SynonymTable {
    pairs: HashMap<String, BTreeSet<String>>,
}

impl SynonymTable {
    pub fn parse(text: &str) -> Self {
        let mut table = SynonymTable::default();
        for line in content_lines(text) {
            let mut cols = line.split('\t').map(str::trim);
            match (cols.next(), cols.next()) {
                (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => table.insert(a, b),
                _ => log::warn!("ignoring malformed synonym line {line:?}"),
            }
        }
        table
    }

    pub fn shipped() -> Self {
        Self::parse(wordlist::SHIPPED_SYNONYMS)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(&wordlist::read_to_string(path)?))
    }

    pub fn insert(&mut self, a: &str, b: &str) {
        let (a, b) = (a.to_lowercase(), b.to_lowercase());
        self.pairs.entry(a.clone()).or_default().insert(b.clone());
        self.pairs.entry(b).or_default().insert(a);
    }

    pub fn are_synonyms(&self, a: &str, b: &str) -> bool {
        self.pairs.get(a).is_some_and(|s| s.contains(b))
    }
}

/// Singular candidates of a (possibly plural) word, the word itself first.
pub fn lemma_candidates(word: &str) -> Vec<String> {
    const IRREGULAR: [(&str, &str); 15] = [
        ("men", "man"),
        ("women", "woman"),
        ("children", "child"),
        ("feet", "foot"),
        ("teeth", "tooth"),
        ("mice", "mouse"),
        ("geese", "goose"),
        ("oxen", "ox"),
        ("knives", "knife"),
        ("leaves", "leaf"),
        ("shelves", "shelf"),
        ("calves", "calf"),
        ("scarves", "scarf"),
        ("policemen", "policeman"),
        ("gentlemen", "gentleman"),
    ];
    let mut out = vec![word.to_string()];
    if let Some((_, lemma)) = IRREGULAR.iter().find(|(plural, _)| *plural == word) {
        out.push(lemma.to_string());
        return out;
    }
    if let Some(stem) = word.strip_suffix("ies") {
        out.push(format!("{stem}y"));
    }
    if let Some(stem) = word.strip_suffix("es") {
        out.push(stem.to_string());
    }
    if let Some(stem) = word.strip_suffix('s') {
        if !stem.ends_with('s') {
            out.push(stem.to_string());
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ConceptRegistry {
    groups: Vec<ConceptGroup>,
    group_index: HashMap<String, usize>,
    lemma_index: HashMap<String, usize>,
    synonyms: SynonymTable,
}

impl ConceptRegistry {
    /// Parses registry TSV text.
    ///
    /// Lemmas already claimed by an earlier group are dropped (first wins).
    /// Lemmas that do not tokenize to a single word are skipped. In strict
    /// mode every group of [`REQUIRED_GROUPS`] must be present and at least
    /// as large as listed.
    pub fn parse(text: &str, strict: bool) -> Result<Self> {
        let mut groups: Vec<ConceptGroup> = Vec::new();
        let mut group_index: HashMap<String, usize> = HashMap::new();
        let mut lemma_index: HashMap<String, usize> = HashMap::new();
        for line in content_lines(text) {
            let mut cols = line.split('\t').map(str::trim);
            let (Some(gid), Some(raw)) = (cols.next(), cols.next()) else {
                log::warn!("ignoring malformed registry line {line:?}");
                continue;
            };
            let lemma = raw.to_lowercase();
            if tokenize(&lemma) != [lemma.as_str()] {
                log::warn!("skipping lemma {raw:?}: not a single word");
                continue;
            }
            let gi = *group_index.entry(gid.to_string()).or_insert_with(|| {
                groups.push(ConceptGroup {
                    group_id: gid.to_string(),
                    lemmas: Vec::new(),
                });
                groups.len() - 1
            });
            match lemma_index.get(&lemma) {
                Some(&owner) if owner != gi => {
                    log::warn!(
                        "lemma {lemma:?} listed in {gid} already belongs to {}; keeping the first",
                        groups[owner].group_id
                    );
                }
                Some(_) => {}
                None => {
                    lemma_index.insert(lemma.clone(), gi);
                    groups[gi].lemmas.push(lemma);
                }
            }
        }
        let registry = ConceptRegistry {
            groups,
            group_index,
            lemma_index,
            synonyms: SynonymTable::default(),
        };
        if strict {
            for (gid, min) in REQUIRED_GROUPS {
                let size = registry.group(gid).map_or(0, |g| g.lemmas.len());
                if size < min {
                    return Err(Error::Validation {
                        id: gid.to_string(),
                        reason: format!("required concept group has {size} lemmas, needs {min}"),
                    });
                }
            }
        }
        if registry.groups.iter().any(|g| g.lemmas.is_empty()) {
            return Err(Error::Validation {
                id: "registry".into(),
                reason: "empty concept group".into(),
            });
        }
        Ok(registry)
    }

    /// The shipped registry with the shipped synonym pairs attached.
    pub fn shipped() -> Self {
        Self::parse(wordlist::SHIPPED_CONCEPT_GROUPS, true)
            .expect("shipped registry is valid")
            .with_synonyms(SynonymTable::shipped())
    }

    pub fn with_synonyms(mut self, synonyms: SynonymTable) -> Self {
        self.synonyms = synonyms;
        self
    }

    pub fn groups(&self) -> &[ConceptGroup] {
        &self.groups
    }

    pub fn group(&self, group_id: &str) -> Option<&ConceptGroup> {
        self.group_index.get(group_id).map(|&i| &self.groups[i])
    }

    pub fn synonyms(&self) -> &SynonymTable {
        &self.synonyms
    }

    fn group_index_of(&self, word: &str) -> Option<usize> {
        let word = word.to_lowercase();
        lemma_candidates(&word)
            .iter()
            .find_map(|w| self.lemma_index.get(w).copied())
    }

    /// Group id of `word`, trying simple plural stripping when the surface
    /// form is not a lemma.
    pub fn group_of(&self, word: &str) -> Option<&str> {
        self.group_index_of(word).map(|i| self.groups[i].group_id.as_str())
    }

    /// True when replacing `source` with `candidate` would not change the
    /// meaning: the same word, its lemma, or a listed synonym of either.
    pub fn is_excluded(&self, source: &str, candidate: &str) -> bool {
        let source = source.to_lowercase();
        let candidate = candidate.to_lowercase();
        lemma_candidates(&source).iter().any(|s| {
            *s == candidate
                || lemma_candidates(&candidate)
                    .iter()
                    .any(|c| c == s || self.synonyms.are_synonyms(s, c))
        })
    }
}

/// Loads a registry file, optionally attaching a synonym file.
pub fn load_registry(path: &Path, synonyms: Option<&Path>, strict: bool) -> Result<ConceptRegistry> {
    let registry = ConceptRegistry::parse(&wordlist::read_to_string(path)?, strict)?;
    let table = match synonyms {
        Some(p) => SynonymTable::load(p)?,
        None => SynonymTable::shipped(),
    };
    Ok(registry.with_synonyms(table))
}

pub fn group_of<'a>(word: &str, registry: &'a ConceptRegistry) -> Option<&'a str> {
    registry.group_of(word)
}

/// A uniformly drawn lemma from `source`'s own group, never `source`
/// itself or one of its synonyms.
pub fn sample_same_concept<R: Rng + ?Sized>(source: &str, rng: &mut R, registry: &ConceptRegistry) -> Result<String> {
    let gi = registry
        .group_index_of(source)
        .ok_or_else(|| Error::UnmappedWord(source.to_string()))?;
    let candidates: Vec<&String> = registry.groups[gi]
        .lemmas
        .iter()
        .filter(|c| !registry.is_excluded(source, c))
        .collect();
    pick(source, &candidates, rng)
}

/// A uniformly drawn lemma from any group other than `source`'s.
pub fn sample_diff_concept<R: Rng + ?Sized>(source: &str, rng: &mut R, registry: &ConceptRegistry) -> Result<String> {
    let gi = registry
        .group_index_of(source)
        .ok_or_else(|| Error::UnmappedWord(source.to_string()))?;
    let candidates: Vec<&String> = registry
        .groups
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != gi)
        .flat_map(|(_, g)| g.lemmas.iter())
        .filter(|c| !registry.is_excluded(source, c))
        .collect();
    pick(source, &candidates, rng)
}

fn pick<R: Rng + ?Sized>(source: &str, candidates: &[&String], rng: &mut R) -> Result<String> {
    if candidates.is_empty() {
        return Err(Error::NoCandidate(source.to_string()));
    }
    Ok(candidates[rng.random_range(0..candidates.len())].clone())
}
