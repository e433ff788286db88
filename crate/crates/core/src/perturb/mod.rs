//! Perturbation operators and the seeded dispatcher.
//!
//! Nine operators in three groups:
//!
//! | id | operator                         | granularity |
//! |----|----------------------------------|-------------|
//! | C1 | keyboard typos (substitute/insert) | character |
//! | C2 | adjacent character swaps         | character   |
//! | C3 | case flips                       | character   |
//! | W1 | synonym insertion                | word        |
//! | W2 | synonym substitution             | word        |
//! | W3 | inflection changes               | word        |
//! | S1 | round-trip translation           | sentence    |
//! | S2 | past tense                       | sentence    |
//! | S3 | future tense                     | sentence    |
//!
//! plus the aggregates `C_mix`, `W_mix`, `S_mix` and `mix_all`, which draw
//! one constituent uniformly per call.
//!
//! The dispatcher only edits bytes inside the editable ranges handed to it
//! (for samples: natural-language segments minus doctest lines), and every
//! edit is recorded in a [`PerturbationTrace`].

mod kernels;
mod tables;
mod trace;
mod translate;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{editable_ranges, CorpusError, InstructionSample, TaskSpec, TextKind};
use crate::rng::SplitMix64;

pub use kernels::{
    apply_adjacent_swap, apply_case_flip, apply_inflection, apply_synonym_insert, apply_synonym_substitute,
    apply_tense_transform, apply_typo, match_leading_case, toggle_case, word_spans, Inflection, Tense, TypoMode,
};
pub use tables::{regular_forms, Keyboard, SynonymLexicon, VerbForm, VerbForms, VerbHit, VerbTable};
pub use trace::{apply_edits, Edit, PerturbationTrace};
pub use translate::{
    back_translate, DictionaryTranslator, IdentityTranslator, RoundTrip, TranslationError, TranslationProvider,
    UnreachableTranslator,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PerturbError {
    #[error("position {position} is out of range")]
    PositionOutOfRange { position: usize },
    #[error("character at position {position} is not a cased letter")]
    NotCased { position: usize },
    #[error("position {position} is at a word boundary")]
    WordBoundary { position: usize },
    #[error("letter {letter:?} is not in the keyboard table")]
    NotOnKeyboard { letter: char },
    #[error("rank {rank} out of range ({available} available)")]
    RankOutOfRange { rank: usize, available: usize },
    #[error("word {word:?} is not substitutable")]
    NotSubstitutable { word: String },
    #[error("word index {word_index} is out of range")]
    WordOutOfRange { word_index: usize },
    #[error("word {word:?} is not alphabetic")]
    NotAlphabetic { word: String },
    #[error("{table} table: malformed line {line}")]
    TableFormat { table: &'static str, line: usize },
    #[error("invalid lexicon entry: {0}")]
    InvalidLexiconEntry(String),
    #[error("trace does not match the original text at byte {offset}")]
    TraceMismatch { offset: usize },
    #[error("unknown perturbation method {0:?}")]
    UnknownMethod(String),
    #[error(transparent)]
    Translation(#[from] TranslationError),
    #[error(transparent)]
    Segmentation(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MethodId {
    C1,
    C2,
    C3,
    W1,
    W2,
    W3,
    S1,
    S2,
    S3,
    #[serde(rename = "C_mix")]
    CMix,
    #[serde(rename = "W_mix")]
    WMix,
    #[serde(rename = "S_mix")]
    SMix,
    #[serde(rename = "mix_all")]
    MixAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Character,
    Word,
    Sentence,
}

impl MethodId {
    /// Nine single operators followed by the four aggregates.
    pub const ALL: [MethodId; 13] = [
        Self::C1,
        Self::C2,
        Self::C3,
        Self::W1,
        Self::W2,
        Self::W3,
        Self::S1,
        Self::S2,
        Self::S3,
        Self::CMix,
        Self::WMix,
        Self::SMix,
        Self::MixAll,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::C1 => "C1",
            Self::C2 => "C2",
            Self::C3 => "C3",
            Self::W1 => "W1",
            Self::W2 => "W2",
            Self::W3 => "W3",
            Self::S1 => "S1",
            Self::S2 => "S2",
            Self::S3 => "S3",
            Self::CMix => "C_mix",
            Self::WMix => "W_mix",
            Self::SMix => "S_mix",
            Self::MixAll => "mix_all",
        }
    }

    pub fn is_aggregate(self) -> bool {
        matches!(self, Self::CMix | Self::WMix | Self::SMix | Self::MixAll)
    }

    /// Concrete operators an id stands for.
    pub fn constituents(self) -> &'static [MethodId] {
        use MethodId::*;
        match self {
            CMix => &[C1, C2, C3],
            WMix => &[W1, W2, W3],
            SMix => &[S1, S2, S3],
            MixAll => &[C1, C2, C3, W1, W2, W3, S1, S2, S3],
            C1 => &[C1],
            C2 => &[C2],
            C3 => &[C3],
            W1 => &[W1],
            W2 => &[W2],
            W3 => &[W3],
            S1 => &[S1],
            S2 => &[S2],
            S3 => &[S3],
        }
    }

    /// `None` for `mix_all`, which spans all three.
    pub fn granularity(self) -> Option<Granularity> {
        use MethodId::*;
        match self {
            C1 | C2 | C3 | CMix => Some(Granularity::Character),
            W1 | W2 | W3 | WMix => Some(Granularity::Word),
            S1 | S2 | S3 | SMix => Some(Granularity::Sentence),
            MixAll => None,
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = PerturbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| PerturbError::UnknownMethod(s.to_string()))
    }
}

/// How many sites an operator touches.
///
/// Character operators edit `char_rate` of their eligible characters
/// (rounded half up, at least one); word operators edit `word_count` words;
/// sentence operators rewrite every editable region. `target_count`, when
/// set, overrides all three (for sentence operators it caps the number of
/// regions).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbParams {
    pub char_rate: f64,
    pub word_count: usize,
    pub target_count: Option<usize>,
}

impl Default for PerturbParams {
    fn default() -> Self {
        Self { char_rate: 0.05, word_count: 1, target_count: None }
    }
}

impl PerturbParams {
    fn sites_for(&self, method: MethodId, eligible: usize) -> usize {
        if eligible == 0 {
            return 0;
        }
        if let Some(n) = self.target_count {
            return n.min(eligible);
        }
        match method.granularity() {
            Some(Granularity::Character) => {
                if self.char_rate <= 0.0 {
                    0
                } else {
                    ((self.char_rate * eligible as f64 + 0.5).floor() as usize).clamp(1, eligible)
                }
            }
            Some(Granularity::Word) => self.word_count.min(eligible),
            _ => eligible,
        }
    }
}

/// Operator tables and the translation provider, immutable after
/// construction and shareable across threads.
#[derive(Clone)]
pub struct Perturber {
    pub keyboard: Keyboard,
    pub lexicon: SynonymLexicon,
    pub verbs: VerbTable,
    pub translator: Arc<dyn TranslationProvider>,
}

impl fmt::Debug for Perturber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Perturber")
            .field("lexicon_entries", &self.lexicon.len())
            .field("verbs", &self.verbs.len())
            .field("translator", &self.translator.name())
            .finish()
    }
}

impl Default for Perturber {
    fn default() -> Self {
        let lexicon = SynonymLexicon::bundled();
        Self {
            keyboard: Keyboard::qwerty(),
            translator: Arc::new(DictionaryTranslator::new(lexicon.clone())),
            lexicon,
            verbs: VerbTable::bundled(),
        }
    }
}

impl Perturber {
    pub fn with_translator(mut self, translator: Arc<dyn TranslationProvider>) -> Self {
        self.translator = translator;
        self
    }

    pub fn with_lexicon(mut self, lexicon: SynonymLexicon) -> Self {
        self.lexicon = lexicon;
        self
    }

    /// Perturbs a whole text as one natural-language region.
    pub fn perturb_text(
        &self,
        text: &str,
        method: MethodId,
        params: &PerturbParams,
        seed: u64,
    ) -> Result<(String, PerturbationTrace), PerturbError> {
        self.perturb_ranges(text, &[0..text.len()], method, params, seed)
    }

    /// Perturbs `text`, editing only inside `ranges` (sorted, disjoint).
    pub fn perturb_ranges(
        &self,
        text: &str,
        ranges: &[Range<usize>],
        method: MethodId,
        params: &PerturbParams,
        seed: u64,
    ) -> Result<(String, PerturbationTrace), PerturbError> {
        let mut rng = SplitMix64::new(seed);
        let constituents = method.constituents();
        let applied = constituents[rng.below_usize(constituents.len())];
        let mut trace = PerturbationTrace::noop(method, seed);
        trace.applied = Some(applied);
        let edits = self.collect_edits(text, ranges, applied, params, &mut rng, &mut trace)?;
        let out = apply_edits(text, &edits)?;
        trace.edits = edits;
        Ok((out, trace))
    }

    fn collect_edits(
        &self,
        text: &str,
        ranges: &[Range<usize>],
        method: MethodId,
        params: &PerturbParams,
        rng: &mut SplitMix64,
        trace: &mut PerturbationTrace,
    ) -> Result<Vec<Edit>, PerturbError> {
        use MethodId::*;
        let mut edits = Vec::new();
        match method {
            C1 => {
                let sites = char_sites(text, ranges, |c| self.keyboard.contains(c));
                let k = params.sites_for(method, sites.len());
                for idx in rng.permutation_prefix(sites.len(), k) {
                    let byte = sites[idx];
                    let c = text[byte..].chars().next().expect("site is a char boundary");
                    let degree = self.keyboard.neighbors(c).map_or(0, <[char]>::len);
                    let mode = if rng.below(2) == 0 { TypoMode::Substitute } else { TypoMode::Insert };
                    let rank = rng.below_usize(degree);
                    edits.push(kernels::typo_edit(text, byte, mode, rank, &self.keyboard, byte)?);
                }
            }
            C2 => {
                // Sites are starts of adjacent alphanumeric pairs inside one range.
                let sites: Vec<usize> = ranges
                    .iter()
                    .flat_map(|r| {
                        let chars: Vec<(usize, char)> =
                            text[r.clone()].char_indices().map(|(i, c)| (r.start + i, c)).collect();
                        chars
                            .windows(2)
                            .filter(|w| w[0].1.is_alphanumeric() && w[1].1.is_alphanumeric())
                            .map(|w| w[0].0)
                            .collect::<Vec<_>>()
                    })
                    .collect();
                let k = params.sites_for(method, sites.len());
                let order = rng.permutation_prefix(sites.len(), sites.len());
                let mut taken: Vec<Range<usize>> = Vec::new();
                for idx in order {
                    if edits.len() == k {
                        break;
                    }
                    let edit = kernels::swap_edit(text, sites[idx]).expect("eligible pair");
                    let r = edit.range();
                    if taken.iter().any(|t| t.start < r.end && r.start < t.end) {
                        continue;
                    }
                    taken.push(r);
                    edits.push(edit);
                }
            }
            C3 => {
                let sites = char_sites(text, ranges, |c| toggle_case(c).is_some());
                let k = params.sites_for(method, sites.len());
                for idx in rng.permutation_prefix(sites.len(), k) {
                    edits.push(kernels::case_flip_edit(text, sites[idx]).expect("cased site"));
                }
            }
            W1 | W2 => {
                let sites: Vec<Range<usize>> = ranges
                    .iter()
                    .flat_map(|r| word_spans(text, r.clone()))
                    .filter(|w| self.lexicon.lookup(&text[w.clone()]).is_some())
                    .collect();
                let k = params.sites_for(method, sites.len());
                for idx in rng.permutation_prefix(sites.len(), k) {
                    let w = sites[idx].clone();
                    let n = self.lexicon.lookup(&text[w.clone()]).map_or(0, <[String]>::len);
                    let rank = rng.below_usize(n);
                    edits.push(kernels::synonym_edit(text, w, &self.lexicon, rank, method == W1)?);
                }
            }
            W3 => {
                let sites: Vec<Range<usize>> = ranges
                    .iter()
                    .flat_map(|r| word_spans(text, r.clone()))
                    .filter(|w| {
                        let t = &text[w.clone()];
                        t.chars().all(|c| c.is_ascii_alphabetic()) && self.verbs.recognize(t).is_some()
                    })
                    .collect();
                let k = params.sites_for(method, sites.len());
                for idx in rng.permutation_prefix(sites.len(), k) {
                    let w = sites[idx].clone();
                    let token = &text[w.clone()];
                    let options: Vec<String> = Inflection::ALL
                        .iter()
                        .filter_map(|v| kernels::inflect_token(token, *v, &self.verbs))
                        .fold(Vec::new(), |mut acc, s| {
                            if !acc.contains(&s) {
                                acc.push(s);
                            }
                            acc
                        });
                    if options.is_empty() {
                        continue;
                    }
                    let pick = options[rng.below_usize(options.len())].clone();
                    edits.push(Edit::new(text, w, pick));
                }
            }
            S1 | S2 | S3 => {
                let regions: Vec<Range<usize>> = ranges.iter().filter_map(|r| trimmed(text, r.clone())).collect();
                let k = params.sites_for(method, regions.len());
                let mut chosen = rng.permutation_prefix(regions.len(), k);
                chosen.sort_unstable();
                for idx in chosen {
                    let region = regions[idx].clone();
                    match method {
                        S1 => {
                            let rt = back_translate(&text[region.clone()], self.translator.as_ref())?;
                            trace.pivot = Some(rt.pivot);
                            if rt.text != text[region.clone()] {
                                edits.push(Edit::new(text, region, rt.text));
                            }
                        }
                        S2 => edits.extend(kernels::tense_edits(text, region, Tense::Past, &self.verbs)),
                        _ => edits.extend(kernels::tense_edits(text, region, Tense::Future, &self.verbs)),
                    }
                }
            }
            CMix | WMix | SMix | MixAll => unreachable!("aggregates are resolved before dispatch"),
        }
        edits.sort_by_key(|e| e.start);
        Ok(edits)
    }

    /// Perturbs the natural-language field of a sample; everything else is
    /// carried over unchanged.
    pub fn perturb_sample<S: Perturbable>(
        &self,
        sample: &S,
        method: MethodId,
        params: &PerturbParams,
        seed: u64,
    ) -> Result<(S, PerturbationTrace), PerturbError> {
        let text = sample.nl_text();
        let ranges = editable_ranges(text, S::TEXT_KIND)?;
        let (out, mut trace) = self.perturb_ranges(text, &ranges, method, params, seed)?;
        trace.field = S::FIELD.to_string();
        Ok((sample.with_nl_text(out), trace))
    }
}

fn char_sites(text: &str, ranges: &[Range<usize>], eligible: impl Fn(char) -> bool) -> Vec<usize> {
    ranges
        .iter()
        .flat_map(|r| {
            text[r.clone()].char_indices().filter(|(_, c)| eligible(*c)).map(|(i, _)| r.start + i).collect::<Vec<_>>()
        })
        .collect()
}

fn trimmed(text: &str, r: Range<usize>) -> Option<Range<usize>> {
    let slice = &text[r.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let tail = slice.len() - slice.trim_end().len();
    (lead + tail < slice.len()).then(|| r.start + lead..r.end - tail)
}

/// A sample with one natural-language field that perturbation may edit.
pub trait Perturbable: Clone {
    const TEXT_KIND: TextKind;
    const FIELD: &'static str;
    fn nl_text(&self) -> &str;
    fn with_nl_text(&self, text: String) -> Self;
}

impl Perturbable for InstructionSample {
    const TEXT_KIND: TextKind = TextKind::Instruction;
    const FIELD: &'static str = "instruction";

    fn nl_text(&self) -> &str {
        &self.instruction
    }

    fn with_nl_text(&self, text: String) -> Self {
        Self { instruction: text, output: self.output.clone() }
    }
}

impl Perturbable for TaskSpec {
    const TEXT_KIND: TextKind = TextKind::Prompt;
    const FIELD: &'static str = "prompt";

    fn nl_text(&self) -> &str {
        &self.prompt
    }

    fn with_nl_text(&self, text: String) -> Self {
        Self { prompt: text, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_ids_parse_and_expand() {
        for m in MethodId::ALL {
            assert_eq!(m.as_str().parse::<MethodId>().unwrap(), m);
            if !m.is_aggregate() {
                assert_eq!(m.constituents(), &[m]);
            }
        }
        assert_eq!(MethodId::MixAll.constituents().len(), 9);
        assert!(MethodId::CMix.constituents().iter().all(|c| c.granularity() == Some(Granularity::Character)));
        assert!("Z9".parse::<MethodId>().is_err());
        assert_eq!(serde_json::to_string(&MethodId::MixAll).unwrap(), "\"mix_all\"");
    }

    #[test]
    fn zero_targets_is_identity() {
        let p = Perturber::default();
        let text = "Return the sorted list of unique elements.";
        for m in MethodId::ALL {
            let params = PerturbParams { target_count: Some(0), ..Default::default() };
            let (out, trace) = p.perturb_text(text, m, &params, 3).unwrap();
            assert_eq!(out, text);
            assert!(trace.is_noop());
            let rate0 = PerturbParams { char_rate: 0.0, ..Default::default() };
            if m.granularity() == Some(Granularity::Character) {
                assert_eq!(p.perturb_text(text, m, &rate0, 3).unwrap().0, text);
            }
        }
    }

    #[test]
    fn same_seed_same_output() {
        let p = Perturber::default();
        let text = "Write a function that checks whether the given list contains duplicates.";
        for m in MethodId::ALL {
            let a = p.perturb_text(text, m, &PerturbParams::default(), 99).unwrap();
            let b = p.perturb_text(text, m, &PerturbParams::default(), 99).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn every_single_operator_changes_typical_prose() {
        let p = Perturber::default();
        let text = "Write a function that checks whether the given list contains duplicate numbers.";
        for m in MethodId::ALL.into_iter().filter(|m| !m.is_aggregate()) {
            let (out, trace) = p.perturb_text(text, m, &PerturbParams::default(), 5).unwrap();
            assert_ne!(out, text, "{m}");
            assert_eq!(trace.replay(text).unwrap(), out);
        }
    }

    #[test]
    fn default_rate_is_five_percent_min_one() {
        let params = PerturbParams::default();
        assert_eq!(params.sites_for(MethodId::C3, 3), 1);
        assert_eq!(params.sites_for(MethodId::C3, 100), 5);
        assert_eq!(params.sites_for(MethodId::C3, 30), 2); // 1.5 rounds up
        assert_eq!(params.sites_for(MethodId::W2, 10), 1);
        assert_eq!(params.sites_for(MethodId::S2, 4), 4);
        assert_eq!(params.sites_for(MethodId::S2, 0), 0);
    }

    #[test]
    fn no_eligible_sites_is_noop() {
        let p = Perturber::default();
        let (out, trace) = p.perturb_text("1234 5678", MethodId::C3, &PerturbParams::default(), 1).unwrap();
        assert_eq!(out, "1234 5678");
        assert!(trace.is_noop());
    }

    #[test]
    fn task_without_docstring_is_unchanged() {
        let p = Perturber::default();
        let task = TaskSpec {
            name: "t".into(),
            language: "python".into(),
            prompt: "def add(a, b):\n".into(),
            tests: "assert add(1, 2) == 3\n".into(),
            completions: vec![],
            stop_tokens: vec![],
        };
        for m in MethodId::ALL {
            let (out, trace) = p.perturb_sample(&task, m, &PerturbParams::default(), 8).unwrap();
            assert_eq!(out, task);
            assert!(trace.is_noop());
        }
    }

    #[test]
    fn instruction_output_is_untouched() {
        let p = Perturber::default();
        let s = InstructionSample {
            instruction: "Modify a provided function which flips characters at odd positions.".into(),
            output: "def f(s):\n    return s[::-1]\n".into(),
        };
        let (out, trace) = p.perturb_sample(&s, MethodId::C3, &PerturbParams::default(), 4).unwrap();
        assert_eq!(out.output, s.output);
        assert_ne!(out.instruction, s.instruction);
        assert_eq!(out.instruction.to_lowercase(), s.instruction.to_lowercase());
        assert_eq!(trace.field, "instruction");
    }

    #[test]
    fn failing_translator_propagates() {
        let p = Perturber::default().with_translator(Arc::new(UnreachableTranslator { status: "timeout".into() }));
        let err = p.perturb_text("Sort it.", MethodId::S1, &PerturbParams::default(), 0).unwrap_err();
        assert!(matches!(err, PerturbError::Translation(_)));
    }
}
