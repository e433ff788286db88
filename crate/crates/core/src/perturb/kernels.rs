//! Site-level operator kernels.
//!
//! Each `apply_*` function edits exactly one site (or, for tense transforms,
//! every recognized verb) of a whole text. The `*_edit` helpers compute the
//! same change as an [`Edit`] against a larger text so the dispatcher can
//! batch several sites and record them in a trace.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::tables::{is_word_char, Keyboard, SynonymLexicon, VerbForm, VerbTable};
use super::trace::{apply_edits, Edit};
use super::PerturbError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypoMode {
    Substitute,
    Insert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inflection {
    /// Plural / third-person singular -s.
    ThirdS,
    Ing,
    Ed,
    /// Back to the base form.
    Strip,
}

impl Inflection {
    pub const ALL: [Inflection; 4] = [Self::ThirdS, Self::Ing, Self::Ed, Self::Strip];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tense {
    Past,
    Future,
}

/// Byte ranges of word tokens (maximal runs of alphanumerics and `_`)
/// inside `range`.
pub fn word_spans(text: &str, range: Range<usize>) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text[range.clone()].char_indices() {
        let at = range.start + i;
        match (is_word_char(c), start) {
            (true, None) => start = Some(at),
            (false, Some(s)) => {
                spans.push(s..at);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(s..range.end);
    }
    spans
}

fn char_at(text: &str, index: usize) -> Result<(usize, char), PerturbError> {
    text.char_indices().nth(index).ok_or(PerturbError::PositionOutOfRange { position: index })
}

fn word_at(text: &str, word_index: usize) -> Result<Range<usize>, PerturbError> {
    word_spans(text, 0..text.len()).into_iter().nth(word_index).ok_or(PerturbError::WordOutOfRange { word_index })
}

/// The other-case counterpart of `c`, when the mapping is one character in
/// both directions.
pub fn toggle_case(c: char) -> Option<char> {
    let single = |mut it: Box<dyn Iterator<Item = char>>| match (it.next(), it.next()) {
        (Some(x), None) => Some(x),
        _ => None,
    };
    let flipped = if c.is_lowercase() {
        single(Box::new(c.to_uppercase()))?
    } else if c.is_uppercase() {
        single(Box::new(c.to_lowercase()))?
    } else {
        return None;
    };
    if flipped == c {
        return None;
    }
    let back = if flipped.is_lowercase() {
        single(Box::new(flipped.to_uppercase()))?
    } else {
        single(Box::new(flipped.to_lowercase()))?
    };
    (back == c).then_some(flipped)
}

fn with_case_of(template: char, c: char) -> char {
    if template.is_uppercase() {
        c.to_uppercase().next().unwrap_or(c)
    } else {
        c
    }
}

/// Capitalizes `word` when `template` starts with an uppercase letter.
pub fn match_leading_case(template: &str, word: &str) -> String {
    match (template.chars().next(), word.chars().next()) {
        (Some(t), Some(first)) if t.is_uppercase() => {
            let mut out: String = first.to_uppercase().collect();
            out.push_str(&word[first.len_utf8()..]);
            out
        }
        _ => word.to_string(),
    }
}

pub(crate) fn case_flip_edit(text: &str, byte: usize) -> Option<Edit> {
    let c = text[byte..].chars().next()?;
    let flipped = toggle_case(c)?;
    Some(Edit::new(text, byte..byte + c.len_utf8(), flipped.to_string()))
}

/// Toggles the case of the letters at the given character indices.
pub fn apply_case_flip(text: &str, positions: &BTreeSet<usize>) -> Result<String, PerturbError> {
    let mut edits = Vec::with_capacity(positions.len());
    for &p in positions {
        let (byte, _) = char_at(text, p)?;
        edits.push(case_flip_edit(text, byte).ok_or(PerturbError::NotCased { position: p })?);
    }
    apply_edits(text, &edits)
}

/// Swap of the characters starting at `byte` and the one after it, when
/// both are word characters.
pub(crate) fn swap_edit(text: &str, byte: usize) -> Option<Edit> {
    let mut it = text[byte..].chars();
    let a = it.next()?;
    let b = it.next()?;
    if !(a.is_alphanumeric() && b.is_alphanumeric()) {
        return None;
    }
    let end = byte + a.len_utf8() + b.len_utf8();
    Some(Edit::new(text, byte..end, format!("{b}{a}")))
}

/// Exchanges the characters at `index` and `index + 1` within one word.
pub fn apply_adjacent_swap(text: &str, index: usize) -> Result<String, PerturbError> {
    let (byte, _) = char_at(text, index)?;
    let edit = swap_edit(text, byte).ok_or(PerturbError::WordBoundary { position: index })?;
    apply_edits(text, &[edit])
}

pub(crate) fn typo_edit(
    text: &str,
    byte: usize,
    mode: TypoMode,
    neighbor_rank: usize,
    keyboard: &Keyboard,
    position: usize,
) -> Result<Edit, PerturbError> {
    let c = text[byte..].chars().next().ok_or(PerturbError::PositionOutOfRange { position })?;
    let neighbors = keyboard.neighbors(c).ok_or(PerturbError::NotOnKeyboard { letter: c })?;
    let n = *neighbors
        .get(neighbor_rank)
        .ok_or(PerturbError::RankOutOfRange { rank: neighbor_rank, available: neighbors.len() })?;
    let n = with_case_of(c, n);
    let after = match mode {
        TypoMode::Substitute => n.to_string(),
        TypoMode::Insert => format!("{c}{n}"),
    };
    Ok(Edit::new(text, byte..byte + c.len_utf8(), after))
}

/// Keyboard typo at character `index`: replace the letter with its
/// `neighbor_rank`-th adjacent key, or insert that key after it.
pub fn apply_typo(
    text: &str,
    index: usize,
    mode: TypoMode,
    neighbor_rank: usize,
    keyboard: &Keyboard,
) -> Result<String, PerturbError> {
    let (byte, _) = char_at(text, index)?;
    let edit = typo_edit(text, byte, mode, neighbor_rank, keyboard, index)?;
    apply_edits(text, &[edit])
}

pub(crate) fn synonym_edit(
    text: &str,
    word: Range<usize>,
    lexicon: &SynonymLexicon,
    rank: usize,
    insert: bool,
) -> Result<Edit, PerturbError> {
    let token = &text[word.clone()];
    let syns = lexicon.lookup(token).ok_or_else(|| PerturbError::NotSubstitutable { word: token.to_string() })?;
    let syn = syns.get(rank).ok_or(PerturbError::RankOutOfRange { rank, available: syns.len() })?;
    let after = if insert { format!("{token} {syn}") } else { match_leading_case(token, syn) };
    Ok(Edit::new(text, word, after))
}

/// Replaces word `word_index` with its `synonym_rank`-th synonym, keeping a
/// leading capital.
pub fn apply_synonym_substitute(
    text: &str,
    word_index: usize,
    lexicon: &SynonymLexicon,
    synonym_rank: usize,
) -> Result<String, PerturbError> {
    let word = word_at(text, word_index)?;
    apply_edits(text, &[synonym_edit(text, word, lexicon, synonym_rank, false)?])
}

/// Inserts the `synonym_rank`-th synonym right after word `word_index`.
pub fn apply_synonym_insert(
    text: &str,
    word_index: usize,
    lexicon: &SynonymLexicon,
    synonym_rank: usize,
) -> Result<String, PerturbError> {
    let word = word_at(text, word_index)?;
    apply_edits(text, &[synonym_edit(text, word, lexicon, synonym_rank, true)?])
}

/// The inflected spelling of `token`, or `None` when it is already in the
/// requested form.
pub(crate) fn inflect_token(token: &str, variant: Inflection, verbs: &VerbTable) -> Option<String> {
    let lower = token.to_lowercase();
    let hit = verbs.recognize(&lower);
    let base = hit.as_ref().map(|h| h.base.clone()).unwrap_or_else(|| lower.clone());
    let forms = verbs.forms_or_rules(&base);
    let target = match variant {
        Inflection::ThirdS => forms.third,
        Inflection::Ing => forms.ing,
        Inflection::Ed => hit.and_then(|h| h.past_override).unwrap_or(forms.past),
        Inflection::Strip => forms.base,
    };
    (target != lower).then(|| match_leading_case(token, &target))
}

/// Changes the inflection of word `word_index`. Known verbs use the verb
/// table; any other ASCII alphabetic word is treated as a base form and
/// run through the suffix rules. Returns the text unchanged when the word
/// already has the requested form.
pub fn apply_inflection(
    text: &str,
    word_index: usize,
    variant: Inflection,
    verbs: &VerbTable,
) -> Result<String, PerturbError> {
    let word = word_at(text, word_index)?;
    let token = &text[word.clone()];
    if !token.chars().all(|c| c.is_ascii_alphabetic()) {
        return Err(PerturbError::NotAlphabetic { word: token.to_string() });
    }
    match inflect_token(token, variant, verbs) {
        Some(new) => apply_edits(text, &[Edit::new(text, word, new)]),
        None => Ok(text.to_string()),
    }
}

/// Words after which a verb-shaped token is not rewritten: infinitive
/// markers, modals, negation, determiners and prepositions.
const TENSE_BLOCKERS: &[&str] = &[
    "to", "will", "would", "can", "could", "shall", "should", "may", "might", "must", "not", "never", "the", "a", "an",
    "this", "that", "these", "those", "each", "every", "its", "their", "his", "her", "our", "your", "my", "no", "any",
    "some", "all", "of", "for", "in", "on", "with", "by", "from", "into", "given", "did", "didn",
];

/// Edits that move present-tense verbs in `range` to `tense`.
///
/// A token is rewritten when it is a base, third-person or extra present
/// form in the verb table, is not preceded (within the same clause) by a
/// blocker word, and does not directly follow another verb form.
pub(crate) fn tense_edits(text: &str, range: Range<usize>, tense: Tense, verbs: &VerbTable) -> Vec<Edit> {
    let words = word_spans(text, range);
    let mut edits = Vec::new();
    for (i, w) in words.iter().enumerate() {
        let token = &text[w.clone()];
        let Some(hit) = verbs.recognize(token) else { continue };
        if !matches!(hit.form, VerbForm::Base | VerbForm::Third | VerbForm::Present) {
            continue;
        }
        if i > 0 {
            let prev = &words[i - 1];
            let gap = &text[prev.end..w.start];
            let same_clause = !gap.chars().any(|c| ".,;:!?()\n".contains(c));
            if same_clause {
                let prev_tok = text[prev.clone()].to_lowercase();
                if TENSE_BLOCKERS.contains(&prev_tok.as_str()) || verbs.recognize(&prev_tok).is_some() {
                    continue;
                }
            }
        }
        let forms = verbs.forms_or_rules(&hit.base);
        let new = match tense {
            Tense::Past => hit.past_override.clone().unwrap_or(forms.past),
            Tense::Future => {
                let next_is_not =
                    words.get(i + 1).map(|n| text[n.clone()].eq_ignore_ascii_case("not")).unwrap_or(false);
                if hit.base == "do" && next_is_not {
                    "will".to_string()
                } else {
                    format!("will {}", forms.base)
                }
            }
        };
        let new = match_leading_case(token, &new);
        if new != token {
            edits.push(Edit::new(text, w.clone(), new));
        }
    }
    edits
}

/// Rewrites every recognized present-tense verb: past via the verb table,
/// future as "will " + base form.
pub fn apply_tense_transform(text: &str, tense: Tense, verbs: &VerbTable) -> String {
    let edits = tense_edits(text, 0..text.len(), tense, verbs);
    apply_edits(text, &edits).expect("tense edits are disjoint word spans")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn case_flip_examples() {
        assert_eq!(apply_case_flip("Hello", &set(&[0])).unwrap(), "hello");
        assert_eq!(apply_case_flip("abc", &set(&[])).unwrap(), "abc");
        assert_eq!(apply_case_flip("a1B", &set(&[0, 2])).unwrap(), "A1b");
        assert_eq!(apply_case_flip("a1B", &set(&[1])), Err(PerturbError::NotCased { position: 1 }));
        assert_eq!(apply_case_flip("ab", &set(&[5])), Err(PerturbError::PositionOutOfRange { position: 5 }));
    }

    #[test]
    fn toggle_rejects_lossy_mappings() {
        assert_eq!(toggle_case('ß'), None);
        assert_eq!(toggle_case('é'), Some('É'));
        assert_eq!(toggle_case('7'), None);
    }

    #[test]
    fn swap_examples() {
        assert_eq!(apply_adjacent_swap("world", 2).unwrap(), "wolrd");
        assert_eq!(apply_adjacent_swap("ab", 0).unwrap(), "ba");
        let once = apply_adjacent_swap("robust", 3).unwrap();
        assert_eq!(apply_adjacent_swap(&once, 3).unwrap(), "robust");
        assert_eq!(apply_adjacent_swap("ab cd", 1), Err(PerturbError::WordBoundary { position: 1 }));
        assert!(apply_adjacent_swap("ab", 1).is_err());
        assert!(apply_adjacent_swap("ab", 9).is_err());
    }

    #[test]
    fn typo_examples_follow_shipped_table() {
        let kb = Keyboard::qwerty();
        let first = kb.neighbors('a').unwrap()[0];
        assert_eq!(first, 'q');
        assert_eq!(apply_typo("cat", 1, TypoMode::Substitute, 0, &kb).unwrap(), "cqt");
        assert_eq!(apply_typo("cat", 1, TypoMode::Insert, 0, &kb).unwrap(), "caqt");
        assert_eq!(apply_typo("Cat", 0, TypoMode::Substitute, 0, &kb).unwrap(), "Sat");
        for (rank, n) in kb.neighbors('a').unwrap().iter().enumerate() {
            let out = apply_typo("cat", 1, TypoMode::Substitute, rank, &kb).unwrap();
            assert_eq!(out, format!("c{n}t"));
        }
        assert!(matches!(
            apply_typo("cat", 1, TypoMode::Substitute, 5, &kb),
            Err(PerturbError::RankOutOfRange { rank: 5, available: 5 })
        ));
        assert_eq!(
            apply_typo("c1t", 1, TypoMode::Substitute, 0, &kb),
            Err(PerturbError::NotOnKeyboard { letter: '1' })
        );
    }

    #[test]
    fn typo_substitute_back_restores() {
        let kb = Keyboard::qwerty();
        for (c, ns) in kb.letters() {
            for (rank, n) in ns.iter().enumerate() {
                let text = c.to_string();
                let there = apply_typo(&text, 0, TypoMode::Substitute, rank, &kb).unwrap();
                assert_eq!(there, n.to_string());
                let back_rank = kb.neighbors(*n).unwrap().iter().position(|x| *x == c).unwrap();
                let back = apply_typo(&there, 0, TypoMode::Substitute, back_rank, &kb).unwrap();
                assert_eq!(back, text);
            }
        }
    }

    fn lex(pairs: &[(&str, &[&str])]) -> SynonymLexicon {
        let mut l = SynonymLexicon::default();
        for (w, s) in pairs {
            l.insert(w, s.iter().map(|x| x.to_string()).collect()).unwrap();
        }
        l
    }

    #[test]
    fn synonym_substitute_examples() {
        let l = lex(&[("list", &["array"]), ("sort", &["order"])]);
        assert_eq!(apply_synonym_substitute("sort the list", 2, &l, 0).unwrap(), "sort the array");
        assert_eq!(apply_synonym_substitute("Sort the list", 0, &l, 0).unwrap(), "Order the list");
        assert_eq!(
            apply_synonym_substitute("sort the list", 1, &l, 0),
            Err(PerturbError::NotSubstitutable { word: "the".into() })
        );
    }

    #[test]
    fn synonym_insert_examples() {
        let l = lex(&[("list", &["array"]), ("a", &["x"])]);
        assert_eq!(apply_synonym_insert("sort the list", 2, &l, 0).unwrap(), "sort the list array");
        assert_eq!(apply_synonym_insert("a b", 0, &l, 0).unwrap(), "a x b");
        let out = apply_synonym_insert("sort the list now", 2, &l, 0).unwrap();
        assert_eq!(out.replacen(" array", "", 1), "sort the list now");
    }

    #[test]
    fn inflection_examples() {
        let v = VerbTable::bundled();
        assert_eq!(apply_inflection("return the value", 0, Inflection::ThirdS, &v).unwrap(), "returns the value");
        assert_eq!(apply_inflection("check", 0, Inflection::Ed, &v).unwrap(), "checked");
        assert_eq!(apply_inflection("is", 0, Inflection::Ed, &v).unwrap(), "was");
        assert_eq!(apply_inflection("are", 0, Inflection::Ed, &v).unwrap(), "were");
        assert_eq!(apply_inflection("Returns x", 0, Inflection::Strip, &v).unwrap(), "Return x");
        assert_eq!(apply_inflection("sorting", 0, Inflection::Ing, &v).unwrap(), "sorting");
        assert_eq!(apply_inflection("found it", 0, Inflection::Strip, &v).unwrap(), "find it");
        // unknown words go through the suffix rules
        assert_eq!(apply_inflection("blorp", 0, Inflection::Ing, &v).unwrap(), "blorping");
        assert!(apply_inflection("x2 y", 0, Inflection::Ed, &v).is_err());
    }

    fn small_table() -> VerbTable {
        VerbTable::parse("check\ncontain\nreturn\n").unwrap()
    }

    #[test]
    fn tense_examples() {
        let v = small_table();
        assert_eq!(
            apply_tense_transform("Check if the list contains duplicates", Tense::Past, &v),
            "Checked if the list contained duplicates"
        );
        assert_eq!(apply_tense_transform("returns x", Tense::Future, &v), "will return x");
        assert_eq!(apply_tense_transform("the quick brown fox", Tense::Past, &v), "the quick brown fox");
    }

    #[test]
    fn tense_with_bundled_table() {
        let v = VerbTable::bundled();
        assert_eq!(
            apply_tense_transform("Check if the list contains duplicates", Tense::Past, &v),
            "Checked if the list contained duplicates"
        );
        assert_eq!(
            apply_tense_transform("It is empty. Lists are sorted.", Tense::Past, &v),
            "It was empty. Lists were sorted."
        );
        assert_eq!(
            apply_tense_transform("Return the sum. It does not change.", Tense::Future, &v),
            "Will return the sum. It will not change."
        );
        assert_eq!(apply_tense_transform("we want to sort it", Tense::Past, &v), "we wanted to sort it");
    }
}
