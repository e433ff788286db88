//! Round-trip translation providers for the back-translation operator.
//!
//! Real machine translation is deployment configuration; the workbench ships
//! two deterministic providers used as defaults and test doubles.

use std::fmt;

use super::kernels::{match_leading_case, word_spans};
use super::tables::SynonymLexicon;
use super::trace::{apply_edits, Edit};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundTrip {
    pub text: String,
    /// Free-form description of the pivot (language, engine, version).
    pub pivot: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationError {
    pub provider: String,
    pub status: String,
}

impl fmt::Display for TranslationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "translation provider {} failed: {}", self.provider, self.status)
    }
}

impl std::error::Error for TranslationError {}

/// Translates text to a pivot language and back.
///
/// Implementations are shared across worker threads and must tolerate
/// concurrent calls.
pub trait TranslationProvider: Send + Sync {
    fn name(&self) -> &str;
    fn round_trip(&self, text: &str) -> Result<RoundTrip, TranslationError>;
}

/// Returns its input unchanged.
#[derive(Debug, Default, Clone)]
pub struct IdentityTranslator;

impl TranslationProvider for IdentityTranslator {
    fn name(&self) -> &str {
        "identity"
    }

    fn round_trip(&self, text: &str) -> Result<RoundTrip, TranslationError> {
        Ok(RoundTrip { text: text.to_string(), pivot: "identity".into() })
    }
}

/// Word-for-word pivot through a synonym lexicon: every word with an entry
/// comes back as its first synonym, everything else verbatim.
#[derive(Debug, Clone)]
pub struct DictionaryTranslator {
    lexicon: SynonymLexicon,
}

impl DictionaryTranslator {
    pub fn new(lexicon: SynonymLexicon) -> Self {
        Self { lexicon }
    }
}

impl TranslationProvider for DictionaryTranslator {
    fn name(&self) -> &str {
        "dictionary"
    }

    fn round_trip(&self, text: &str) -> Result<RoundTrip, TranslationError> {
        let edits: Vec<Edit> = word_spans(text, 0..text.len())
            .into_iter()
            .filter_map(|w| {
                let token = &text[w.clone()];
                let syn = self.lexicon.lookup(token)?.first()?;
                Some(Edit::new(text, w, match_leading_case(token, syn)))
            })
            .collect();
        let out = apply_edits(text, &edits).expect("word spans are disjoint");
        Ok(RoundTrip { text: out, pivot: format!("dictionary:{} entries", self.lexicon.len()) })
    }
}

/// A provider that always fails; stands in for an unreachable service.
#[derive(Debug, Clone)]
pub struct UnreachableTranslator {
    pub status: String,
}

impl TranslationProvider for UnreachableTranslator {
    fn name(&self) -> &str {
        "unreachable"
    }

    fn round_trip(&self, _text: &str) -> Result<RoundTrip, TranslationError> {
        Err(TranslationError { provider: self.name().into(), status: self.status.clone() })
    }
}

/// Provider output for `text`, returned verbatim.
pub fn back_translate(text: &str, provider: &dyn TranslationProvider) -> Result<RoundTrip, TranslationError> {
    provider.round_trip(text)
}

#[cfg(test)]
mod tests {
    use super::super::kernels::apply_synonym_substitute;
    use super::*;

    #[test]
    fn identity_keeps_input() {
        let out = back_translate("Sort the list.", &IdentityTranslator).unwrap();
        assert_eq!(out.text, "Sort the list.");
    }

    #[test]
    fn dictionary_equals_chained_substitution() {
        let lex = SynonymLexicon::bundled();
        let text = "Write a function that checks whether the given list contains duplicate numbers.";
        let via_provider = back_translate(text, &DictionaryTranslator::new(lex.clone())).unwrap().text;

        // Oracle: substitute rank 0 on every entry-bearing word, one at a time.
        // Single-token synonyms keep word indices stable.
        let mut chained = text.to_string();
        let n_words = word_spans(text, 0..text.len()).len();
        for i in 0..n_words {
            if let Ok(next) = apply_synonym_substitute(&chained, i, &lex, 0) {
                let original_word = &text[word_spans(text, 0..text.len())[i].clone()];
                if lex.lookup(original_word).is_some() {
                    chained = next;
                }
            }
        }
        assert_eq!(via_provider, chained);
        assert_ne!(via_provider, text);
    }

    #[test]
    fn unreachable_reports_status() {
        let p = UnreachableTranslator { status: "connection refused".into() };
        let err = back_translate("x", &p).unwrap_err();
        assert_eq!(err.status, "connection refused");
    }
}
