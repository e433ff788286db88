//! Lookup tables behind the character- and word-level operators: keyboard
//! adjacency, the synonym lexicon and the verb table.

use std::collections::{BTreeMap, HashMap};

use super::PerturbError;

const KEYBOARD_DATA: &str = include_str!("../../data/keyboard_qwerty.tsv");
const LEXICON_DATA: &str = include_str!("../../data/lexicon.tsv");
const VERB_DATA: &str = include_str!("../../data/verbs.tsv");

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// Keyboard adjacency over lowercase letters, neighbors in row-major order.
#[derive(Debug, Clone)]
pub struct Keyboard {
    neighbors: BTreeMap<char, Vec<char>>,
}

impl Keyboard {
    pub fn qwerty() -> Self {
        Self::parse(KEYBOARD_DATA).expect("bundled keyboard table is valid")
    }

    /// Parses `<letter><TAB><neighbors>` lines.
    pub fn parse(text: &str) -> Result<Self, PerturbError> {
        let mut neighbors = BTreeMap::new();
        for (line_no, line) in data_lines(text) {
            let bad = || PerturbError::TableFormat { table: "keyboard", line: line_no };
            let (key, list) = line.split_once('\t').ok_or_else(bad)?;
            let mut chars = key.chars();
            let key = match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_lowercase() => c,
                _ => return Err(bad()),
            };
            let list: Vec<char> = list.chars().collect();
            if list.is_empty() || list.contains(&key) {
                return Err(bad());
            }
            neighbors.insert(key, list);
        }
        Ok(Self { neighbors })
    }

    /// Neighbors of a letter (case-insensitive), lowercase.
    pub fn neighbors(&self, c: char) -> Option<&[char]> {
        let lower = single_lower(c)?;
        self.neighbors.get(&lower).map(Vec::as_slice)
    }

    pub fn contains(&self, c: char) -> bool {
        self.neighbors(c).is_some()
    }

    pub fn letters(&self) -> impl Iterator<Item = (char, &[char])> {
        self.neighbors.iter().map(|(k, v)| (*k, v.as_slice()))
    }
}

fn single_lower(c: char) -> Option<char> {
    let mut it = c.to_lowercase();
    match (it.next(), it.next()) {
        (Some(l), None) => Some(l),
        _ => None,
    }
}

/// Word → ordered synonyms. Keys are lowercase.
#[derive(Debug, Clone, Default)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymLexicon {
    pub fn bundled() -> Self {
        Self::parse(LEXICON_DATA).expect("bundled lexicon is valid")
    }

    /// Parses `word<TAB>syn1,syn2,...` lines.
    pub fn parse(text: &str) -> Result<Self, PerturbError> {
        let mut lex = Self::default();
        for (line_no, line) in data_lines(text) {
            let bad = || PerturbError::TableFormat { table: "lexicon", line: line_no };
            let (word, syns) = line.split_once('\t').ok_or_else(bad)?;
            let syns: Vec<&str> = syns.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            if word.is_empty() || syns.is_empty() {
                return Err(bad());
            }
            lex.insert(word, syns.iter().map(|s| s.to_string()).collect()).map_err(|_| bad())?;
        }
        Ok(lex)
    }

    /// Adds an entry. Synonyms must be single tokens different from the word.
    pub fn insert(&mut self, word: &str, synonyms: Vec<String>) -> Result<(), PerturbError> {
        let key = word.to_lowercase();
        if !is_word_token(&key) {
            return Err(PerturbError::InvalidLexiconEntry(word.to_string()));
        }
        let mut list: Vec<String> = Vec::with_capacity(synonyms.len());
        for s in synonyms {
            let s = s.to_lowercase();
            if s == key || !is_word_token(&s) {
                return Err(PerturbError::InvalidLexiconEntry(format!("{word} -> {s}")));
            }
            if !list.contains(&s) {
                list.push(s);
            }
        }
        self.entries.insert(key, list);
        Ok(())
    }

    pub fn lookup(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

pub(crate) fn is_word_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_word_char)
}

pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Grammatical form of a verb token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerbForm {
    Base,
    Third,
    Past,
    Participle,
    Ing,
    /// An additional present form such as "are".
    Present,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbForms {
    pub base: String,
    pub past: String,
    pub third: String,
    pub participle: String,
    pub ing: String,
}

/// A recognized verb token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbHit {
    pub base: String,
    pub form: VerbForm,
    /// Past form specific to this token, when it differs from the verb's
    /// default past ("are" → "were").
    pub past_override: Option<String>,
}

/// Irregular verbs, extra present forms and known regular verbs, plus the
/// ordered suffix rules used for everything not listed as irregular.
#[derive(Debug, Clone, Default)]
pub struct VerbTable {
    verbs: BTreeMap<String, VerbForms>,
    extra_present: BTreeMap<String, (String, String)>,
    index: HashMap<String, Vec<(String, VerbForm)>>,
}

impl VerbTable {
    pub fn bundled() -> Self {
        Self::parse(VERB_DATA).expect("bundled verb table is valid")
    }

    pub fn parse(text: &str) -> Result<Self, PerturbError> {
        let mut table = Self::default();
        for (line_no, line) in data_lines(text) {
            let bad = || PerturbError::TableFormat { table: "verbs", line: line_no };
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            match fields.as_slice() {
                [word] if word.starts_with('+') => {
                    let base = &word[1..];
                    check_alpha(base).map_err(|_| bad())?;
                    table.add(regular_forms(base, true));
                }
                [base] => {
                    check_alpha(base).map_err(|_| bad())?;
                    table.add(regular_forms(base, false));
                }
                [form, base, past] if form.starts_with('=') => {
                    let form = &form[1..];
                    for w in [form, *base, *past] {
                        check_alpha(w).map_err(|_| bad())?;
                    }
                    table.extra_present.insert(form.to_string(), (base.to_string(), past.to_string()));
                }
                [base, past, third, participle, ing] => {
                    check_alpha(base).map_err(|_| bad())?;
                    let rule = regular_forms(base, false);
                    let pick = |field: &str, fallback: String| -> Result<String, PerturbError> {
                        if field == "-" {
                            Ok(fallback)
                        } else {
                            check_alpha(field).map_err(|_| bad())?;
                            Ok(field.to_string())
                        }
                    };
                    table.add(VerbForms {
                        base: base.to_string(),
                        past: pick(past, rule.past)?,
                        third: pick(third, rule.third)?,
                        participle: pick(participle, rule.participle)?,
                        ing: pick(ing, rule.ing)?,
                    });
                }
                _ => return Err(bad()),
            }
        }
        table.rebuild_index();
        Ok(table)
    }

    fn add(&mut self, forms: VerbForms) {
        self.verbs.insert(forms.base.clone(), forms);
    }

    fn rebuild_index(&mut self) {
        let mut index: HashMap<String, Vec<(String, VerbForm)>> = HashMap::new();
        let mut push = |w: &str, base: &str, form: VerbForm| {
            let slot = index.entry(w.to_string()).or_default();
            if !slot.iter().any(|(b, f)| b == base && *f == form) {
                slot.push((base.to_string(), form));
            }
        };
        for f in self.verbs.values() {
            push(&f.base, &f.base, VerbForm::Base);
            push(&f.third, &f.base, VerbForm::Third);
            push(&f.past, &f.base, VerbForm::Past);
            push(&f.participle, &f.base, VerbForm::Participle);
            push(&f.ing, &f.base, VerbForm::Ing);
        }
        for (form, (base, _)) in &self.extra_present {
            push(form, base, VerbForm::Present);
        }
        self.index = index;
    }

    pub fn forms(&self, base: &str) -> Option<&VerbForms> {
        self.verbs.get(base)
    }

    pub fn len(&self) -> usize {
        self.verbs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verbs.is_empty()
    }

    /// Recognizes a token (case-insensitive). Present-tense readings win
    /// over past/participle readings so that "read" and "set" are treated
    /// as base forms.
    pub fn recognize(&self, token: &str) -> Option<VerbHit> {
        let lower = token.to_lowercase();
        let hits = self.index.get(&lower)?;
        let rank = |f: VerbForm| match f {
            VerbForm::Present => 0,
            VerbForm::Third => 1,
            VerbForm::Base => 2,
            VerbForm::Ing => 3,
            VerbForm::Past => 4,
            VerbForm::Participle => 5,
        };
        let (base, form) = hits.iter().min_by_key(|(_, f)| rank(*f))?.clone();
        let past_override = match form {
            VerbForm::Present => self.extra_present.get(&lower).map(|(_, p)| p.clone()),
            _ => None,
        };
        Some(VerbHit { base, form, past_override })
    }

    /// Forms for any alphabetic word: table entry if known, suffix rules otherwise.
    pub fn forms_or_rules(&self, base: &str) -> VerbForms {
        self.verbs.get(base).cloned().unwrap_or_else(|| regular_forms(base, false))
    }
}

fn check_alpha(w: &str) -> Result<(), ()> {
    if !w.is_empty() && w.chars().all(|c| c.is_ascii_lowercase()) {
        Ok(())
    } else {
        Err(())
    }
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn vowel_groups(w: &[u8]) -> usize {
    let mut groups = 0;
    let mut prev = false;
    for &c in w {
        let v = is_vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    groups
}

/// Consonant-vowel-consonant ending of a one-syllable word, final letter
/// not w/x/y: the final consonant doubles before -ed and -ing.
fn doubles_final(w: &[u8]) -> bool {
    let n = w.len();
    n >= 3
        && !is_vowel(w[n - 1])
        && !matches!(w[n - 1], b'w' | b'x' | b'y')
        && is_vowel(w[n - 2])
        && !is_vowel(w[n - 3])
        && vowel_groups(w) == 1
}

/// Suffix rules for regular verbs (ASCII lowercase input). Total on any
/// alphabetic word; `force_double` marks stressed-final-syllable verbs.
pub fn regular_forms(base: &str, force_double: bool) -> VerbForms {
    let w = base.as_bytes();
    let n = w.len();
    let last = w.last().copied().unwrap_or(b'a');
    let before_last = if n >= 2 { w[n - 2] } else { b'a' };
    let double = force_double || doubles_final(w);
    let consonant_y = last == b'y' && !is_vowel(before_last) && n >= 2;

    let third = if base.ends_with('s')
        || base.ends_with('x')
        || base.ends_with('z')
        || base.ends_with("ch")
        || base.ends_with("sh")
        || (last == b'o' && n >= 2 && !is_vowel(before_last))
    {
        format!("{base}es")
    } else if consonant_y {
        format!("{}ies", &base[..n - 1])
    } else {
        format!("{base}s")
    };

    let past = if last == b'e' {
        format!("{base}d")
    } else if consonant_y {
        format!("{}ied", &base[..n - 1])
    } else if double {
        format!("{base}{}ed", last as char)
    } else {
        format!("{base}ed")
    };

    let ing = if base.ends_with("ie") {
        format!("{}ying", &base[..n - 2])
    } else if last == b'e' && n >= 2 && !matches!(before_last, b'e' | b'o' | b'y') {
        format!("{}ing", &base[..n - 1])
    } else if double {
        format!("{base}{}ing", last as char)
    } else {
        format!("{base}ing")
    };

    VerbForms { base: base.to_string(), participle: past.clone(), past, third, ing }
}
