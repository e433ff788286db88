//! Generators, independent oracles and fixtures shared by the integration
//! tests and the acceptance suite.

#![allow(dead_code)]

use std::path::PathBuf;

use perturbench::perturb::{MethodId, PerturbParams, PerturbationTrace, Perturber};
use perturbench::TaskSpec;
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// prompt generator

const WORDS: &[&str] = &[
    "return", "returns", "list", "lists", "number", "numbers", "string", "check", "checks", "if", "the", "a", "given",
    "contains", "elements", "sorted", "sort", "is", "are", "was", "value", "values", "find", "found", "write",
    "function", "that", "computes", "largest", "smallest", "each", "item", "array", "count", "of", "and", "or", "not",
    "empty", "true", "false", "x_1", "42", "café", "Straße", "ÉTÉ", "naïve", "σας", "Return", "Check", "Given", "It",
    "does", "will", "can", "to", "in", "on", "with", "key", "keys", "create", "created", "split", "splits", "go",
    "went", "make", "makes", "remove", "removed", "big",
];
const PUNCT: &[&str] = &[",", ".", "?", "!", ":", ";"];

/// A Python prompt whose docstring holds generated prose followed by a
/// doctest block; `head` and `tail` are the bytes that must survive any
/// perturbation untouched.
#[derive(Debug, Clone)]
pub struct PromptCase {
    pub prompt: String,
    pub head: String,
    pub tail: String,
}

fn word() -> impl Strategy<Value = String> {
    (prop::sample::select(WORDS), prop::option::weighted(0.15, prop::sample::select(PUNCT)))
        .prop_map(|(w, p)| format!("{w}{}", p.unwrap_or("")))
}

fn line() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..9).prop_map(|ws| ws.join(" "))
}

pub fn prose() -> impl Strategy<Value = String> {
    prop::collection::vec(line(), 1..4).prop_map(|ls| ls.join("\n"))
}

pub fn prompt_case() -> impl Strategy<Value = PromptCase> {
    (prop::collection::vec(line(), 1..5), any::<bool>(), 0u8..3).prop_map(|(lines, blank, examples)| {
        let head = "from typing import List\n\n\ndef f(xs: List[int]) -> int:\n    \"\"\"".to_string();
        let mut body = String::from("\n");
        for l in &lines {
            body.push_str("    ");
            body.push_str(l);
            body.push('\n');
        }
        let mut tail = String::new();
        if blank {
            body.push('\n');
        }
        for i in 0..examples {
            tail.push_str(&format!("    >>> f([{i}, 2, 3])\n    {}\n", i + 5));
        }
        tail.push_str("    \"\"\"\n");
        PromptCase { prompt: format!("{head}{body}{tail}"), head, tail }
    })
}

// ---------------------------------------------------------------------------
// perturbation oracles

fn word_tokens(s: &str) -> Vec<&str> {
    s.split(|c: char| !(c.is_alphanumeric() || c == '_')).filter(|w| !w.is_empty()).collect()
}

fn is_subsequence(needle: &[&str], hay: &[&str]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

fn lower_chars(s: &str) -> String {
    s.chars().flat_map(char::to_lowercase).collect()
}

fn sorted_chars(s: &str) -> Vec<char> {
    let mut v: Vec<char> = s.chars().collect();
    v.sort_unstable();
    v
}

/// Operator-specific properties of one (input, output) pair.
pub fn check_operator_property(method: MethodId, input: &str, output: &str) -> Result<(), String> {
    match method {
        MethodId::C2 => {
            let a: Vec<&str> = input.split_whitespace().collect();
            let b: Vec<&str> = output.split_whitespace().collect();
            if a.len() != b.len() {
                return Err(format!("C2 changed the word count: {input:?} -> {output:?}"));
            }
            for (x, y) in a.iter().zip(&b) {
                if sorted_chars(x) != sorted_chars(y) {
                    return Err(format!("C2 changed the letters of {x:?} -> {y:?}"));
                }
            }
        }
        MethodId::C3 => {
            if lower_chars(input) != lower_chars(output) {
                return Err(format!("C3 changed more than case: {input:?} -> {output:?}"));
            }
        }
        MethodId::W1 => {
            if !is_subsequence(&word_tokens(input), &word_tokens(output)) {
                return Err(format!("W1 lost words: {input:?} -> {output:?}"));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Every generic property for one prompt, method and seed: protected head
/// and tail intact, trace replays to the output, same seed gives the same
/// result, plus the operator-specific property.
pub fn check_prompt_case(p: &Perturber, case: &PromptCase, method: MethodId, seed: u64) -> Result<(), String> {
    let task = toy_task(&case.prompt);
    let params = PerturbParams::default();
    let (out, trace) = p.perturb_sample(&task, method, &params, seed).map_err(|e| e.to_string())?;
    let text = &out.prompt;
    if !text.starts_with(&case.head) || !text.ends_with(&case.tail) {
        return Err(format!("{method}: protected bytes changed:\n{:?}\n->\n{text:?}", case.prompt));
    }
    if out.tests != task.tests || out.name != task.name {
        return Err(format!("{method}: non-prompt field changed"));
    }
    check_trace(&trace, &case.prompt, text)?;
    let (again, trace2) = p.perturb_sample(&task, method, &params, seed).map_err(|e| e.to_string())?;
    if again != out || trace2 != trace {
        return Err(format!("{method}: seed {seed} is not deterministic"));
    }
    check_operator_property(trace.applied.unwrap_or(method), &case.prompt, text)
}

pub fn check_trace(trace: &PerturbationTrace, input: &str, output: &str) -> Result<(), String> {
    let replayed = trace.replay(input).map_err(|e| e.to_string())?;
    if replayed != output {
        return Err(format!("trace replay mismatch: {replayed:?} vs {output:?}"));
    }
    Ok(())
}

pub fn toy_task(prompt: &str) -> TaskSpec {
    TaskSpec {
        name: "f".into(),
        language: "python".into(),
        prompt: prompt.into(),
        tests: "def test_check():\n    assert f([1]) == 1\n".into(),
        completions: vec![],
        stop_tokens: vec![],
    }
}

// ---------------------------------------------------------------------------
// statistics oracles

/// Two-sided exact signed-rank p by enumerating all 2^n sign vectors:
/// the share of assignments whose min(T+, T-) is at most the observed one.
/// Ranks are doubled midranks of |d| computed here independently.
pub fn brute_force_wilcoxon_p(diffs: &[i64]) -> f64 {
    let d: Vec<i64> = diffs.iter().copied().filter(|x| *x != 0).collect();
    let n = d.len();
    let abs: Vec<i64> = d.iter().map(|x| x.abs()).collect();
    // rank2[i] = 2 * midrank = (#less)*2 + (#equal) + 1
    let rank2: Vec<u64> = abs
        .iter()
        .map(|a| {
            let less = abs.iter().filter(|b| *b < a).count() as u64;
            let equal = abs.iter().filter(|b| *b == a).count() as u64;
            2 * less + equal + 1
        })
        .collect();
    let total: u64 = rank2.iter().sum();
    let tp: u64 = rank2.iter().zip(&d).filter(|(_, x)| **x > 0).map(|(r, _)| *r).sum();
    let observed = tp.min(total - tp);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let t: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| rank2[i]).sum();
        if t.min(total - t) <= observed {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

/// pass@k as the mean over all k-subsets of n samples (c of them correct)
/// of "subset contains a correct sample", by explicit enumeration.
pub fn brute_force_pass_at_k(n: u32, c: u32, k: u32) -> f64 {
    let mut subsets = 0u64;
    let mut hits = 0u64;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() != k {
            continue;
        }
        subsets += 1;
        // samples 0..c are the correct ones
        if mask & ((1u32 << c) - 1) != 0 {
            hits += 1;
        }
    }
    hits as f64 / subsets as f64
}

// ---------------------------------------------------------------------------
// fixtures

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}
