//! Deterministic fitness of a feedback text: length, template overlap,
//! readability, and a penalty for off-task phrases.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{GaConfig, LengthReward};
use crate::segmenter::split_sentences;

/// Greetings, sign-offs and filler that do not belong in review feedback.
pub const FORBIDDEN_TERMS: [&str; 19] = [
    "Hi",
    "Hello",
    "Hey",
    "Dear Author",
    "To whom it may concern",
    "Greetings",
    "Good morning",
    "Good afternoon",
    "Good evening",
    "Haha",
    "Hehe",
    "Lmao",
    "OMG",
    "Wow",
    "FYI",
    "Cheers",
    "Best regards",
    "Sincerely",
    "I think",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessBreakdown {
    pub sc_len: f64,
    pub sc_temp: f64,
    pub sc_read: f64,
    pub pen_forb: f64,
    pub total: f64,
}

/// Lowercased alphanumeric words. Whitespace-separated chunks without any
/// letter or digit (stray punctuation) are not words.
pub fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|chunk| {
            chunk
                .chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Vowel groups (a, e, i, o, u, y), minus a trailing silent "e" unless the
/// word ends in "le"; never below one.
pub fn count_syllables(word: &str) -> usize {
    let w = word.to_lowercase();
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut groups: usize = 0;
    let mut previous = false;
    for c in w.chars() {
        let v = is_vowel(c);
        if v && !previous {
            groups += 1;
        }
        previous = v;
    }
    if w.ends_with('e') && !w.ends_with("le") {
        groups = groups.saturating_sub(1);
    }
    groups.max(1)
}

/// Sentence count used by the length and readability terms; at least one.
pub fn sentence_count(text: &str) -> usize {
    split_sentences(text).len().max(1)
}

/// Flesch Reading Ease; `None` for text without words.
pub fn flesch_reading_ease(text: &str) -> Option<f64> {
    let words = tokens(text);
    if words.is_empty() {
        return None;
    }
    let syllables: usize = words.iter().map(|w| count_syllables(w)).sum();
    let n_words = words.len() as f64;
    let n_sent = sentence_count(text) as f64;
    Some(206.835 - 1.015 * (n_words / n_sent) - 84.6 * (syllables as f64 / n_words))
}

fn ngrams(words: &[String], n: usize) -> HashSet<&[String]> {
    if n == 0 || words.len() < n {
        return HashSet::new();
    }
    words.windows(n).collect()
}

/// Share of the template's distinct n-grams that also occur in `text`.
pub fn template_overlap(text: &str, template: &str, n: usize) -> f64 {
    let template_words = tokens(template);
    let wanted = ngrams(&template_words, n);
    if wanted.is_empty() {
        return 0.0;
    }
    let text_words = tokens(text);
    let have = ngrams(&text_words, n);
    wanted.intersection(&have).count() as f64 / wanted.len() as f64
}

/// Word positions where some forbidden phrase starts; each position counts
/// once even if several phrases match there.
pub fn forbidden_occurrences(words: &[String], terms: &[String]) -> usize {
    let phrases: Vec<Vec<String>> = terms.iter().map(|t| tokens(t)).filter(|p| !p.is_empty()).collect();
    (0..words.len())
        .filter(|&i| phrases.iter().any(|p| words[i..].starts_with(p)))
        .count()
}

pub fn fitness(text: &str, template: &str, config: &GaConfig) -> FitnessBreakdown {
    let words = tokens(text);
    let n_max = config.n_max.max(1);
    let n_sent = sentence_count(text).min(n_max);
    let sc_len = match config.length_reward {
        LengthReward::AsPrinted => n_sent as f64 / n_max as f64,
        LengthReward::Inverted => (n_max - n_sent + 1) as f64 / n_max as f64,
    };
    let sc_temp = template_overlap(text, template, config.ngram_n);
    let sc_read = flesch_reading_ease(text).map_or(0.0, |fre| fre.clamp(0.0, 100.0) / 100.0);
    let pen_forb = if words.is_empty() {
        0.0
    } else {
        forbidden_occurrences(&words, &config.forbidden_terms) as f64 / words.len() as f64
    };
    FitnessBreakdown {
        sc_len,
        sc_temp,
        sc_read,
        pen_forb,
        total: sc_len + sc_temp + sc_read - pen_forb,
    }
}
