use std::sync::OnceLock;

use regex::Regex;

use crate::corpus::Sentence;

/// Abbreviations (lowercased, with their trailing period) after which a
/// period never ends a sentence.
const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "al.", "fig.", "figs.", "eq.", "eqs.", "vs.", "cf.", "sec.", "secs.", "tab.", "app.",
    "approx.", "resp.", "ref.", "refs.", "no.", "nos.", "dr.", "prof.", "mr.", "ms.", "st.", "viz.",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '\u{201c}', '\u{2018}'];

fn list_item() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d+[.)]|[a-zA-Z][.)]|[-*\u{2022}])\s+").expect("valid regex"))
}

fn bare_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\d+|[a-zA-Z]|[ivxIVX]+)[.)]$").expect("valid regex"))
}

/// Splits text into blocks: a blank line closes a block, and a line opening
/// with a list marker (`1.`, `a)`, `-`, `*`) starts a new one.
fn blocks(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        let blank = line.trim().is_empty();
        if (blank || list_item().is_match(line)) && !current.trim().is_empty() {
            out.push(std::mem::take(&mut current));
        }
        if blank {
            current.clear();
            continue;
        }
        if !current.is_empty() {
            current.push('\n');
        }
        current.push_str(line);
    }
    if !current.trim().is_empty() {
        out.push(current);
    }
    out
}

fn ends_with_abbreviation(sentence_so_far: &str) -> bool {
    let token = sentence_so_far
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or_default()
        .trim_start_matches(OPENERS)
        .to_lowercase();
    ABBREVIATIONS.contains(&token.as_str())
}

fn split_block(block: &str, out: &mut Vec<String>) {
    let chars: Vec<(usize, char)> = block.char_indices().collect();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
            j += 1;
        }
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let end_byte = chars.get(j).map_or(block.len(), |&(b, _)| b);
        if j < chars.len() && !chars[j].1.is_whitespace() {
            i = j;
            continue;
        }
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        while k < chars.len() && OPENERS.contains(&chars[k].1) {
            k += 1;
        }
        let boundary = k >= chars.len() || chars[k].1.is_uppercase();
        let candidate = block[start..end_byte].trim();
        let suppressed = (c == '.' && i + 1 == j && ends_with_abbreviation(&block[start..chars[i].0 + 1]))
            || bare_marker().is_match(candidate);
        if boundary && !suppressed {
            if !candidate.is_empty() {
                out.push(candidate.to_string());
            }
            start = end_byte;
        }
        i = j;
    }
    let rest = block[start..].trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
}

/// Splits free text into trimmed, non-empty sentences.
///
/// A sentence ends at `.`, `!` or `?` (plus any closing quotes or brackets)
/// when followed by whitespace and an uppercase letter, or by the end of the
/// text. Known abbreviations and bare list numbers never end a sentence.
/// List items and blank-line-separated paragraphs always start a new one.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for block in blocks(text) {
        split_block(&block, &mut out);
    }
    out
}

/// Sentences of one section, indexed from `first_index`.
pub fn sentencize(section_text: &str, section: &str, first_index: usize) -> Vec<Sentence> {
    split_sentences(section_text)
        .into_iter()
        .enumerate()
        .map(|(offset, text)| Sentence {
            index: first_index + offset,
            text,
            section: section.to_string(),
        })
        .collect()
}

/// Sentences of several sections in the given order, indexed contiguously.
pub fn sentencize_sections<'a, I>(sections: I) -> Vec<Sentence>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut out = Vec::new();
    for (name, text) in sections {
        let next = out.len();
        out.extend(sentencize(text, name, next));
    }
    out
}
