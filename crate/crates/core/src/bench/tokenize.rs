//! Word, sentence, and syllable segmentation shared by every text metric.

/// Tokenized view of a text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedText {
    /// Lowercase word tokens in reading order.
    pub tokens: Vec<String>,
    /// Half-open `[start, end)` token ranges; together they partition the
    /// token list.
    pub sentences: Vec<(usize, usize)>,
    /// Letters and digits only; punctuation and whitespace do not count.
    pub char_count: usize,
    /// Per-token syllable estimates, always at least 1.
    pub syllable_counts: Vec<u32>,
}

impl TokenizedText {
    pub fn word_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    pub fn syllable_total(&self) -> u64 {
        self.syllable_counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Tokens with three or more syllables.
    pub fn polysyllable_count(&self) -> usize {
        self.syllable_counts.iter().filter(|&&c| c >= 3).count()
    }
}

/// Words whose trailing period does not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "fig", "e.g", "i.e", "inc",
    "ltd", "co", "no",
];

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '-'
}

/// Split a text into word tokens, sentence spans, and syllable counts.
///
/// Tokens are maximal runs of letters, digits, apostrophes, and hyphens,
/// trimmed of edge apostrophes and hyphens, then lowercased. A sentence ends
/// at `.`, `!`, or `?` followed by whitespace or end of text, except a period
/// directly after a known abbreviation. A period between digits (as in 3.14)
/// never ends a sentence because it is not followed by whitespace.
pub fn tokenize(text: &str) -> TokenizedText {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens: Vec<String> = Vec::new();
    let mut breaks: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if is_token_char(c) {
            let start = i;
            while i < chars.len() && is_token_char(chars[i]) {
                i += 1;
            }
            let raw: String = chars[start..i].iter().collect();
            let trimmed = raw.trim_matches(|c| c == '\'' || c == '-');
            if !trimmed.is_empty() {
                tokens.push(trimmed.to_lowercase());
            }
            continue;
        }
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = chars.get(i + 1).is_none_or(|n| n.is_whitespace());
            let abbreviated = c == '.' && word_before(&chars, i).is_some_and(|w| {
                ABBREVIATIONS.contains(&w.as_str())
            });
            if at_boundary
                && !abbreviated
                && !tokens.is_empty()
                && breaks.last() != Some(&tokens.len())
            {
                breaks.push(tokens.len());
            }
        }
        i += 1;
    }

    let mut sentences = Vec::new();
    let mut start = 0;
    for &end in &breaks {
        sentences.push((start, end));
        start = end;
    }
    if start < tokens.len() {
        sentences.push((start, tokens.len()));
    }

    let char_count = chars.iter().filter(|c| c.is_alphanumeric()).count();
    let syllable_counts = tokens.iter().map(|t| syllables(t)).collect();
    TokenizedText { tokens, sentences, char_count, syllable_counts }
}

/// The word directly before position `i`, lowercased, keeping internal
/// periods so "e.g." and "i.e." stay recognizable.
fn word_before(chars: &[char], i: usize) -> Option<String> {
    let end = i;
    let mut start = i;
    while start > 0 && (chars[start - 1].is_alphanumeric() || chars[start - 1] == '.') {
        start -= 1;
    }
    if start == end {
        return None;
    }
    let word: String = chars[start..end].iter().collect();
    let word = word.trim_matches('.');
    if word.is_empty() {
        None
    } else {
        Some(word.to_lowercase())
    }
}

/// Vowel-group syllable estimate over a lowercase token.
///
/// Counts runs of aeiouy, discounts a silent final e unless the token ends in
/// consonant + "le" (table, little), and never returns less than 1.
fn syllables(token: &str) -> u32 {
    let chars: Vec<char> = token.chars().collect();
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut groups = 0u32;
    let mut in_group = false;
    for &c in &chars {
        let v = is_vowel(c);
        if v && !in_group {
            groups += 1;
        }
        in_group = v;
    }
    let n = chars.len();
    if groups > 1 && chars.last() == Some(&'e') {
        let consonant_le = n >= 3 && chars[n - 2] == 'l' && !is_vowel(chars[n - 3]);
        if !consonant_le {
            groups -= 1;
        }
    }
    groups.max(1)
}
