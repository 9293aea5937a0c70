//! Deterministic word-level tokenization shared by pool statistics,
//! bag-of-words vectors, and the overlap auditor.
//!
//! Segmentation follows Unicode word boundaries, with CJK text falling back
//! to one token per character since it carries no whitespace.

use unicode_segmentation::UnicodeSegmentation;

/// Codepoints tokenized one character at a time: Han ideographs (including
/// extensions), kana, and Hangul syllables.
fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}'     // CJK Unified Ideographs
        | '\u{3400}'..='\u{4DBF}'   // Extension A
        | '\u{20000}'..='\u{2EBEF}' // Extensions B..F
        | '\u{F900}'..='\u{FAFF}'   // Compatibility Ideographs
        | '\u{3040}'..='\u{309F}'   // Hiragana
        | '\u{30A0}'..='\u{30FF}'   // Katakana
        | '\u{AC00}'..='\u{D7AF}'   // Hangul syllables
    )
}

/// Split `text` into word tokens. Tokens containing CJK characters are split
/// per character; everything else follows UAX #29 word boundaries, keeping
/// only segments with at least one alphanumeric character.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.unicode_words() {
        if word.chars().any(is_cjk) {
            let mut run = String::new();
            for c in word.chars() {
                if is_cjk(c) {
                    if !run.is_empty() {
                        push_token(&mut tokens, &run, lowercase);
                        run.clear();
                    }
                    push_token(&mut tokens, &c.to_string(), lowercase);
                } else {
                    run.push(c);
                }
            }
            if !run.is_empty() {
                push_token(&mut tokens, &run, lowercase);
            }
        } else {
            push_token(&mut tokens, word, lowercase);
        }
    }
    tokens
}

fn push_token(tokens: &mut Vec<String>, token: &str, lowercase: bool) {
    if lowercase {
        tokens.push(token.to_lowercase());
    } else {
        tokens.push(token.to_string());
    }
}

/// Token count used for pool statistics.
pub fn count_tokens(text: &str) -> usize {
    tokenize(text, false).len()
}
