//! Word segmentation used for keyword matching.
//!
//! A word is a maximal alphanumeric run, further split at camel-case humps so
//! that `NullPointerException` yields `Null`, `Pointer`, `Exception` while
//! `terror` stays a single word.

/// Iterates the words of `text` as sub-slices.
pub(crate) fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|run| !run.is_empty())
        .flat_map(camel_pieces)
}

fn camel_pieces(run: &str) -> impl Iterator<Item = &str> {
    let chars: alloc::vec::Vec<(usize, char)> = run.char_indices().collect();
    let mut cuts = alloc::vec![0usize];
    for i in 1..chars.len() {
        let prev = chars[i - 1].1;
        let cur = chars[i].1;
        let next_lower = chars.get(i + 1).is_some_and(|(_, c)| c.is_lowercase());
        if (prev.is_lowercase() && cur.is_uppercase()) || (prev.is_uppercase() && cur.is_uppercase() && next_lower) {
            cuts.push(chars[i].0);
        }
    }
    cuts.push(run.len());
    (0..cuts.len() - 1).map(move |i| &run[cuts[i]..cuts[i + 1]])
}

pub(crate) fn contains_word(text: &str, keywords: &[&str]) -> bool {
    words(text).any(|w| keywords.iter().any(|k| w.eq_ignore_ascii_case(k)))
}
