use crate::error::{Error, Result};

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercase text with ASCII punctuation removed and single spaces between
/// words. Leading articles are stripped as long as one word remains.
pub fn normalize_text(s: &str) -> String {
    let cleaned: String = s.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let mut words: Vec<&str> = cleaned.split_whitespace().collect();
    let leading = words
        .iter()
        .take(words.len().saturating_sub(1))
        .take_while(|w| ARTICLES.contains(w))
        .count();
    words.drain(..leading);
    words.join(" ")
}

/// `0` (not hallucinated) iff the normalized gold answer occurs in the
/// normalized response as a run of whole words, else `1`.
pub fn exact_match_label(response: &str, gold: &str) -> Result<u8> {
    let gold = normalize_text(gold);
    if gold.is_empty() {
        return Err(Error::invalid("gold answer is empty"));
    }
    let response = normalize_text(response);
    let haystack = format!(" {response} ");
    let needle = format!(" {gold} ");
    Ok(u8::from(!haystack.contains(&needle)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_text("The core."), "core");
        assert_eq!(normalize_text("  A   FAX "), "fax");
        assert_eq!(normalize_text("the"), "the");
        assert_eq!(normalize_text("The a an answer"), "answer");
        assert_eq!(
            normalize_text("Modem (Modulator-Demodulator)."),
            "modem modulatordemodulator"
        );
        assert_eq!(normalize_text(""), "");
    }

    #[test]
    fn exact_match_examples() {
        assert_eq!(exact_match_label("The core.", "The core").unwrap(), 0);
        assert_eq!(exact_match_label("Goldfinger.", "Goodie").unwrap(), 1);
        assert_eq!(exact_match_label("the CORE of the sun", "The core").unwrap(), 0);
        assert_eq!(
            exact_match_label("The inner most layer of the sun is called the core.", "The core").unwrap(),
            0
        );
        assert_eq!(exact_match_label("Fax machine.", "A fax").unwrap(), 0);
        assert_eq!(exact_match_label("Modem.", "A fax").unwrap(), 1);
    }

    #[test]
    fn matches_whole_words_only() {
        assert_eq!(exact_match_label("Corey", "core").unwrap(), 1);
        assert_eq!(exact_match_label("hardcore", "core").unwrap(), 1);
        assert_eq!(exact_match_label("it is the sun core", "sun core").unwrap(), 0);
    }

    #[test]
    fn empty_gold_is_an_error() {
        assert!(exact_match_label("anything", "").is_err());
        assert!(exact_match_label("anything", " ... ").is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn normalize_is_idempotent_on_wordy_text(s in "((the|a|an|The|A|core|sun|[.,!?]| |  ){0,12})") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn normalized_equality_implies_match(s in "[A-Za-z .,]{1,30}") {
            prop_assume!(!normalize_text(&s).is_empty());
            prop_assert_eq!(exact_match_label(&s, &s).unwrap(), 0);
            let shouty = s.to_uppercase() + "!";
            prop_assert_eq!(exact_match_label(&shouty, &s).unwrap(), 0);
        }
    }
}
