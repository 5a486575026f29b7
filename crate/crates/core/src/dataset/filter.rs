use serde::{Deserialize, Serialize};

/// Minimum number of whitespace-separated words a question needs.
pub const MIN_QUERY_WORDS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterRule {
    Url,
    Blank,
    Short,
}

/// A line of `rejections.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub rule: FilterRule,
}

/// Anything with an id and a question text.
pub trait HasQuery {
    fn id(&self) -> &str;
    fn query(&self) -> &str;
}

impl HasQuery for crate::model::QueryRecord {
    fn id(&self) -> &str {
        &self.id
    }
    fn query(&self) -> &str {
        &self.query
    }
}

fn has_url(q: &str) -> bool {
    let lower = q.to_lowercase();
    if lower.contains("http://") || lower.contains("https://") {
        return true;
    }
    lower.split_whitespace().any(|tok| {
        tok.trim_start_matches(|c: char| c.is_ascii_punctuation())
            .starts_with("www.")
    })
}

/// Two or more consecutive `-`/`_` mark a blank to fill in.
fn has_blank_marker(q: &str) -> bool {
    let mut run = 0;
    for c in q.chars() {
        if c == '-' || c == '_' {
            run += 1;
            if run >= 2 {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

/// First rule a question breaks, checked in the order url, blank, short.
pub fn check_query(q: &str) -> Option<FilterRule> {
    if has_url(q) {
        Some(FilterRule::Url)
    } else if has_blank_marker(q) {
        Some(FilterRule::Blank)
    } else if q.split_whitespace().count() < MIN_QUERY_WORDS {
        Some(FilterRule::Short)
    } else {
        None
    }
}

/// Splits records into those kept and a rejection report, preserving order.
pub fn filter_corpus<T: HasQuery>(records: Vec<T>) -> (Vec<T>, Vec<Rejection>) {
    let mut kept = Vec::with_capacity(records.len());
    let mut rejected = Vec::new();
    for r in records {
        match check_query(r.query()) {
            None => kept.push(r),
            Some(rule) => rejected.push(Rejection {
                id: r.id().to_owned(),
                rule,
            }),
        }
    }
    (kept, rejected)
}
