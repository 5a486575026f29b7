//! Corpus filtering and response labeling.

mod filter;
mod judge;
mod text;

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;

pub use filter::{check_query, filter_corpus, FilterRule, HasQuery, Rejection, MIN_QUERY_WORDS};
pub use judge::{
    parse_judge_reply, render_prompt, JudgeClient, JudgeConfig, DEFAULT_PROMPT_TEMPLATE, DEFAULT_SYSTEM_PROMPT,
    JUDGE_API_KEY_ENV,
};
pub use text::{exact_match_label, normalize_text};

use crate::error::{Error, Result};
use crate::io;
use crate::model::{parse_label_record, serialize_record, LabelRecord, QueryRecord};

/// Assigns a 0/1 hallucination label to one response.
pub trait Labeler: Sync {
    fn label(&self, question: &str, gold: &str, response: &str) -> Result<u8>;
}

/// Gold-answer containment, see [`exact_match_label`].
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactMatch;

impl Labeler for ExactMatch {
    fn label(&self, _question: &str, gold: &str, response: &str) -> Result<u8> {
        exact_match_label(response, gold)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelStrategy {
    ExactMatch,
    LlmJudge,
}

/// Labels every response of one record, in response order.
pub fn label_record<L: Labeler + ?Sized>(record: &QueryRecord, labeler: &L) -> Result<LabelRecord> {
    let run = || -> Result<LabelRecord> {
        let gold = record
            .gold_answer
            .as_deref()
            .filter(|g| !g.trim().is_empty())
            .ok_or_else(|| Error::invalid("missing gold_answer"))?;
        let labels = record
            .responses
            .iter()
            .enumerate()
            .map(|(i, r)| {
                labeler.label(&record.query, gold, r).map_err(|e| Error::AtResponse {
                    index: i,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabelRecord {
            id: record.id.clone(),
            labels,
        })
    };
    run().map_err(|e| e.in_record(&record.id))
}

/// Labels records in parallel; failures stay per record and in input order.
pub fn label_dataset<L: Labeler + ?Sized>(records: &[QueryRecord], labeler: &L) -> Vec<Result<LabelRecord>> {
    records.par_iter().map(|r| label_record(r, labeler)).collect()
}

#[derive(Debug, Default)]
pub struct LabelSummary {
    /// Records labelled in this run.
    pub labeled: usize,
    /// Records skipped because the output already had them.
    pub skipped: usize,
    pub errors: Vec<Error>,
}

/// Labels `records` into `out`, skipping ids already present there.
///
/// Each finished record is appended as soon as it is done, so an interrupted
/// run loses at most the records in flight. At the end the file is rewritten
/// with every record sorted by id.
pub fn label_to_file<L: Labeler + ?Sized>(records: &[QueryRecord], labeler: &L, out: &Path) -> Result<LabelSummary> {
    let mut done: BTreeMap<String, LabelRecord> = BTreeMap::new();
    if out.exists() {
        // unreadable lines (e.g. a torn final write) are relabelled
        let (existing, _bad) = io::read_jsonl_lenient(out, parse_label_record)?;
        done.extend(existing.into_iter().map(|r| (r.id.clone(), r)));
    }
    let pending: Vec<&QueryRecord> = records.iter().filter(|r| !done.contains_key(&r.id)).collect();
    let mut summary = LabelSummary {
        skipped: records.len() - pending.len(),
        ..LabelSummary::default()
    };
    if pending.is_empty() {
        return Ok(summary);
    }

    // start from a clean file holding only the readable records
    io::write_lines(out, done.values().map(serialize_record))?;
    let appender = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .map_err(|e| Error::io(out, e))?;
    let appender = Mutex::new(appender);
    let results: Vec<Result<LabelRecord>> = pending
        .par_iter()
        .map(|r| {
            let rec = label_record(r, labeler)?;
            let line = serialize_record(&rec) + "\n";
            let mut f = appender.lock().unwrap_or_else(|e| e.into_inner());
            f.write_all(line.as_bytes()).map_err(|e| Error::io(out, e))?;
            Ok(rec)
        })
        .collect();
    drop(appender);

    for r in results {
        match r {
            Ok(rec) => {
                summary.labeled += 1;
                done.insert(rec.id.clone(), rec);
            }
            Err(e) => summary.errors.push(e),
        }
    }
    io::write_lines(out, done.values().map(serialize_record))?;
    Ok(summary)
}
