//! `hallucounter` command line: filter-corpus, label, featurize, train,
//! predict, evaluate.
//!
//! Exit codes: 0 success, 1 when any record failed or an input could not be
//! read (failures go to stderr, the remaining records are still written),
//! 2 on usage errors.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::aggregation::{run_pipeline, AggregationConfig};
use crate::classifier::{load_model, save_model, train_ensemble, EnsembleConfig, DEFAULT_THRESHOLD};
use crate::dataset::{filter_corpus, label_to_file, ExactMatch, HasQuery, JudgeClient, JudgeConfig, Labeler};
use crate::error::{Error, Result};
use crate::features::{extract_features, render_text_features, select_features};
use crate::io;
use crate::metrics::{evaluate, EvalInputs, EvalMode, ScoredLabels};
use crate::model::{
    parse_feature_record, parse_label_record, parse_query_record, serialize_record, FeatureCombination, FeatureRecord,
    LabelRecord, PredictionRecord, QueryRecord,
};
use crate::nli::{BackendConfig, BackendKind, NliBackend};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(
    name = "hallucounter",
    version,
    about = "Reference-free hallucination detection over sampled LLM responses"
)]
pub struct Cli {
    /// Seed for every random choice (ensemble member m uses seed + m).
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Worker threads for record-level parallelism; defaults to the CPU count.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a question corpus into kept and rejected records.
    FilterCorpus {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rejected: PathBuf,
    },
    /// Label each response 0 (correct) or 1 (hallucinated).
    Label {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        strategy: Strategy,
        #[arg(long, required_if_eq("strategy", "llm-judge"))]
        judge_url: Option<String>,
        #[arg(long, required_if_eq("strategy", "llm-judge"))]
        judge_model: Option<String>,
        #[arg(long, default_value_t = 4)]
        judge_max_in_flight: usize,
        #[arg(long, default_value_t = 60)]
        judge_timeout_secs: u64,
        #[arg(long, default_value_t = 3)]
        judge_retries: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute per-response NLI feature triples.
    Featurize {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value = "qrrr", value_parser = parse_numeric_combination)]
        combination: FeatureCombination,
        /// Keep only the first K responses of each record.
        #[arg(long)]
        take_k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the textual feature rendering of every response.
        #[arg(long)]
        emit_text: bool,
        /// Where the text rendering goes; defaults to `<out>.text.jsonl`.
        #[arg(long, requires = "emit_text")]
        text_out: Option<PathBuf>,
    },
    /// Train the voting ensemble.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Overrides the combination recorded in the features file.
        #[arg(long, value_parser = parse_numeric_combination)]
        combination: Option<FeatureCombination>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline on each query.
    Predict {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        eps1: f64,
        #[arg(long, default_value_t = 0.7)]
        eps2: f64,
        /// Keep only the first K responses of each record.
        #[arg(long)]
        take_k: Option<usize>,
        /// Consider every response as the optimal one, not only those
        /// agreeing with the overall verdict.
        #[arg(long)]
        all_candidates: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against gold labels.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, value_enum, default_value = "per-response")]
        mode: Mode,
        /// Break the report down by this field of the query records.
        #[arg(long, requires = "records")]
        by_category: Option<String>,
        /// Query records carrying the `--by-category` field.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Report path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    ExactMatch,
    LlmJudge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    PerResponse,
    PerQuery,
}

impl From<Mode> for EvalMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::PerResponse => EvalMode::PerResponse,
            Mode::PerQuery => EvalMode::PerQuery,
        }
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "nli_source")]
pub struct BackendArgs {
    /// Precomputed NLI logits (JSONL).
    #[arg(long)]
    logits_file: Option<PathBuf>,
    /// Base URL of an NLI inference service.
    #[arg(long)]
    nli_url: Option<String>,
}

fn parse_numeric_combination(s: &str) -> std::result::Result<FeatureCombination, String> {
    let c: FeatureCombination = s.parse().map_err(|e: Error| e.to_string())?;
    if c.is_numeric() {
        Ok(c)
    } else {
        Err(format!("{c} is text-only; use --emit-text"))
    }
}

impl BackendArgs {
    fn open(&self) -> Result<Box<dyn NliBackend>> {
        let kind = match (&self.logits_file, &self.nli_url) {
            (Some(f), None) => BackendKind::File(f.clone()),
            (None, Some(u)) => BackendKind::Http(u.clone()),
            _ => unreachable!("clap enforces exactly one backend"),
        };
        BackendConfig::new(kind).open()
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let pool = match cli.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n as usize).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(failures) if failures.is_empty() => 0,
        Ok(failures) => {
            for e in &failures {
                eprintln!("error: {e}");
            }
            eprintln!("{} record(s) failed", failures.len());
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Runs one command; the returned errors are record-level failures that did
/// not stop the run.
pub fn execute(cli: &Cli) -> Result<Vec<Error>> {
    match &cli.command {
        Command::FilterCorpus { input, out, rejected } => filter_cmd(input, out, rejected),
        Command::Label {
            input,
            strategy,
            judge_url,
            judge_model,
            judge_max_in_flight,
            judge_timeout_secs,
            judge_retries,
            out,
        } => {
            let (records, mut failures) = io::read_jsonl_lenient(input, parse_query_record)?;
            let labeler: Box<dyn Labeler> = match strategy {
                Strategy::ExactMatch => Box::new(ExactMatch),
                Strategy::LlmJudge => {
                    let mut config = JudgeConfig::new(
                        judge_url.clone().unwrap_or_default(),
                        judge_model.clone().unwrap_or_default(),
                    );
                    config.max_in_flight = *judge_max_in_flight;
                    config.timeout = Duration::from_secs(*judge_timeout_secs);
                    config.max_retries = *judge_retries;
                    Box::new(JudgeClient::new(config)?)
                }
            };
            let summary = label_to_file(&records, labeler.as_ref(), out)?;
            eprintln!(
                "labelled {} record(s), {} already present",
                summary.labeled, summary.skipped
            );
            failures.extend(summary.errors);
            Ok(failures)
        }
        Command::Featurize {
            input,
            backend,
            combination,
            take_k,
            out,
            emit_text,
            text_out,
        } => {
            let text_out = emit_text.then(|| {
                text_out.clone().unwrap_or_else(|| {
                    let mut p = out.as_os_str().to_owned();
                    p.push(".text.jsonl");
                    PathBuf::from(p)
                })
            });
            featurize_cmd(input, backend, *combination, *take_k, out, text_out.as_deref())
        }
        Command::Train {
            features,
            labels,
            combination,
            threshold,
            out,
        } => train_cmd(features, labels, *combination, *threshold, cli.seed, out),
        Command::Predict {
            input,
            backend,
            model,
            eps1,
            eps2,
            take_k,
            all_candidates,
            out,
        } => {
            let config = AggregationConfig::new(*eps1, *eps2, !all_candidates)?;
            predict_cmd(input, backend, model, &config, *take_k, out)
        }
        Command::Evaluate {
            pred,
            gold,
            mode,
            by_category,
            records,
            out,
        } => evaluate_cmd(
            pred,
            gold,
            (*mode).into(),
            by_category.as_deref(),
            records.as_deref(),
            out.as_deref(),
        ),
    }
}

/// A raw input line with its id and question, written back out unchanged.
struct RawRecord {
    id: String,
    query: String,
    line: String,
}

impl HasQuery for RawRecord {
    fn id(&self) -> &str {
        &self.id
    }
    fn query(&self) -> &str {
        &self.query
    }
}

fn parse_raw(line: &str) -> Result<RawRecord> {
    let v: serde_json::Value = serde_json::from_str(line)?;
    let field = |name: &str| {
        v.get(name)
            .and_then(|f| f.as_str())
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .ok_or_else(|| Error::invalid(format!("missing string field {name:?}")))
    };
    Ok(RawRecord {
        id: field("id")?,
        query: field("query")?,
        line: line.to_owned(),
    })
}

fn filter_cmd(input: &Path, out: &Path, rejected: &Path) -> Result<Vec<Error>> {
    let (mut records, failures) = io::read_jsonl_lenient(input, parse_raw)?;
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let (kept, rejections) = filter_corpus(records);
    io::write_lines(out, kept.iter().map(|r| r.line.as_str()))?;
    io::write_lines(rejected, rejections.iter().map(serialize_record))?;
    eprintln!("kept {} record(s), rejected {}", kept.len(), rejections.len());
    Ok(failures)
}

fn load_queries(input: &Path, take_k: Option<usize>) -> Result<(Vec<QueryRecord>, Vec<Error>)> {
    let (records, mut failures) = io::read_jsonl_lenient(input, parse_query_record)?;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        match take_k {
            Some(k) => match r.truncated(k) {
                Ok(t) => out.push(t),
                Err(e) => failures.push(e.in_record(&r.id)),
            },
            None => out.push(r),
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((out, failures))
}

/// Splits per-record results into successes and failures, keeping order.
fn partition<T>(results: Vec<Result<T>>, failures: &mut Vec<Error>) -> Vec<T> {
    let mut ok = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failures.push(e),
        }
    }
    ok
}

#[derive(Serialize)]
struct TextFeatureRecord<'a> {
    id: &'a str,
    texts: Vec<String>,
}

fn featurize_cmd(
    input: &Path,
    backend: &BackendArgs,
    combination: FeatureCombination,
    take_k: Option<usize>,
    out: &Path,
    text_out: Option<&Path>,
) -> Result<Vec<Error>> {
    let (records, mut failures) = load_queries(input, take_k)?;
    let backend = backend.open()?;
    let results: Vec<Result<(&QueryRecord, FeatureRecord)>> = records
        .par_iter()
        .map(|r| {
            let f = extract_features(r, backend.as_ref()).map_err(|e| e.in_record(&r.id))?;
            Ok((r, FeatureRecord::from_features(&r.id, Some(combination), &f)))
        })
        .collect();
    let done = partition(results, &mut failures);
    io::write_lines(out, done.iter().map(|(_, f)| serialize_record(f)))?;
    if let Some(path) = text_out {
        let lines = done.iter().map(|(r, f)| -> Result<String> {
            let texts = f
                .response_features()?
                .iter()
                .map(|rf| render_text_features(&r.query, &r.responses[rf.response_index], &rf.qr, &rf.rr_avg))
                .collect();
            Ok(serialize_record(&TextFeatureRecord { id: &r.id, texts }))
        });
        io::write_lines(path, lines.collect::<Result<Vec<_>>>()?)?;
    }
    Ok(failures)
}

fn train_cmd(
    features: &Path,
    labels: &Path,
    combination: Option<FeatureCombination>,
    threshold: f64,
    seed: u64,
    out: &Path,
) -> Result<Vec<Error>> {
    let (feature_records, mut failures) = io::read_jsonl_lenient(features, parse_feature_record)?;
    let (label_records, label_failures) = io::read_jsonl_lenient(labels, parse_label_record)?;
    failures.extend(label_failures);
    let labels: HashMap<String, LabelRecord> = label_records.into_iter().map(|r| (r.id.clone(), r)).collect();

    let combination = match combination {
        Some(c) => c,
        None => {
            let mut seen: Vec<FeatureCombination> = feature_records.iter().filter_map(|r| r.combination).collect();
            seen.dedup();
            match seen.as_slice() {
                [] => FeatureCombination::Qrrr,
                [c] => *c,
                _ => return Err(Error::invalid("features file mixes combinations; pass --combination")),
            }
        }
    };

    let mut joined: BTreeMap<&str, (&FeatureRecord, &LabelRecord)> = BTreeMap::new();
    for f in &feature_records {
        match labels.get(&f.id) {
            Some(l) if l.labels.len() >= f.features.len() => {
                joined.insert(&f.id, (f, l));
            }
            Some(l) => failures.push(
                Error::invalid(format!("{} labels for {} responses", l.labels.len(), f.features.len()))
                    .in_record(&f.id),
            ),
            None => failures.push(Error::invalid("no labels").in_record(&f.id)),
        }
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (f, l) in joined.values() {
        for (rf, &label) in f.response_features()?.iter().zip(&l.labels) {
            x.push(select_features(combination, &rf.qr, &rf.rr_avg)?);
            y.push(label);
        }
    }
    let mut config = EnsembleConfig::new(combination, seed);
    config.threshold = threshold;
    let model = train_ensemble(&x, &y, &config)?;
    save_model(&model, out)?;
    eprintln!("trained on {} response(s) from {} record(s)", y.len(), joined.len());
    Ok(failures)
}

fn predict_cmd(
    input: &Path,
    backend: &BackendArgs,
    model: &Path,
    config: &AggregationConfig,
    take_k: Option<usize>,
    out: &Path,
) -> Result<Vec<Error>> {
    let model = load_model(model)?;
    let (records, mut failures) = load_queries(input, take_k)?;
    let backend = backend.open()?;
    let results: Vec<Result<PredictionRecord>> = records
        .par_iter()
        .map(|r| {
            run_pipeline(r, backend.as_ref(), &model, config).map(|output| PredictionRecord {
                id: r.id.clone(),
                output,
            })
        })
        .collect();
    let done = partition(results, &mut failures);
    io::write_lines(out, done.iter().map(serialize_record))?;
    Ok(failures)
}

fn category_of(v: &serde_json::Value, field: &str) -> Option<String> {
    match v.get(field)? {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Null => None,
        other => Some(other.to_string()),
    }
}

fn evaluate_cmd(
    pred: &Path,
    gold: &Path,
    mode: EvalMode,
    by_category: Option<&str>,
    records: Option<&Path>,
    out: Option<&Path>,
) -> Result<Vec<Error>> {
    let (preds, mut failures) = io::read_jsonl_lenient(pred, ScoredLabels::parse_line)?;
    let (golds, gold_failures) = io::read_jsonl_lenient(gold, ScoredLabels::parse_line)?;
    failures.extend(gold_failures);
    let mut inputs = EvalInputs {
        predictions: preds.into_iter().collect(),
        gold: golds.into_iter().map(|(id, s)| (id, s.labels)).collect(),
        categories: None,
    };
    if let (Some(field), Some(records)) = (by_category, records) {
        let mut cats = HashMap::new();
        for (n, line) in io::read_lines(records)? {
            let v: serde_json::Value = match serde_json::from_str(&line) {
                Ok(v) => v,
                Err(e) => {
                    failures.push(Error::from(e).at_line(n));
                    continue;
                }
            };
            if let (Some(id), Some(cat)) = (v.get("id").and_then(|i| i.as_str()), category_of(&v, field)) {
                cats.insert(id.to_owned(), cat);
            }
        }
        inputs.categories = Some(cats);
    }
    let (report, unmatched) = evaluate(&inputs, mode)?;
    failures.extend(unmatched);
    let text = serde_json::to_string_pretty(&report)?;
    match out {
        Some(path) => io::write_string(path, &text)?,
        None => println!("{text}"),
    }
    Ok(failures)
}
