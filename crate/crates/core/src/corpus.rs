//! Canonical in-memory and on-disk representation of intent corpora.
//!
//! A [`Corpus`] is one dataset: a set of named intents, each holding an
//! ordered list of queries. The interchange format is JSONL with one
//! `{"dataset", "intent", "text"}` object per line (plus optional `split`
//! and provenance keys); CSV with `text,intent` columns is accepted on
//! ingest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identity of an intent across a collection of datasets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IntentRef {
    pub dataset: String,
    pub intent: String,
}

impl IntentRef {
    pub fn new(dataset: impl Into<String>, intent: impl Into<String>) -> Self {
        Self {
            dataset: dataset.into(),
            intent: intent.into(),
        }
    }

    /// `dataset.intent`, the flat name used for intents in combined corpora.
    pub fn dotted(&self) -> String {
        format!("{}.{}", self.dataset, self.intent)
    }
}

impl fmt::Display for IntentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.dataset, self.intent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    /// `<dataset>/<intent>/<ordinal>`, positional within the intent.
    pub id: String,
    pub text: String,
    pub norm_text: String,
    pub split: Option<Split>,
    /// Original dataset and intent, carried through merges.
    pub source: Option<IntentRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intent {
    pub dataset_id: String,
    pub name: String,
    pub queries: Vec<Query>,
}

impl Intent {
    pub fn intent_ref(&self) -> IntentRef {
        IntentRef::new(&self.dataset_id, &self.name)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dataset_id: String,
    pub intents: BTreeMap<String, Intent>,
}

impl Corpus {
    pub fn new(dataset_id: impl Into<String>) -> Self {
        Self {
            dataset_id: dataset_id.into(),
            intents: BTreeMap::new(),
        }
    }

    /// Appends a query to `intent`, creating the intent if needed, and
    /// assigns the next positional id.
    pub fn push(
        &mut self,
        intent: &str,
        text: impl Into<String>,
        split: Option<Split>,
        source: Option<IntentRef>,
    ) {
        let dataset_id = &self.dataset_id;
        let entry = self
            .intents
            .entry(intent.to_string())
            .or_insert_with(|| Intent {
                dataset_id: dataset_id.clone(),
                name: intent.to_string(),
                queries: Vec::new(),
            });
        let text = text.into();
        entry.queries.push(Query {
            id: format!("{}/{}/{}", dataset_id, intent, entry.queries.len()),
            norm_text: normalize_text(&text),
            text,
            split,
            source,
        });
    }

    pub fn intent(&self, name: &str) -> Option<&Intent> {
        self.intents.get(name)
    }

    pub fn intent_count(&self) -> usize {
        self.intents.len()
    }

    pub fn query_count(&self) -> usize {
        self.intents.values().map(Intent::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.intents.is_empty()
    }

    /// Writes the canonical JSONL form: intents in name order, queries in
    /// stored order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for intent in self.intents.values() {
            for query in &intent.queries {
                let record = Record {
                    dataset: self.dataset_id.clone(),
                    intent: intent.name.clone(),
                    text: query.text.clone(),
                    split: query.split,
                    source_dataset: query.source.as_ref().map(|s| s.dataset.clone()),
                    source_intent: query.source.as_ref().map(|s| s.intent.clone()),
                };
                serde_json::to_writer(&mut out, &record)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Splits a corpus whose queries carry `split` tags into the train and
    /// test portions. Untagged queries go to train. Query ids are kept.
    pub fn partition_by_split(&self) -> (Corpus, Corpus) {
        let mut train = Corpus::new(&self.dataset_id);
        let mut test = Corpus::new(&self.dataset_id);
        for intent in self.intents.values() {
            let (te, tr): (Vec<Query>, Vec<Query>) = intent
                .queries
                .iter()
                .cloned()
                .partition(|q| q.split == Some(Split::Test));
            for (target, queries) in [(&mut train, tr), (&mut test, te)] {
                if !queries.is_empty() {
                    target.intents.insert(
                        intent.name.clone(),
                        Intent {
                            dataset_id: self.dataset_id.clone(),
                            name: intent.name.clone(),
                            queries,
                        },
                    );
                }
            }
        }
        (train, test)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Record {
    dataset: String,
    intent: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_intent: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

impl Format {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

/// Loads one dataset from disk.
///
/// For JSONL every record must name the same dataset; `dataset_id`, when
/// given, overrides it. CSV files carry no dataset column, so `dataset_id`
/// is required.
pub fn load_corpus(path: &Path, format: Format, dataset_id: Option<&str>) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let corpus = match format {
        Format::Jsonl => read_jsonl(path, BufReader::new(file), dataset_id)?,
        Format::Csv => {
            let dataset_id = dataset_id.ok_or_else(|| {
                Error::Config(format!("{}: CSV input needs a dataset id", path.display()))
            })?;
            read_csv(path, file, dataset_id)?
        }
    };
    if corpus.is_empty() {
        return Err(Error::NoRecords(path.to_path_buf()));
    }
    Ok(corpus)
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_jsonl<R: BufRead>(path: &Path, reader: R, dataset_id: Option<&str>) -> Result<Corpus> {
    let mut corpus: Option<Corpus> = dataset_id.map(Corpus::new);
    let mut seen_dataset: Option<String> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| parse_error(path, lineno, e.to_string()))?;
        if record.text.trim().is_empty() {
            return Err(parse_error(path, lineno, "empty text field"));
        }
        if record.intent.is_empty() {
            return Err(parse_error(path, lineno, "empty intent field"));
        }
        match &seen_dataset {
            None => seen_dataset = Some(record.dataset.clone()),
            Some(d) if *d != record.dataset => {
                return Err(parse_error(
                    path,
                    lineno,
                    format!("mixed dataset ids `{}` and `{}`", d, record.dataset),
                ))
            }
            Some(_) => {}
        }
        let corpus = corpus.get_or_insert_with(|| Corpus::new(&record.dataset));
        let source = match (record.source_dataset, record.source_intent) {
            (Some(d), Some(i)) => Some(IntentRef::new(d, i)),
            (None, None) => None,
            _ => {
                return Err(parse_error(
                    path,
                    lineno,
                    "source_dataset and source_intent must appear together",
                ))
            }
        };
        corpus.push(&record.intent, record.text, record.split, source);
    }
    Ok(corpus.unwrap_or_else(|| Corpus::new("")))
}

fn read_csv<R: std::io::Read>(path: &Path, reader: R, dataset_id: &str) -> Result<Corpus> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_error(path, 1, format!("missing `{name}` column")))
    };
    let text_col = column("text")?;
    let intent_col = column("intent")?;
    let mut corpus = Corpus::new(dataset_id);
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_error(path, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let text = row.get(text_col).unwrap_or("");
        let intent = row.get(intent_col).unwrap_or("");
        if text.trim().is_empty() {
            return Err(parse_error(path, line, "empty text field"));
        }
        if intent.is_empty() {
            return Err(parse_error(path, line, "empty intent field"));
        }
        corpus.push(intent, text, None, None);
    }
    Ok(corpus)
}

/// Adds `corpus` to a collection, rejecting a second corpus with the same
/// dataset id.
pub fn insert_corpus(collection: &mut Vec<Corpus>, corpus: Corpus) -> Result<()> {
    if collection.iter().any(|c| c.dataset_id == corpus.dataset_id) {
        return Err(Error::DuplicateDataset(corpus.dataset_id));
    }
    collection.push(corpus);
    Ok(())
}

pub fn find_intent<'a>(collection: &'a [Corpus], r: &IntentRef) -> Option<&'a Intent> {
    collection
        .iter()
        .find(|c| c.dataset_id == r.dataset)
        .and_then(|c| c.intents.get(&r.intent))
}

/// Lowercases, maps ASCII punctuation to spaces and collapses whitespace.
pub fn normalize_text(text: &str) -> String {
    let lowered = text.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    for word in lowered
        .split(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .filter(|w| !w.is_empty())
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Drops intents with fewer than `min_n` queries, then drops corpora left
/// without intents.
pub fn filter_min_queries(collection: &[Corpus], min_n: usize) -> Vec<Corpus> {
    collection
        .iter()
        .map(|corpus| Corpus {
            dataset_id: corpus.dataset_id.clone(),
            intents: corpus
                .intents
                .iter()
                .filter(|(_, intent)| intent.len() >= min_n)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        })
        .filter(|c| !c.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn sized(dataset: &str, sizes: &[(&str, usize)]) -> Corpus {
        let mut c = Corpus::new(dataset);
        for (name, n) in sizes {
            for i in 0..*n {
                c.push(name, format!("{name} query {i}"), None, None);
            }
        }
        c
    }

    #[test]
    fn load_single_weather_record() {
        let f = write_tmp(
            r#"{"dataset":"clinc150","intent":"weather","text":"what's the weather like today"}"#,
            ".jsonl",
        );
        let c = load_corpus(f.path(), Format::Jsonl, None).unwrap();
        assert_eq!(c.dataset_id, "clinc150");
        assert_eq!(c.intent_count(), 1);
        assert_eq!(c.query_count(), 1);
        let q = &c.intent("weather").unwrap().queries[0];
        assert_eq!(q.id, "clinc150/weather/0");
        assert_eq!(q.norm_text, "what s the weather like today");
    }

    #[test]
    fn empty_file_has_no_records() {
        let f = write_tmp("", ".jsonl");
        let err = load_corpus(f.path(), Format::Jsonl, None).unwrap_err();
        assert!(err.to_string().contains("no records"), "{err}");
    }

    #[test]
    fn groups_lines_by_intent() {
        let f = write_tmp(
            concat!(
                r#"{"dataset":"d","intent":"a","text":"one"}"#,
                "\n",
                r#"{"dataset":"d","intent":"b","text":"two"}"#,
                "\n\n",
                r#"{"dataset":"d","intent":"a","text":"three"}"#,
                "\n"
            ),
            ".jsonl",
        );
        let c = load_corpus(f.path(), Format::Jsonl, None).unwrap();
        assert_eq!(c.intent("a").unwrap().len(), 2);
        assert_eq!(c.intent("b").unwrap().len(), 1);
        assert_eq!(c.intent("a").unwrap().queries[1].id, "d/a/1");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp(
            "{\"dataset\":\"d\",\"intent\":\"a\",\"text\":\"ok\"}\n{not json\n",
            ".jsonl",
        );
        match load_corpus(f.path(), Format::Jsonl, None).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_text_is_an_error() {
        let f = write_tmp(r#"{"dataset":"d","intent":"a","text":"   "}"#, ".jsonl");
        let err = load_corpus(f.path(), Format::Jsonl, None).unwrap_err();
        assert!(err.to_string().contains("empty text"), "{err}");
    }

    #[test]
    fn mixed_datasets_rejected() {
        let f = write_tmp(
            "{\"dataset\":\"d\",\"intent\":\"a\",\"text\":\"x\"}\n{\"dataset\":\"e\",\"intent\":\"a\",\"text\":\"y\"}\n",
            ".jsonl",
        );
        assert!(load_corpus(f.path(), Format::Jsonl, None).is_err());
    }

    #[test]
    fn csv_with_dataset_parameter() {
        let f = write_tmp("text,intent\nset alarm tomorrow at 6 am,alarm_set\n\"hi, there\",greet\n", ".csv");
        let c = load_corpus(f.path(), Format::Csv, Some("slurp")).unwrap();
        assert_eq!(c.dataset_id, "slurp");
        assert_eq!(c.query_count(), 2);
        assert_eq!(c.intent("greet").unwrap().queries[0].norm_text, "hi there");
        assert!(load_corpus(f.path(), Format::Csv, None).is_err());
    }

    #[test]
    fn csv_missing_column() {
        let f = write_tmp("utterance,intent\nhello,greet\n", ".csv");
        assert!(load_corpus(f.path(), Format::Csv, Some("x")).is_err());
    }

    #[test]
    fn duplicate_dataset_in_collection() {
        let mut coll = Vec::new();
        insert_corpus(&mut coll, sized("d", &[("a", 1)])).unwrap();
        let err = insert_corpus(&mut coll, sized("d", &[("b", 1)])).unwrap_err();
        assert!(matches!(err, Error::DuplicateDataset(_)));
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_text("What's  the Weather?"), "what s the weather");
        assert_eq!(normalize_text(""), "");
        assert_eq!(
            normalize_text("set alarm tomorrow at 6 am"),
            "set alarm tomorrow at 6 am"
        );
        assert_eq!(normalize_text("  ?!  "), "");
        assert_eq!(normalize_text("tab\tand\nnewline"), "tab and newline");
    }

    #[test]
    fn min_query_filter() {
        let coll = vec![sized("d", &[("nine", 9), ("ten", 10)])];
        let out = filter_min_queries(&coll, 10);
        assert!(out[0].intent("nine").is_none());
        assert!(out[0].intent("ten").is_some());

        assert_eq!(filter_min_queries(&coll, 1), coll);

        let coll = vec![sized("d", &[("a", 5), ("b", 50), ("c", 150)])];
        let out = filter_min_queries(&coll, 50);
        let sizes: Vec<usize> = out[0].intents.values().map(Intent::len).collect();
        assert_eq!(sizes, vec![50, 150]);

        let coll = vec![sized("d", &[("a", 5)]), sized("e", &[("b", 60)])];
        let out = filter_min_queries(&coll, 50);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].dataset_id, "e");
    }

    #[test]
    fn jsonl_round_trip_with_provenance() {
        let mut c = Corpus::new("merged");
        c.push("x", "Hello there", Some(Split::Train), Some(IntentRef::new("a", "hi")));
        c.push("x", "bye", Some(Split::Test), Some(IntentRef::new("b", "bye")));
        c.push("y", "plain", None, None);
        let text = c.to_jsonl_string();
        let f = write_tmp(&text, ".jsonl");
        let back = load_corpus(f.path(), Format::Jsonl, None).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_jsonl_string(), text);
    }

    #[test]
    fn partition_by_split_tags() {
        let mut c = Corpus::new("m");
        c.push("x", "a", Some(Split::Train), None);
        c.push("x", "b", Some(Split::Test), None);
        c.push("x", "c", None, None);
        let (train, test) = c.partition_by_split();
        assert_eq!(train.query_count(), 2);
        assert_eq!(test.query_count(), 1);
    }
}
