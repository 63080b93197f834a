//! In-scope accuracy and out-of-scope detection benchmark.
//!
//! The in-process model is a multinomial logistic regression over bag of
//! words. Confidences from any other model can be evaluated through the
//! score-file import.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confusion::{argmax, build_vocab, featurize, step_size, training_rows, BowVocabulary, ScaledWeights};
use crate::corpus::{Corpus, IntentRef};
use crate::error::{Error, Result};
use crate::evaluation::auc;
use crate::graph::CollisionGraph;
use crate::merge::OosSet;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub threshold: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            epochs: 10,
            learning_rate: 0.5,
            l2: 1e-5,
            seed: 13,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.l2 >= 0.0) || self.epochs == 0 {
            return Err(Error::Config(
                "epochs, learning rate and l2 must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Softmax classifier. `weights` is row-major, one row per label, with the
/// bias in the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbModel {
    pub labels: Vec<String>,
    pub vocab: BowVocabulary,
    pub weights: Vec<f64>,
    pub seed: u64,
}

impl ProbModel {
    fn row_len(&self) -> usize {
        self.vocab.size() + 1
    }

    pub fn logits(&self, text: &str) -> Vec<f64> {
        let x = featurize(text, &self.vocab);
        let width = self.row_len();
        self.weights
            .chunks_exact(width)
            .map(|row| {
                let dot: f64 = x.entries.iter().map(|&(j, c)| row[j] * f64::from(c)).sum();
                dot + row[width - 1]
            })
            .collect()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn train_softmax(train: &Corpus, cfg: &BenchConfig) -> Result<ProbModel> {
    cfg.validate()?;
    if train.intent_count() < 2 {
        return Err(Error::TooFewIntents(train.intent_count()));
    }
    if let Some(intent) = train.intents.values().find(|i| i.is_empty()) {
        return Err(Error::EmptyIntent(intent.intent_ref().to_string()));
    }
    let vocab = build_vocab(train)?;
    let labels: Vec<String> = train.intents.keys().cloned().collect();
    let k = labels.len();
    let v = vocab.size();
    let rows = training_rows(train, &vocab);
    let n = rows.len();

    let mut w = ScaledWeights::new(k * v);
    let mut bias = vec![0.0f64; k];
    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut logits = vec![0.0f64; k];
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, label) = &rows[i];
            let eta = step_size(cfg.learning_rate, t, n);
            w.shrink(1.0 - eta * cfg.l2);
            for (c, z) in logits.iter_mut().enumerate() {
                let row = &w.v[c * v..(c + 1) * v];
                let dot: f64 = x.entries.iter().map(|&(j, cnt)| row[j] * f64::from(cnt)).sum();
                *z = w.scale * dot + bias[c];
            }
            let p = softmax(&logits);
            for (c, pc) in p.iter().enumerate() {
                let g = pc - if c == *label { 1.0 } else { 0.0 };
                let step = eta * g / w.scale;
                let row = &mut w.v[c * v..(c + 1) * v];
                for &(j, cnt) in &x.entries {
                    row[j] -= step * f64::from(cnt);
                }
                bias[c] -= eta * g;
            }
            t += 1;
        }
    }

    let dense = w.materialize();
    let mut weights = Vec::with_capacity(k * (v + 1));
    for c in 0..k {
        weights.extend_from_slice(&dense[c * v..(c + 1) * v]);
        weights.push(bias[c]);
    }
    Ok(ProbModel {
        labels,
        vocab,
        weights,
        seed: cfg.seed,
    })
}

pub fn predict_proba(model: &ProbModel, text: &str) -> Vec<f64> {
    softmax(&model.logits(text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    InScope(usize),
    OutOfScope,
}

/// In scope with the argmax label when `max(p) >= t`.
pub fn decide(p: &[f64], t: f64) -> Decision {
    let best = argmax(p);
    if p[best] >= t {
        Decision::InScope(best)
    } else {
        Decision::OutOfScope
    }
}

/// One scored in-scope test query.
#[derive(Debug, Clone, PartialEq)]
pub struct TestScore {
    pub gold: String,
    pub predicted: String,
    pub confidence: f64,
}

/// One scored out-of-scope query.
#[derive(Debug, Clone, PartialEq)]
pub struct OosScore {
    pub source: String,
    pub confidence: f64,
}

pub fn score_test(model: &ProbModel, test: &Corpus) -> Vec<TestScore> {
    let queries: Vec<(&str, &str)> = test
        .intents
        .iter()
        .flat_map(|(name, i)| i.queries.iter().map(move |q| (name.as_str(), q.norm_text.as_str())))
        .collect();
    queries
        .par_iter()
        .map(|&(gold, text)| {
            let p = predict_proba(model, text);
            let best = argmax(&p);
            TestScore {
                gold: gold.to_string(),
                predicted: model.labels[best].clone(),
                confidence: p[best],
            }
        })
        .collect()
}

pub fn score_oos(model: &ProbModel, oos: &OosSet) -> Vec<OosScore> {
    oos.queries
        .par_iter()
        .map(|q| OosScore {
            source: q.source.clone(),
            confidence: predict_proba(model, &q.norm_text).into_iter().fold(0.0, f64::max),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub accuracy: f64,
    pub per_intent: BTreeMap<String, f64>,
}

/// Argmax accuracy, ignoring the threshold. Micro-averaged over queries.
pub fn accuracy_from_scores(scores: &[TestScore]) -> Result<Accuracy> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for s in scores {
        let e = tally.entry(s.gold.as_str()).or_default();
        e.1 += 1;
        if s.gold == s.predicted {
            e.0 += 1;
            correct += 1;
        }
    }
    Ok(Accuracy {
        accuracy: correct as f64 / scores.len() as f64,
        per_intent: tally
            .into_iter()
            .map(|(k, (c, n))| (k.to_string(), c as f64 / n as f64))
            .collect(),
    })
}

pub fn in_scope_accuracy(model: &ProbModel, test: &Corpus) -> Result<Accuracy> {
    accuracy_from_scores(&score_test(model, test))
}

/// AUC with in-scope confidences as positives and out-of-scope ones as
/// negatives.
pub fn oos_auc(model: &ProbModel, test: &Corpus, oos: &OosSet) -> Result<f64> {
    let pos: Vec<f64> = score_test(model, test).iter().map(|s| s.confidence).collect();
    let neg: Vec<f64> = score_oos(model, oos).iter().map(|s| s.confidence).collect();
    auc(&pos, &neg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionBucket {
    pub mean_accuracy: f64,
    pub group_size: usize,
}

/// Maps each intent of a provenance-tagged corpus to its source intent, for
/// intents whose queries all come from one source.
pub fn provenance_map(corpus: &Corpus) -> BTreeMap<String, IntentRef> {
    let mut out = BTreeMap::new();
    for (name, intent) in &corpus.intents {
        let mut sources = intent.queries.iter().map(|q| q.source.as_ref());
        if let Some(Some(first)) = sources.next() {
            if sources.all(|s| s == Some(first)) {
                out.insert(name.clone(), first.clone());
            }
        }
    }
    out
}

/// Groups intents by the collision-graph degree of their source intent.
/// Intents without a resolvable source node count as degree 0.
pub fn accuracy_by_collision_count(
    per_intent: &BTreeMap<String, f64>,
    graph: &CollisionGraph,
    naive_names: &BTreeMap<String, IntentRef>,
) -> BTreeMap<usize, CollisionBucket> {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (name, acc) in per_intent {
        let degree = naive_names
            .get(name)
            .filter(|r| graph.contains(r))
            .map_or(0, |r| graph.degree(r));
        let e = sums.entry(degree).or_default();
        e.0 += acc;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(d, (sum, n))| {
            (
                d,
                CollisionBucket {
                    mean_accuracy: sum / n as f64,
                    group_size: n,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosReport {
    pub n_oos: usize,
    pub auc: f64,
    pub auc_by_source: BTreeMap<String, f64>,
    /// Share of out-of-scope queries rejected at the threshold.
    pub reject_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub threshold: f64,
    pub n_test: usize,
    pub in_scope_accuracy: f64,
    /// Share of in-scope test queries accepted at the threshold.
    pub in_scope_accept_rate: f64,
    pub per_intent_accuracy: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oos: Option<OosReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_collision_count: Option<BTreeMap<usize, CollisionBucket>>,
}

pub fn build_report(test: &[TestScore], oos: Option<&[OosScore]>, threshold: f64) -> Result<BenchReport> {
    let acc = accuracy_from_scores(test)?;
    let accepted = test.iter().filter(|s| s.confidence >= threshold).count();
    let oos = match oos {
        Some(oos) => {
            let pos: Vec<f64> = test.iter().map(|s| s.confidence).collect();
            let neg: Vec<f64> = oos.iter().map(|s| s.confidence).collect();
            let mut by_source: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for s in oos {
                by_source.entry(s.source.clone()).or_default().push(s.confidence);
            }
            let auc_by_source = by_source
                .into_iter()
                .map(|(k, neg)| Ok((k, auc(&pos, &neg)?)))
                .collect::<Result<_>>()?;
            Some(OosReport {
                n_oos: oos.len(),
                auc: auc(&pos, &neg)?,
                auc_by_source,
                reject_rate: oos.iter().filter(|s| s.confidence < threshold).count() as f64 / oos.len() as f64,
            })
        }
        None => None,
    };
    Ok(BenchReport {
        threshold,
        n_test: test.len(),
        in_scope_accuracy: acc.accuracy,
        in_scope_accept_rate: accepted as f64 / test.len() as f64,
        per_intent_accuracy: acc.per_intent,
        oos,
        per_collision_count: None,
    })
}

/// Trains on `train`, scores `test` and optionally `oos`.
pub fn run_bench(train: &Corpus, test: &Corpus, oos: Option<&OosSet>, cfg: &BenchConfig) -> Result<BenchReport> {
    let model = train_softmax(train, cfg)?;
    let test_scores = score_test(&model, test);
    let oos_scores = oos.map(|o| score_oos(&model, o));
    build_report(&test_scores, oos_scores.as_deref(), cfg.threshold)
}

/// A confidence produced outside this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScore {
    pub id: String,
    pub label: String,
    pub confidence: f64,
}

/// Reads JSONL `{"id", "label", "confidence"}` records keyed by query id.
pub fn load_scores(path: &Path) -> Result<HashMap<String, ExternalScore>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (idx, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let rec: ExternalScore = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if !rec.confidence.is_finite() {
            return Err(err(format!("non-finite confidence {}", rec.confidence)));
        }
        if let Some(prev) = out.insert(rec.id.clone(), rec) {
            return Err(err(format!("duplicate id `{}`", prev.id)));
        }
    }
    Ok(out)
}

/// Looks up every test and out-of-scope query in imported scores.
pub fn scores_from_external(
    scores: &HashMap<String, ExternalScore>,
    test: &Corpus,
    oos: Option<&OosSet>,
) -> Result<(Vec<TestScore>, Option<Vec<OosScore>>)> {
    let get = |id: &str| scores.get(id).ok_or_else(|| Error::MissingScore(id.to_string()));
    let mut t = Vec::new();
    for (name, intent) in &test.intents {
        for q in &intent.queries {
            let s = get(&q.id)?;
            t.push(TestScore {
                gold: name.clone(),
                predicted: s.label.clone(),
                confidence: s.confidence,
            });
        }
    }
    let o = oos
        .map(|o| {
            o.queries
                .iter()
                .map(|q| {
                    Ok(OosScore {
                        source: q.source.clone(),
                        confidence: get(&q.id)?.confidence,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    Ok((t, o))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge::{assemble_oos, OosSource};

    fn corpus(intents: &[(&str, &[&str])]) -> Corpus {
        let mut c = Corpus::new("t");
        for (name, texts) in intents {
            for t in *texts {
                c.push(name, *t, None, None);
            }
        }
        c
    }

    fn separable() -> Corpus {
        corpus(&[
            ("alarm", &["set an alarm", "wake me up at six", "alarm for seven", "set alarm please"]),
            ("weather", &["is it raining", "weather today", "will it snow", "forecast for tomorrow"]),
            ("music", &["play some jazz", "play music", "put on a song", "play the radio"]),
        ])
    }

    #[test]
    fn separable_fixture_trains_perfectly() {
        let c = separable();
        let m = train_softmax(&c, &BenchConfig::default()).unwrap();
        let acc = in_scope_accuracy(&m, &c).unwrap();
        assert_eq!(acc.accuracy, 1.0);
        assert!(acc.per_intent.values().all(|&a| a == 1.0));
        assert_eq!(m, train_softmax(&c, &BenchConfig::default()).unwrap());
        let p = predict_proba(&m, "play jazz");
        assert!(p[m.label_index("music").unwrap()] > 1.0 / 3.0);
    }

    #[test]
    fn oov_input_gives_softmax_of_biases() {
        let m = train_softmax(&separable(), &BenchConfig::default()).unwrap();
        let width = m.vocab.size() + 1;
        let biases: Vec<f64> = m.weights.chunks_exact(width).map(|r| r[width - 1]).collect();
        let p = predict_proba(&m, "zzz qqq");
        let expect = softmax(&biases);
        for (a, b) in p.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn needs_two_intents() {
        let c = corpus(&[("only", &["a b"])]);
        assert!(matches!(train_softmax(&c, &BenchConfig::default()), Err(Error::TooFewIntents(1))));
    }

    #[test]
    fn softmax_is_stable() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-12 && p[2] == 0.0);
    }

    #[test]
    fn decision_rule() {
        assert_eq!(decide(&[0.5, 0.3, 0.2], 0.5), Decision::InScope(0));
        assert_eq!(decide(&[0.2, 0.45, 0.35], 0.5), Decision::OutOfScope);
        assert_eq!(decide(&[0.2, 0.45, 0.35], 1.0), Decision::OutOfScope);
        assert_eq!(decide(&[0.2, 0.45, 0.35], 1e-12), Decision::InScope(1));
    }

    #[test]
    fn constant_predictor_scores_one_over_k() {
        let scores: Vec<TestScore> = ["a", "a", "b", "b", "c", "c"]
            .iter()
            .map(|g| TestScore {
                gold: g.to_string(),
                predicted: "a".into(),
                confidence: 0.9,
            })
            .collect();
        let acc = accuracy_from_scores(&scores).unwrap();
        assert!((acc.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(acc.per_intent["a"], 1.0);
        assert_eq!(acc.per_intent["b"], 0.0);
    }

    #[test]
    fn oos_copy_of_test_is_chance() {
        let c = separable();
        let m = train_softmax(&c, &BenchConfig::default()).unwrap();
        let src = vec![OosSource {
            name: "copy".into(),
            texts: c.intents.values().flat_map(|i| i.queries.iter().map(|q| q.text.clone())).collect(),
        }];
        let oos = assemble_oos(&src, &[]);
        assert_eq!(oos_auc(&m, &c, &oos).unwrap(), 0.5);
    }

    #[test]
    fn oov_oos_is_separable() {
        let c = separable();
        let m = train_softmax(&c, &BenchConfig::default()).unwrap();
        let src = vec![OosSource {
            name: "junk".into(),
            texts: vec!["zebra xylophone".into(), "quantum lettuce".into(), "hmm".into()],
        }];
        let oos = assemble_oos(&src, &[&c]);
        let pos: Vec<f64> = score_test(&m, &c).iter().map(|s| s.confidence).collect();
        let neg: Vec<f64> = score_oos(&m, &oos).iter().map(|s| s.confidence).collect();
        let mut wins = 0.0;
        for p in &pos {
            for n in &neg {
                wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        let brute = wins / (pos.len() * neg.len()) as f64;
        let got = oos_auc(&m, &c, &oos).unwrap();
        assert_eq!(got, brute);
        assert!(got > 0.95);
    }

    #[test]
    fn collision_buckets_partition_intents() {
        let mut g = CollisionGraph::new();
        let r = |d: &str, i: &str| IntentRef::new(d, i);
        g.add_edge(r("a", "x"), r("b", "y"), None).unwrap();
        g.add_edge(r("a", "x"), r("c", "z"), None).unwrap();
        let per_intent: BTreeMap<String, f64> = [("a.x", 0.4), ("b.y", 0.6), ("c.z", 0.8), ("d.w", 1.0), ("e.v", 0.9)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        let names: BTreeMap<String, IntentRef> = [("a.x", r("a", "x")), ("b.y", r("b", "y")), ("c.z", r("c", "z")), ("d.w", r("d", "w"))]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let t = accuracy_by_collision_count(&per_intent, &g, &names);
        assert_eq!(t.keys().copied().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(t[&0].group_size, 2);
        assert!((t[&0].mean_accuracy - 0.95).abs() < 1e-12);
        assert!((t[&1].mean_accuracy - 0.7).abs() < 1e-12);
        assert_eq!(t[&2].group_size, 1);
        assert_eq!(t.values().map(|b| b.group_size).sum::<usize>(), per_intent.len());
    }

    #[test]
    fn provenance_map_requires_single_source() {
        let mut c = Corpus::new("merged");
        c.push("a.x", "q", None, Some(IntentRef::new("a", "x")));
        c.push("m", "q", None, Some(IntentRef::new("a", "y")));
        c.push("m", "r", None, Some(IntentRef::new("b", "z")));
        c.push("bare", "q", None, None);
        let p = provenance_map(&c);
        assert_eq!(p.len(), 1);
        assert_eq!(p["a.x"], IntentRef::new("a", "x"));
    }

    #[test]
    fn report_echoes_threshold_and_omits_oos() {
        let c = separable();
        let cfg = BenchConfig {
            threshold: 0.42,
            ..Default::default()
        };
        let rep = run_bench(&c, &c, None, &cfg).unwrap();
        assert_eq!(rep.threshold, 0.42);
        assert!(rep.oos.is_none());
        let json = serde_json::to_string(&rep).unwrap();
        assert!(!json.contains("oos"));
    }

    #[test]
    fn external_scores() {
        let c = corpus(&[("a", &["x", "y"]), ("b", &["z"])]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        std::fs::write(
            &p,
            "{\"id\":\"t/a/0\",\"label\":\"a\",\"confidence\":0.9}\n{\"id\":\"t/a/1\",\"label\":\"b\",\"confidence\":0.4}\n{\"id\":\"t/b/0\",\"label\":\"b\",\"confidence\":0.8}\n",
        )
        .unwrap();
        let s = load_scores(&p).unwrap();
        let (t, o) = scores_from_external(&s, &c, None).unwrap();
        assert!(o.is_none());
        let rep = build_report(&t, None, 0.5).unwrap();
        assert!((rep.in_scope_accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert!((rep.in_scope_accept_rate - 2.0 / 3.0).abs() < 1e-15);

        let mut c2 = c.clone();
        c2.push("b", "w", None, None);
        assert!(matches!(scores_from_external(&s, &c2, None), Err(Error::MissingScore(_))));

        std::fs::write(&p, "{\"id\":\"a\",\"label\":\"a\",\"confidence\":0.9}\n{\"id\":\"a\",\"label\":\"a\",\"confidence\":0.1}\n").unwrap();
        assert!(load_scores(&p).is_err());
    }

    proptest::proptest! {
        #[test]
        fn probabilities_are_simplex_points(words in proptest::collection::vec("[a-z]{1,6}", 0..8)) {
            let m = train_softmax(&separable(), &BenchConfig::default()).unwrap();
            let p = predict_proba(&m, &words.join(" "));
            proptest::prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            proptest::prop_assert!(p.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn decide_is_monotone_in_threshold(raw in proptest::collection::vec(0.0f64..1.0, 1..6), t1 in 0.001f64..1.0, t2 in 0.001f64..1.0) {
            let total: f64 = raw.iter().sum::<f64>() + 1e-3;
            let p: Vec<f64> = raw.iter().map(|x| (x + 1e-3 / raw.len() as f64) / total).collect();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if decide(&p, lo) == Decision::OutOfScope {
                proptest::prop_assert_eq!(decide(&p, hi), Decision::OutOfScope);
            }
        }
    }
}
