//! Threshold-free evaluation of the collision detectors against a
//! meta-dataset, using the Mann-Whitney form of ROC AUC.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confusion::{classification_distribution, collision_score, train_classifier, ConfusionConfig};
use crate::corpus::{filter_min_queries, find_intent, Corpus, Intent, IntentRef};
use crate::coverage::{score_prepared_pairs, CoverageConfig, PairAggregation, PreparedIntent};
use crate::error::{Error, Result};
use crate::graph::CollisionGraph;
use crate::seed;
use crate::similarity::SimilarityKind;

/// Probability that a random positive outscores a random negative, with ties
/// counted as one half. Computed by sorting, in O((n + m) log(n + m)).
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyScores);
    }
    let mut all: Vec<(f64, bool)> = Vec::with_capacity(pos.len() + neg.len());
    for (&s, is_pos) in pos.iter().map(|s| (s, true)).chain(neg.iter().map(|s| (s, false))) {
        if !s.is_finite() {
            return Err(Error::NonFinite(s));
        }
        // fold -0.0 into 0.0 so total_cmp groups them as a tie
        all.push((s + 0.0, is_pos));
    }
    all.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut wins: u64 = 0;
    let mut ties: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < all.len() {
        let value = all[i].0;
        let (mut p, mut q) = (0u64, 0u64);
        while i < all.len() && all[i].0 == value {
            if all[i].1 {
                p += 1;
            } else {
                q += 1;
            }
            i += 1;
        }
        wins += p * neg_below;
        ties += p * q;
        neg_below += q;
    }
    let pairs = pos.len() as f64 * neg.len() as f64;
    Ok((wins as f64 + 0.5 * ties as f64) / pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    ScoreHighMeansCollision,
    ScoreLowMeansCollision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    /// AUC under `orientation`, i.e. the larger of the two orientations.
    pub auc: f64,
    pub orientation: Orientation,
    /// AUC with high scores read as collisions, reported regardless of which
    /// orientation separates better.
    pub auc_high_means_collision: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl AucResult {
    pub fn from_scores(pos: &[f64], neg: &[f64]) -> Result<Self> {
        let high = auc(pos, neg)?;
        let low = auc(neg, pos)?;
        let (auc, orientation) = if high >= low {
            (high, Orientation::ScoreHighMeansCollision)
        } else {
            (low, Orientation::ScoreLowMeansCollision)
        };
        Ok(Self {
            auc,
            orientation,
            auc_high_means_collision: high,
            n_pos: pos.len(),
            n_neg: neg.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    Collision,
    NonCollision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub a: IntentRef,
    pub b: IntentRef,
    pub score: f64,
    pub label: PairLabel,
}

#[derive(Debug, Clone, Copy)]
pub enum Method<'a> {
    Coverage {
        kind: SimilarityKind<'a>,
        aggregation: PairAggregation,
    },
    Confusion(ConfusionConfig),
}

impl Method<'_> {
    pub fn name(&self) -> String {
        match self {
            Method::Coverage { kind, aggregation } => {
                let agg = serde_json::to_value(aggregation).expect("enum serializes");
                format!("coverage:{}:{}", kind.name(), agg.as_str().unwrap_or_default())
            }
            Method::Confusion(_) => "confusion:linear_svm".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExperimentConfig<'a> {
    pub min_queries: usize,
    pub n_non_collision_sample: usize,
    pub seed: u64,
    pub method: Method<'a>,
}

impl<'a> ExperimentConfig<'a> {
    pub fn new(method: Method<'a>) -> Self {
        Self {
            min_queries: 10,
            n_non_collision_sample: 300,
            seed: 13,
            method,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.min_queries == 0 || self.n_non_collision_sample == 0 {
            return Err(Error::Config(
                "min_queries and sample size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// All colliding pairs whose endpoints are present in `corpora`, followed by
/// a seeded uniform sample (without replacement) of cross-dataset pairs that
/// the graph does not connect. Expects `corpora` already filtered.
pub fn sample_pairs(
    graph: &CollisionGraph,
    corpora: &[Corpus],
    n_sample: usize,
    seed: u64,
) -> Result<Vec<(IntentRef, IntentRef, PairLabel)>> {
    let mut out: Vec<(IntentRef, IntentRef, PairLabel)> = graph
        .edges()
        .filter(|e| find_intent(corpora, &e.a).is_some() && find_intent(corpora, &e.b).is_some())
        .map(|e| (e.a, e.b, PairLabel::Collision))
        .collect();

    let mut intents: Vec<IntentRef> = corpora
        .iter()
        .flat_map(|c| c.intents.values().map(Intent::intent_ref))
        .collect();
    intents.sort();
    let mut universe: Vec<(usize, usize)> = Vec::new();
    for i in 0..intents.len() {
        for j in i + 1..intents.len() {
            if intents[i].dataset != intents[j].dataset && !graph.has_edge(&intents[i], &intents[j]) {
                universe.push((i, j));
            }
        }
    }
    if n_sample > universe.len() {
        return Err(Error::SampleTooLarge {
            requested: n_sample,
            available: universe.len(),
        });
    }
    let mut rng = seed::rng(seed);
    let mut picked = index::sample(&mut rng, universe.len(), n_sample).into_vec();
    picked.sort_unstable();
    out.extend(picked.into_iter().map(|k| {
        let (i, j) = universe[k];
        (intents[i].clone(), intents[j].clone(), PairLabel::NonCollision)
    }));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: String,
    pub auc: f64,
    pub orientation: Orientation,
    pub auc_high_means_collision: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub pairs: Vec<ScoredPair>,
}

impl ExperimentReport {
    fn new(method: String, pairs: Vec<ScoredPair>) -> Result<Self> {
        let (pos, neg): (Vec<&ScoredPair>, Vec<&ScoredPair>) =
            pairs.iter().partition(|p| p.label == PairLabel::Collision);
        let pos: Vec<f64> = pos.iter().map(|p| p.score).collect();
        let neg: Vec<f64> = neg.iter().map(|p| p.score).collect();
        let r = AucResult::from_scores(&pos, &neg)?;
        Ok(Self {
            method,
            auc: r.auc,
            orientation: r.orientation,
            auc_high_means_collision: r.auc_high_means_collision,
            n_pos: r.n_pos,
            n_neg: r.n_neg,
            pairs,
        })
    }

    pub fn auc_result(&self) -> AucResult {
        AucResult {
            auc: self.auc,
            orientation: self.orientation,
            auc_high_means_collision: self.auc_high_means_collision,
            n_pos: self.n_pos,
            n_neg: self.n_neg,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
        w.write_record(["a_dataset", "a_intent", "b_dataset", "b_intent", "score", "label"])
            .map_err(io)?;
        for p in &self.pairs {
            let label = match p.label {
                PairLabel::Collision => "collision",
                PairLabel::NonCollision => "non_collision",
            };
            w.write_record([
                p.a.dataset.as_str(),
                p.a.intent.as_str(),
                p.b.dataset.as_str(),
                p.b.intent.as_str(),
                &p.score.to_string(),
                label,
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Config(format!("csv write failed: {e}")))
    }
}

pub fn run_coverage_experiment(
    graph: &CollisionGraph,
    corpora: &[Corpus],
    cfg: &ExperimentConfig<'_>,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let Method::Coverage { kind, aggregation } = cfg.method else {
        return Err(Error::Config("coverage experiment needs a coverage method".into()));
    };
    let filtered = filter_min_queries(corpora, cfg.min_queries);
    let pairs = sample_pairs(graph, &filtered, cfg.n_non_collision_sample, cfg.seed)?;

    let mut prepared: BTreeMap<IntentRef, PreparedIntent<'_>> = BTreeMap::new();
    for (a, b, _) in &pairs {
        for r in [a, b] {
            if !prepared.contains_key(r) {
                let intent = find_intent(&filtered, r).expect("sampled from filtered corpora");
                prepared.insert(r.clone(), PreparedIntent::new(intent, &kind)?);
            }
        }
    }
    let cov_cfg = CoverageConfig::new(kind, 0.0, aggregation)?;
    let refs: Vec<(&PreparedIntent<'_>, &PreparedIntent<'_>)> =
        pairs.iter().map(|(a, b, _)| (&prepared[a], &prepared[b])).collect();
    let results = score_prepared_pairs(&refs, &cov_cfg);
    let scored = pairs
        .into_iter()
        .zip(results)
        .map(|((a, b, label), r)| ScoredPair {
            a,
            b,
            score: r.aggregate,
            label,
        })
        .collect();
    ExperimentReport::new(cfg.method.name(), scored)
}

/// Trains one classifier per multi-intent dataset and scores every intent of
/// the other datasets against it. A `(dataset, candidate)` pair is positive
/// when the candidate collides with any intent of that dataset. In the
/// returned pairs, `a` is the candidate's most-predicted label.
pub fn run_confusion_experiment(
    graph: &CollisionGraph,
    corpora: &[Corpus],
    cfg: &ExperimentConfig<'_>,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let Method::Confusion(conf) = cfg.method else {
        return Err(Error::Config("confusion experiment needs a confusion method".into()));
    };
    let mut filtered = filter_min_queries(corpora, cfg.min_queries);
    filtered.sort_by(|x, y| x.dataset_id.cmp(&y.dataset_id));
    let trainable: Vec<&Corpus> = filtered.iter().filter(|c| c.intent_count() >= 2).collect();
    if trainable.is_empty() {
        return Err(Error::TooFewIntents(
            filtered.iter().map(Corpus::intent_count).max().unwrap_or(0),
        ));
    }

    let mut scored = Vec::new();
    for trained in trainable {
        let model = train_classifier(trained, &conf)?;
        let candidates: Vec<&Intent> = filtered
            .iter()
            .filter(|c| c.dataset_id != trained.dataset_id)
            .flat_map(|c| c.intents.values())
            .collect();
        let rows = candidates
            .par_iter()
            .map(|cand| {
                let d = classification_distribution(&model, cand)?;
                let score = collision_score(&d)?;
                let target = d.target().unwrap_or_default().to_string();
                let cref = cand.intent_ref();
                let positive = graph.neighbors(&cref).any(|n| n.dataset == trained.dataset_id);
                Ok(ScoredPair {
                    a: IntentRef::new(&trained.dataset_id, target),
                    b: cref,
                    score,
                    label: if positive {
                        PairLabel::Collision
                    } else {
                        PairLabel::NonCollision
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        scored.extend(rows);
    }
    ExperimentReport::new(cfg.method.name(), scored)
}
