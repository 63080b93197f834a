//! Data-coverage collision detection.
//!
//! `coverage(A, B)` is the mean, over the queries `b` of `B`, of the best
//! similarity any query of `A` reaches against `b`: how well `A` covers `B`.
//! Two intents collide when the aggregated coverage exceeds `kappa`.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Intent, IntentRef};
use crate::error::{Error, Result};
use crate::similarity::{Prepared, SimilarityKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairAggregation {
    /// `coverage(A, B)` only.
    Directed,
    #[default]
    MaxOfBoth,
    MeanOfBoth,
}

impl PairAggregation {
    pub fn combine(self, score_ab: f64, score_ba: f64) -> f64 {
        match self {
            PairAggregation::Directed => score_ab,
            PairAggregation::MaxOfBoth => score_ab.max(score_ba),
            PairAggregation::MeanOfBoth => (score_ab + score_ba) / 2.0,
        }
    }
}

impl FromStr for PairAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "directed" => Ok(PairAggregation::Directed),
            "max" | "max_of_both" => Ok(PairAggregation::MaxOfBoth),
            "mean" | "mean_of_both" => Ok(PairAggregation::MeanOfBoth),
            other => Err(Error::Config(format!("unknown aggregation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoverageConfig<'a> {
    pub kind: SimilarityKind<'a>,
    pub kappa: f64,
    pub aggregation: PairAggregation,
}

impl<'a> CoverageConfig<'a> {
    pub fn new(kind: SimilarityKind<'a>, kappa: f64, aggregation: PairAggregation) -> Result<Self> {
        if !kappa.is_finite() {
            return Err(Error::Config(format!("kappa must be finite, got {kappa}")));
        }
        Ok(Self {
            kind,
            kappa,
            aggregation,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub a: IntentRef,
    pub b: IntentRef,
    /// `coverage(A, B)`: A covering B.
    pub score_ab: f64,
    /// `coverage(B, A)`: B covering A.
    pub score_ba: f64,
    pub aggregate: f64,
    pub collide: bool,
}

/// An intent with every query's similarity features precomputed.
pub struct PreparedIntent<'a> {
    pub intent_ref: IntentRef,
    queries: Vec<Prepared<'a>>,
}

impl<'a> PreparedIntent<'a> {
    pub fn new(intent: &Intent, kind: &SimilarityKind<'a>) -> Result<Self> {
        if intent.is_empty() {
            return Err(Error::EmptyIntent(intent.intent_ref().to_string()));
        }
        let queries = intent
            .queries
            .iter()
            .map(|q| Prepared::new(q, kind))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            intent_ref: intent.intent_ref(),
            queries,
        })
    }

    /// Coverage of `self` over `other`: mean over `other`'s queries, in
    /// stored order, of the best match in `self`.
    pub fn covers(&self, other: &PreparedIntent<'_>) -> f64 {
        let total: f64 = other
            .queries
            .iter()
            .map(|b| {
                self.queries
                    .iter()
                    .map(|a| a.similarity(b))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum();
        total / other.queries.len() as f64
    }
}

pub fn coverage(a: &Intent, b: &Intent, kind: &SimilarityKind<'_>) -> Result<f64> {
    let pa = PreparedIntent::new(a, kind)?;
    let pb = PreparedIntent::new(b, kind)?;
    Ok(pa.covers(&pb))
}

fn result_for(a: &PreparedIntent<'_>, b: &PreparedIntent<'_>, cfg: &CoverageConfig<'_>) -> CoverageResult {
    let score_ab = a.covers(b);
    let score_ba = b.covers(a);
    let aggregate = cfg.aggregation.combine(score_ab, score_ba);
    CoverageResult {
        a: a.intent_ref.clone(),
        b: b.intent_ref.clone(),
        score_ab,
        score_ba,
        aggregate,
        collide: aggregate > cfg.kappa,
    }
}

pub fn detect_collision_coverage(a: &Intent, b: &Intent, cfg: &CoverageConfig<'_>) -> Result<CoverageResult> {
    let pa = PreparedIntent::new(a, &cfg.kind)?;
    let pb = PreparedIntent::new(b, &cfg.kind)?;
    Ok(result_for(&pa, &pb, cfg))
}

/// Scores already-prepared pairs in parallel, preserving input order.
pub fn score_prepared_pairs(
    pairs: &[(&PreparedIntent<'_>, &PreparedIntent<'_>)],
    cfg: &CoverageConfig<'_>,
) -> Vec<CoverageResult> {
    pairs.par_iter().map(|(a, b)| result_for(a, b, cfg)).collect()
}

/// One result per `(A, B)` pair; `table[i][j]` pairs `collection_a[i]` with
/// `collection_b[j]`.
pub fn coverage_matrix(
    collection_a: &[&Intent],
    collection_b: &[&Intent],
    cfg: &CoverageConfig<'_>,
) -> Result<Vec<Vec<CoverageResult>>> {
    let pa = collection_a
        .iter()
        .map(|i| PreparedIntent::new(i, &cfg.kind))
        .collect::<Result<Vec<_>>>()?;
    let pb = collection_b
        .iter()
        .map(|i| PreparedIntent::new(i, &cfg.kind))
        .collect::<Result<Vec<_>>>()?;
    Ok(pa
        .par_iter()
        .map(|a| pb.iter().map(|b| result_for(a, b, cfg)).collect())
        .collect())
}
