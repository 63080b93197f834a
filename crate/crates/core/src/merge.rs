//! Combined corpus construction.
//!
//! An arbitrated build turns connected components of the collision graph
//! into merged intents (optionally dropping the broad side of hierarchical
//! collisions), while a naive build keeps every intent under its
//! `dataset.intent` name. Both then apply the minimum-size filter, an
//! optional per-intent cap, and a per-intent seeded train/test split.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::corpus::{filter_min_queries, find_intent, Corpus, Intent, IntentRef, Split};
use crate::coverage::coverage;
use crate::error::{Error, Result};
use crate::graph::{broader_endpoint, connected_components, CollisionGraph, EdgeKind};
use crate::seed;
use crate::similarity::{NGramConfig, SimilarityKind};

pub const MERGED_DATASET: &str = "merged";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeGroup {
    pub members: Vec<IntentRef>,
    pub merged_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropEntry {
    #[serde(rename = "ref")]
    pub intent: IntentRef,
    pub reason: String,
}

/// Which intents are unioned, dropped, or kept as they are. Every corpus
/// intent appears exactly once across `groups`, `drops` and `passthrough`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergePlan {
    pub groups: Vec<MergeGroup>,
    #[serde(default)]
    pub drops: Vec<DropEntry>,
    #[serde(default)]
    pub passthrough: Vec<IntentRef>,
    /// Output-name overrides keyed by the default name (`dataset.intent` for
    /// passthrough intents, the default merged name for groups).
    #[serde(default)]
    pub renames: BTreeMap<String, String>,
}

impl MergePlan {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    fn final_name(&self, default: &str) -> String {
        self.renames
            .get(default)
            .cloned()
            .unwrap_or_else(|| default.to_string())
    }
}

#[derive(Debug, Clone, Default)]
pub struct PlanOptions {
    pub drop_hierarchical: bool,
    pub renames: BTreeMap<String, String>,
    /// Similarity used to tell the broad side of a hierarchical edge.
    pub ngram: NGramConfig,
}

/// Plans a merge from the collision graph.
///
/// With `drop_hierarchical`, the broader endpoint of every edge labelled
/// hierarchical is dropped first (the endpoint with the higher coverage of
/// the other, falling back to the higher degree). Connected components of
/// what remains become groups; isolated intents pass through.
pub fn plan_merge(graph: &CollisionGraph, corpora: &[Corpus], opts: &PlanOptions) -> Result<MergePlan> {
    let universe: BTreeSet<IntentRef> = corpora
        .iter()
        .flat_map(|c| c.intents.values().map(Intent::intent_ref))
        .collect();

    let mut dropped: BTreeMap<IntentRef, String> = BTreeMap::new();
    if opts.drop_hierarchical {
        let kind = SimilarityKind::NGram(opts.ngram);
        for edge in graph.edges() {
            if edge.kind != Some(EdgeKind::Hierarchical)
                || !universe.contains(&edge.a)
                || !universe.contains(&edge.b)
            {
                continue;
            }
            let a = find_intent(corpora, &edge.a).expect("in universe");
            let b = find_intent(corpora, &edge.b).expect("in universe");
            let cov_ab = coverage(a, b, &kind)?;
            let cov_ba = coverage(b, a, &kind)?;
            let broad = broader_endpoint(&edge, cov_ab, cov_ba).or_else(|| {
                match graph.degree(&edge.a).cmp(&graph.degree(&edge.b)) {
                    std::cmp::Ordering::Greater => Some(&edge.a),
                    std::cmp::Ordering::Less => Some(&edge.b),
                    std::cmp::Ordering::Equal => None,
                }
            });
            if let Some(broad) = broad {
                let narrow = if *broad == edge.a { &edge.b } else { &edge.a };
                dropped
                    .entry(broad.clone())
                    .or_insert_with(|| format!("broader side of hierarchical collision with {narrow}"));
            }
        }
    }

    let mut sub = CollisionGraph::new();
    for r in universe.iter().filter(|r| !dropped.contains_key(*r)) {
        sub.add_node(r.clone())?;
    }
    for edge in graph.edges() {
        if sub.contains(&edge.a) && sub.contains(&edge.b) {
            sub.add_edge(edge.a, edge.b, edge.kind)?;
        }
    }

    let mut plan = MergePlan {
        renames: opts.renames.clone(),
        ..Default::default()
    };
    for component in connected_components(&sub) {
        if component.len() == 1 {
            plan.passthrough.extend(component);
        } else {
            let default = component[0].dotted();
            plan.groups.push(MergeGroup {
                merged_name: plan.final_name(&default),
                members: component,
            });
        }
    }
    plan.drops = dropped
        .into_iter()
        .map(|(intent, reason)| DropEntry { intent, reason })
        .collect();

    let defaults: HashSet<String> = plan
        .groups
        .iter()
        .map(|g| g.members[0].dotted())
        .chain(plan.passthrough.iter().map(IntentRef::dotted))
        .collect();
    if let Some(src) = plan.renames.keys().find(|k| !defaults.contains(*k)) {
        return Err(Error::Plan(format!("rename source `{src}` is not an output intent")));
    }
    output_names(&plan)?;
    Ok(plan)
}

/// Output name for each group and passthrough intent, checking uniqueness.
fn output_names(plan: &MergePlan) -> Result<Vec<String>> {
    let names: Vec<String> = plan
        .groups
        .iter()
        .map(|g| plan.final_name(&g.merged_name))
        .chain(plan.passthrough.iter().map(|r| plan.final_name(&r.dotted())))
        .collect();
    let mut seen = HashSet::new();
    for n in &names {
        if !seen.insert(n.as_str()) {
            return Err(Error::Plan(format!("output intent name `{n}` is used twice")));
        }
    }
    Ok(names)
}

/// Materializes a plan as a single corpus with dataset id `merged`.
/// Queries keep their original dataset and intent as provenance.
pub fn apply_merge(plan: &MergePlan, corpora: &[Corpus]) -> Result<Corpus> {
    let mut placed: BTreeMap<IntentRef, &'static str> = BTreeMap::new();
    let mut place = |r: &IntentRef, slot: &'static str| -> Result<()> {
        if find_intent(corpora, r).is_none() {
            return Err(Error::Plan(format!("plan references missing intent {r}")));
        }
        if let Some(prev) = placed.insert(r.clone(), slot) {
            return Err(Error::Plan(format!("intent {r} appears in both {prev} and {slot}")));
        }
        Ok(())
    };
    for g in &plan.groups {
        if g.members.is_empty() {
            return Err(Error::Plan(format!("group `{}` has no members", g.merged_name)));
        }
        for m in &g.members {
            place(m, "groups")?;
        }
    }
    for d in &plan.drops {
        place(&d.intent, "drops")?;
    }
    for p in &plan.passthrough {
        place(p, "passthrough")?;
    }
    for c in corpora {
        for i in c.intents.values() {
            if !placed.contains_key(&i.intent_ref()) {
                return Err(Error::Plan(format!("intent {} is not covered by the plan", i.intent_ref())));
            }
        }
    }
    let names = output_names(plan)?;

    let mut out = Corpus::new(MERGED_DATASET);
    let members = plan
        .groups
        .iter()
        .map(|g| g.members.as_slice())
        .chain(plan.passthrough.iter().map(std::slice::from_ref));
    for (name, members) in names.iter().zip(members) {
        for m in members {
            let intent = find_intent(corpora, m).expect("checked above");
            for q in &intent.queries {
                let source = q.source.clone().unwrap_or_else(|| m.clone());
                out.push(name, &q.text, q.split, Some(source));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub min_queries: usize,
    pub cap: Option<usize>,
    pub train_fraction: f64,
    pub seed: u64,
}

impl BuildConfig {
    /// Defaults for an arbitrated build: minimum 50 queries, no cap.
    pub fn arbitrated() -> Self {
        Self {
            min_queries: 50,
            cap: None,
            train_fraction: 0.85,
            seed: 13,
        }
    }

    /// Defaults for a naive build: minimum 50, capped at 150 per intent.
    pub fn naive() -> Self {
        Self {
            cap: Some(150),
            ..Self::arbitrated()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.min_queries == 0 {
            return Err(Error::Config("min_queries must be at least 1".into()));
        }
        if let Some(cap) = self.cap {
            if cap < self.min_queries {
                return Err(Error::Config(format!(
                    "cap {cap} is below min_queries {}",
                    self.min_queries
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCorpus {
    pub train: Corpus,
    pub test: Corpus,
}

impl SplitCorpus {
    /// One corpus with every query tagged; per intent, train rows precede
    /// test rows.
    pub fn to_tagged_corpus(&self) -> Corpus {
        let mut out = Corpus::new(&self.train.dataset_id);
        for (name, intent) in &self.train.intents {
            let test = self.test.intents.get(name).map(|i| i.queries.as_slice()).unwrap_or(&[]);
            for q in intent.queries.iter().chain(test) {
                out.push(name, &q.text, q.split, q.source.clone());
            }
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> std::io::Result<()> {
        self.to_tagged_corpus().write_jsonl(out)
    }
}

/// Number of test queries for an intent of `n` queries: the test share of
/// `n` rounded half up, at least 1, and leaving at least one for training.
pub fn test_count(n: usize, train_fraction: f64) -> usize {
    let raw = (1.0 - train_fraction) * n as f64;
    let rounded = (raw + 0.5 + 1e-9).floor() as usize;
    rounded.max(1).min(n.saturating_sub(1))
}

/// Per-intent seeded split. Query ids are kept, so train and test ids are
/// disjoint and together cover the intent.
pub fn split(corpus: &Corpus, cfg: &BuildConfig) -> Result<SplitCorpus> {
    cfg.validate()?;
    let mut train = Corpus::new(&corpus.dataset_id);
    let mut test = Corpus::new(&corpus.dataset_id);
    for (name, intent) in &corpus.intents {
        let n = intent.len();
        if n < 2 {
            return Err(Error::Unsplittable(intent.intent_ref().to_string()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::keyed_rng(cfg.seed, &format!("split:{name}")));
        let n_test = test_count(n, cfg.train_fraction);
        let test_idx: BTreeSet<usize> = order[..n_test].iter().copied().collect();
        let mut tr = Vec::with_capacity(n - n_test);
        let mut te = Vec::with_capacity(n_test);
        for (i, q) in intent.queries.iter().enumerate() {
            let mut q = q.clone();
            if test_idx.contains(&i) {
                q.split = Some(Split::Test);
                te.push(q);
            } else {
                q.split = Some(Split::Train);
                tr.push(q);
            }
        }
        for (target, queries) in [(&mut train, tr), (&mut test, te)] {
            target.intents.insert(
                name.clone(),
                Intent {
                    dataset_id: corpus.dataset_id.clone(),
                    name: name.clone(),
                    queries,
                },
            );
        }
    }
    Ok(SplitCorpus { train, test })
}

/// Keeps at most `cap` queries per intent, chosen uniformly with a per-intent
/// seeded stream; survivors keep their relative order.
pub fn cap_intents(corpus: &Corpus, cap: usize, seed: u64) -> Corpus {
    let mut out = corpus.clone();
    for (name, intent) in out.intents.iter_mut() {
        if intent.len() > cap {
            let mut rng = seed::keyed_rng(seed, &format!("cap:{name}"));
            let mut keep = index::sample(&mut rng, intent.len(), cap).into_vec();
            keep.sort_unstable();
            intent.queries = keep.into_iter().map(|i| intent.queries[i].clone()).collect();
        }
    }
    out
}

/// apply, minimum-size filter, optional cap, split.
pub fn build_from_plan(plan: &MergePlan, corpora: &[Corpus], cfg: &BuildConfig) -> Result<SplitCorpus> {
    cfg.validate()?;
    finish_build(apply_merge(plan, corpora)?, cfg)
}

fn finish_build(merged: Corpus, cfg: &BuildConfig) -> Result<SplitCorpus> {
    let filtered = filter_min_queries(std::slice::from_ref(&merged), cfg.min_queries)
        .pop()
        .unwrap_or_else(|| Corpus::new(MERGED_DATASET));
    let capped = match cfg.cap {
        Some(cap) => cap_intents(&filtered, cap, cfg.seed),
        None => filtered,
    };
    split(&capped, cfg)
}

/// plan, apply, minimum-size filter, optional cap, split.
pub fn build_arbitrated(
    corpora: &[Corpus],
    graph: &CollisionGraph,
    cfg: &BuildConfig,
    opts: &PlanOptions,
) -> Result<SplitCorpus> {
    cfg.validate()?;
    build_from_plan(&plan_merge(graph, corpora, opts)?, corpora, cfg)
}

/// Every intent kept as `dataset.intent`, no arbitration.
pub fn build_naive(corpora: &[Corpus], cfg: &BuildConfig) -> Result<SplitCorpus> {
    cfg.validate()?;
    build_from_plan(&plan_merge(&CollisionGraph::new(), corpora, &PlanOptions::default())?, corpora, cfg)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OosQuery {
    pub id: String,
    pub source: String,
    pub text: String,
    #[serde(skip)]
    pub norm_text: String,
}

/// Out-of-scope queries, deduplicated and disjoint from the in-scope text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OosSet {
    pub queries: Vec<OosQuery>,
}

impl OosSet {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Source names in first-seen order.
    pub fn sources(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for q in &self.queries {
            if !seen.contains(&q.source.as_str()) {
                seen.push(q.source.as_str());
            }
        }
        seen
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for q in &self.queries {
            serde_json::to_writer(&mut out, q)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OosSource {
    pub name: String,
    pub texts: Vec<String>,
}

#[derive(Deserialize)]
struct OosRecord {
    text: String,
    #[serde(default)]
    source: Option<String>,
}

/// Reads out-of-scope candidates: JSONL objects with `text` and an optional
/// `source`, defaulting to the file stem. Sources keep first-seen order.
pub fn load_oos(path: &Path) -> Result<Vec<OosSource>> {
    let default = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("oos")
        .to_string();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut sources: Vec<OosSource> = Vec::new();
    for (idx, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: OosRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        let name = rec.source.unwrap_or_else(|| default.clone());
        match sources.iter_mut().find(|s| s.name == name) {
            Some(s) => s.texts.push(rec.text),
            None => sources.push(OosSource {
                name,
                texts: vec![rec.text],
            }),
        }
    }
    Ok(sources)
}

/// Concatenates the sources, keeps the first occurrence of each normalized
/// text, and removes anything whose normalized text occurs in scope.
pub fn assemble_oos(sources: &[OosSource], inscope: &[&Corpus]) -> OosSet {
    let blocked: HashSet<&str> = inscope
        .iter()
        .flat_map(|c| c.intents.values())
        .flat_map(|i| i.queries.iter())
        .map(|q| q.norm_text.as_str())
        .collect();
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = OosSet::default();
    for source in sources {
        let mut ordinal = 0;
        for text in &source.texts {
            let norm = crate::corpus::normalize_text(text);
            if norm.is_empty() || blocked.contains(norm.as_str()) || !seen.insert(norm.clone()) {
                continue;
            }
            out.queries.push(OosQuery {
                id: format!("oos/{}/{}", source.name, ordinal),
                source: source.name.clone(),
                text: text.clone(),
                norm_text: norm,
            });
            ordinal += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(dataset: &str, sizes: &[(&str, usize)]) -> Corpus {
        let mut c = Corpus::new(dataset);
        for (name, n) in sizes {
            for i in 0..*n {
                c.push(name, format!("{dataset} {name} query number {i}"), None, None);
            }
        }
        c
    }

    fn r(d: &str, i: &str) -> IntentRef {
        IntentRef::new(d, i)
    }

    #[test]
    fn weather_pair_becomes_one_group() {
        let corpora = vec![corpus("clinc150", &[("weather", 3), ("alarm", 2)]), corpus("hwu", &[("get_weather", 4)])];
        let mut g = CollisionGraph::new();
        g.add_edge(r("clinc150", "weather"), r("hwu", "get_weather"), None).unwrap();
        let plan = plan_merge(&g, &corpora, &PlanOptions::default()).unwrap();
        assert_eq!(plan.groups.len(), 1);
        assert_eq!(plan.groups[0].merged_name, "clinc150.weather");
        assert_eq!(plan.groups[0].members.len(), 2);
        assert_eq!(plan.passthrough, vec![r("clinc150", "alarm")]);

        let merged = apply_merge(&plan, &corpora).unwrap();
        assert_eq!(merged.dataset_id, "merged");
        assert_eq!(merged.intent("clinc150.weather").unwrap().len(), 7);
        assert_eq!(merged.intent("clinc150.alarm").unwrap().len(), 2);
        let sources: BTreeSet<IntentRef> = merged
            .intent("clinc150.weather")
            .unwrap()
            .queries
            .iter()
            .map(|q| q.source.clone().unwrap())
            .collect();
        assert_eq!(sources.len(), 2);
    }

    #[test]
    fn empty_graph_passes_everything_through() {
        let corpora = vec![corpus("a", &[("x", 2), ("y", 2)])];
        let plan = plan_merge(&CollisionGraph::new(), &corpora, &PlanOptions::default()).unwrap();
        assert!(plan.groups.is_empty() && plan.drops.is_empty());
        assert_eq!(plan.passthrough.len(), 2);
    }

    #[test]
    fn hierarchical_drop_removes_broad_member() {
        let mut a = Corpus::new("a");
        for t in [
            "what is my balance",
            "check my balance",
            "transfer money to savings",
            "send money to my friend",
        ] {
            a.push("x", t, None, None);
        }
        let mut b = Corpus::new("b");
        for t in ["what is my balance", "check my balance"] {
            b.push("y", t, None, None);
        }
        let mut c = Corpus::new("c");
        for t in ["transfer money to savings", "send money to my friend"] {
            c.push("z", t, None, None);
        }
        let corpora = vec![a, b, c];
        let mut g = CollisionGraph::new();
        g.add_edge(r("a", "x"), r("b", "y"), Some(EdgeKind::Hierarchical)).unwrap();
        g.add_edge(r("a", "x"), r("c", "z"), Some(EdgeKind::Hierarchical)).unwrap();

        let opts = PlanOptions {
            drop_hierarchical: true,
            ..Default::default()
        };
        let plan = plan_merge(&g, &corpora, &opts).unwrap();
        assert_eq!(plan.drops.len(), 1);
        assert_eq!(plan.drops[0].intent, r("a", "x"));
        assert_eq!(plan.passthrough, vec![r("b", "y"), r("c", "z")]);

        let merged = apply_merge(&plan, &corpora).unwrap();
        assert!(merged.intent("a.x").is_none());
        assert_eq!(merged.query_count(), 8 - 4);

        let keep = plan_merge(&g, &corpora, &PlanOptions::default()).unwrap();
        assert_eq!(keep.groups.len(), 1);
        assert_eq!(keep.groups[0].members.len(), 3);
    }

    #[test]
    fn renames() {
        let corpora = vec![corpus("a", &[("x", 2), ("y", 2)])];
        let mut opts = PlanOptions::default();
        opts.renames.insert("a.x".into(), "greeting".into());
        let plan = plan_merge(&CollisionGraph::new(), &corpora, &opts).unwrap();
        let merged = apply_merge(&plan, &corpora).unwrap();
        assert!(merged.intent("greeting").is_some());

        opts.renames.insert("a.x".into(), "a.y".into());
        assert!(matches!(
            plan_merge(&CollisionGraph::new(), &corpora, &opts),
            Err(Error::Plan(_))
        ));
        let mut opts = PlanOptions::default();
        opts.renames.insert("nope".into(), "z".into());
        assert!(plan_merge(&CollisionGraph::new(), &corpora, &opts).is_err());
    }

    #[test]
    fn apply_checks_plan_consistency() {
        let corpora = vec![corpus("a", &[("x", 30), ("y", 30)])];
        let plan = MergePlan {
            groups: vec![MergeGroup {
                members: vec![r("a", "x"), r("a", "y")],
                merged_name: "xy".into(),
            }],
            ..Default::default()
        };
        assert_eq!(apply_merge(&plan, &corpora).unwrap().intent("xy").unwrap().len(), 60);

        let mut missing = plan.clone();
        missing.passthrough.push(r("a", "ghost"));
        assert!(apply_merge(&missing, &corpora).unwrap_err().to_string().contains("missing"));

        let mut twice = plan.clone();
        twice.passthrough.push(r("a", "x"));
        assert!(apply_merge(&twice, &corpora).is_err());

        let partial = MergePlan {
            passthrough: vec![r("a", "x")],
            ..Default::default()
        };
        assert!(apply_merge(&partial, &corpora).unwrap_err().to_string().contains("not covered"));
    }

    #[test]
    fn plan_json_round_trip_with_ref_key() {
        let plan = MergePlan {
            groups: vec![],
            drops: vec![DropEntry {
                intent: r("a", "x"),
                reason: "manual".into(),
            }],
            passthrough: vec![r("a", "y")],
            renames: BTreeMap::new(),
        };
        let json = plan.to_json_string();
        assert!(json.contains("\"ref\""));
        assert_eq!(MergePlan::from_json_str(&json).unwrap(), plan);
        let minimal = r#"{"groups":[],"drops":[{"ref":{"dataset":"a","intent":"x"},"reason":"r"}],"renames":{}}"#;
        assert_eq!(MergePlan::from_json_str(minimal).unwrap().drops.len(), 1);
    }

    #[test]
    fn test_counts() {
        assert_eq!(test_count(100, 0.85), 15);
        assert_eq!(test_count(50, 0.85), 8);
        assert_eq!(test_count(2, 0.85), 1);
        assert_eq!(test_count(3, 0.85), 1);
        assert_eq!(test_count(10, 0.5), 5);
        assert_eq!(test_count(2, 0.01), 1);
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let c = corpus("m", &[("a", 100), ("b", 50), ("c", 2)]);
        let cfg = BuildConfig::arbitrated();
        let s = split(&c, &cfg).unwrap();
        for (name, n_train, n_test) in [("a", 85, 15), ("b", 42, 8), ("c", 1, 1)] {
            let tr = s.train.intent(name).unwrap();
            let te = s.test.intent(name).unwrap();
            assert_eq!((tr.len(), te.len()), (n_train, n_test), "{name}");
            let ids: BTreeSet<&str> = tr.queries.iter().chain(&te.queries).map(|q| q.id.as_str()).collect();
            assert_eq!(ids.len(), n_train + n_test);
            assert!(te.queries.iter().all(|q| q.split == Some(Split::Test)));
        }
        assert_eq!(s, split(&c, &cfg).unwrap());
        let other = split(&c, &BuildConfig { seed: 99, ..cfg }).unwrap();
        assert_ne!(s.test, other.test);

        let one = corpus("m", &[("solo", 1)]);
        assert!(matches!(split(&one, &cfg), Err(Error::Unsplittable(_))));
    }

    #[test]
    fn arbitrated_build_filters_small_merged_intents() {
        let corpora = vec![
            corpus("a", &[("x", 30), ("small", 49), ("big", 60)]),
            corpus("b", &[("y", 25)]),
        ];
        let mut g = CollisionGraph::new();
        g.add_edge(r("a", "x"), r("b", "y"), None).unwrap();
        let s = build_arbitrated(&corpora, &g, &BuildConfig::arbitrated(), &PlanOptions::default()).unwrap();
        let names: Vec<&String> = s.train.intents.keys().collect();
        assert_eq!(names, vec!["a.big", "a.x"]);
        for name in names {
            let n = s.train.intent(name).unwrap().len() + s.test.intent(name).unwrap().len();
            assert!(n >= 50);
        }
    }

    #[test]
    fn naive_build_caps_and_is_deterministic() {
        let corpora = vec![corpus("a", &[("big", 200), ("mid", 120)]), corpus("b", &[("tiny", 10)])];
        let cfg = BuildConfig::naive();
        let s = build_naive(&corpora, &cfg).unwrap();
        let total = |n: &str| s.train.intent(n).unwrap().len() + s.test.intent(n).unwrap().len();
        assert_eq!(total("a.big"), 150);
        assert_eq!(total("a.mid"), 120);
        assert!(s.train.intent("b.tiny").is_none());
        let again = build_naive(&corpora, &cfg).unwrap();
        assert_eq!(s.to_tagged_corpus().to_jsonl_string(), again.to_tagged_corpus().to_jsonl_string());
    }

    #[test]
    fn naive_equals_arbitrated_without_edges() {
        let corpora = vec![corpus("a", &[("p", 60), ("q", 70)]), corpus("b", &[("r", 55)])];
        let cfg = BuildConfig::arbitrated();
        let arb = build_arbitrated(&corpora, &CollisionGraph::new(), &cfg, &PlanOptions::default()).unwrap();
        assert_eq!(arb, build_naive(&corpora, &cfg).unwrap());
    }

    #[test]
    fn build_config_validation() {
        assert!(BuildConfig { train_fraction: 1.0, ..BuildConfig::naive() }.validate().is_err());
        assert!(BuildConfig { cap: Some(10), ..BuildConfig::naive() }.validate().is_err());
        assert!(BuildConfig::naive().validate().is_ok());
    }

    #[test]
    fn oos_assembly() {
        let mut inscope = Corpus::new("merged");
        inscope.push("weather", "What's the weather?", None, None);
        let sources = vec![
            OosSource {
                name: "clinc".into(),
                texts: vec!["how long is winter".into(), "what s the weather".into(), "How long is winter?".into()],
            },
            OosSource {
                name: "vertanen".into(),
                texts: vec!["how long is winter".into(), "where are my glasses".into(), "  ".into()],
            },
        ];
        let oos = assemble_oos(&sources, &[&inscope]);
        let texts: Vec<&str> = oos.queries.iter().map(|q| q.text.as_str()).collect();
        assert_eq!(texts, vec!["how long is winter", "where are my glasses"]);
        assert_eq!(oos.queries[1].id, "oos/vertanen/0");
        assert_eq!(oos.sources(), vec!["clinc", "vertanen"]);
    }

    #[test]
    fn oos_file_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("aac.jsonl");
        std::fs::write(&p, "{\"text\":\"a\"}\n\n{\"text\":\"b\",\"source\":\"clinc\"}\n{\"text\":\"c\"}\n").unwrap();
        let s = load_oos(&p).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].name, "aac");
        assert_eq!(s[0].texts, vec!["a", "c"]);
        std::fs::write(&p, "{\"txt\":\"a\"}\n").unwrap();
        assert!(load_oos(&p).is_err());
    }
}
