//! The collision meta-dataset: an undirected graph over `(dataset, intent)`
//! nodes whose edges mark colliding intents.
//!
//! On disk the graph is a JSON array of
//! `{"dataset", "intent", "collisions": [{"dataset", "intent", "kind"?}]}`
//! entries. Loading takes the symmetric closure, so one-sided annotations
//! still produce an edge; saving lists every neighbor on both endpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{find_intent, Corpus, IntentRef};
use crate::coverage::coverage;
use crate::error::{Error, Result};
use crate::similarity::SimilarityKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    SimplePairwise,
    Transitive,
    Hierarchical,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CollisionEdge {
    /// The lexicographically smaller endpoint.
    pub a: IntentRef,
    pub b: IntentRef,
    pub kind: Option<EdgeKind>,
}

impl CollisionEdge {
    pub fn new(x: IntentRef, y: IntentRef, kind: Option<EdgeKind>) -> Result<Self> {
        if x == y {
            return Err(Error::Graph(format!("self-loop on {x}")));
        }
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        Ok(Self { a, b, kind })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CollisionGraph {
    adjacency: BTreeMap<IntentRef, BTreeSet<IntentRef>>,
    edges: BTreeMap<(IntentRef, IntentRef), Option<EdgeKind>>,
}

fn check_ref(r: &IntentRef) -> Result<()> {
    if r.dataset.is_empty() || r.intent.is_empty() {
        return Err(Error::Graph(format!(
            "malformed intent reference `{}`/`{}`",
            r.dataset, r.intent
        )));
    }
    Ok(())
}

impl CollisionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, r: IntentRef) -> Result<()> {
        check_ref(&r)?;
        self.adjacency.entry(r).or_default();
        Ok(())
    }

    /// Adds an undirected edge. Re-adding an existing edge is a no-op unless
    /// it supplies a kind for an edge that had none; conflicting kinds are an
    /// error.
    pub fn add_edge(&mut self, x: IntentRef, y: IntentRef, kind: Option<EdgeKind>) -> Result<()> {
        check_ref(&x)?;
        check_ref(&y)?;
        let edge = CollisionEdge::new(x, y, kind)?;
        self.adjacency
            .entry(edge.a.clone())
            .or_default()
            .insert(edge.b.clone());
        self.adjacency
            .entry(edge.b.clone())
            .or_default()
            .insert(edge.a.clone());
        let slot = self.edges.entry((edge.a.clone(), edge.b.clone())).or_insert(None);
        match (*slot, kind) {
            (Some(old), Some(new)) if old != new => Err(Error::Graph(format!(
                "conflicting kinds for edge {} -- {}",
                edge.a, edge.b
            ))),
            (None, Some(new)) => {
                *slot = Some(new);
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn set_kind(&mut self, x: &IntentRef, y: &IntentRef, kind: Option<EdgeKind>) -> bool {
        let key = if x < y {
            (x.clone(), y.clone())
        } else {
            (y.clone(), x.clone())
        };
        match self.edges.get_mut(&key) {
            Some(slot) => {
                *slot = kind;
                true
            }
            None => false,
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &IntentRef> {
        self.adjacency.keys()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn contains(&self, r: &IntentRef) -> bool {
        self.adjacency.contains_key(r)
    }

    pub fn edges(&self) -> impl Iterator<Item = CollisionEdge> + '_ {
        self.edges.iter().map(|((a, b), kind)| CollisionEdge {
            a: a.clone(),
            b: b.clone(),
            kind: *kind,
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, x: &IntentRef, y: &IntentRef) -> bool {
        self.adjacency.get(x).is_some_and(|n| n.contains(y))
    }

    pub fn neighbors(&self, r: &IntentRef) -> impl Iterator<Item = &IntentRef> {
        self.adjacency.get(r).into_iter().flatten()
    }

    /// Number of neighbors; 0 for unknown nodes.
    pub fn degree(&self, r: &IntentRef) -> usize {
        self.adjacency.get(r).map_or(0, BTreeSet::len)
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let entries: Vec<MetaEntry> = serde_json::from_str(json)?;
        let mut graph = CollisionGraph::new();
        for entry in entries {
            let node = IntentRef::new(entry.dataset, entry.intent);
            graph.add_node(node.clone())?;
            for nb in entry.collisions {
                graph.add_edge(node.clone(), IntentRef::new(nb.dataset, nb.intent), nb.kind)?;
            }
        }
        Ok(graph)
    }

    /// Canonical form: nodes sorted, each listing all of its neighbors in
    /// sorted order, pretty-printed with a trailing newline.
    pub fn to_json_string(&self) -> String {
        let entries: Vec<MetaEntry> = self
            .adjacency
            .iter()
            .map(|(node, nbs)| MetaEntry {
                dataset: node.dataset.clone(),
                intent: node.intent.clone(),
                collisions: nbs
                    .iter()
                    .map(|nb| {
                        let key = if node < nb {
                            (node.clone(), nb.clone())
                        } else {
                            (nb.clone(), node.clone())
                        };
                        MetaNeighbor {
                            dataset: nb.dataset.clone(),
                            intent: nb.intent.clone(),
                            kind: self.edges[&key],
                        }
                    })
                    .collect(),
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&entries).expect("graph serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaEntry {
    dataset: String,
    intent: String,
    #[serde(default)]
    collisions: Vec<MetaNeighbor>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaNeighbor {
    dataset: String,
    intent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<EdgeKind>,
}

pub fn load_meta(path: &Path) -> Result<CollisionGraph> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut json = String::new();
    std::io::Read::read_to_string(&mut BufReader::new(f), &mut json).map_err(|e| Error::io(path, e))?;
    CollisionGraph::from_json_str(&json).map_err(|e| match e {
        Error::Json(j) => Error::Parse {
            path: path.to_path_buf(),
            line: j.line(),
            message: j.to_string(),
        },
        other => other,
    })
}

pub fn save_meta(graph: &CollisionGraph, path: &Path) -> Result<()> {
    std::fs::write(path, graph.to_json_string()).map_err(|e| Error::io(path, e))
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Partition of the nodes by undirected reachability. Members are sorted,
/// and groups are ordered by their smallest member. Isolated nodes form
/// singleton groups.
pub fn connected_components(graph: &CollisionGraph) -> Vec<Vec<IntentRef>> {
    let nodes: Vec<&IntentRef> = graph.nodes().collect();
    let index: BTreeMap<&IntentRef, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut uf = UnionFind::new(nodes.len());
    for (a, b) in graph.edges.keys() {
        uf.union(index[a], index[b]);
    }
    let mut groups: BTreeMap<usize, Vec<IntentRef>> = BTreeMap::new();
    // nodes are visited in sorted order, so each group is already sorted
    for (i, n) in nodes.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push((*n).clone());
    }
    let mut out: Vec<Vec<IntentRef>> = groups.into_values().collect();
    out.sort_by(|x, y| x[0].cmp(&y[0]));
    out
}

const HIERARCHY_EPS: f64 = 1e-9;

/// Heuristic edge classification.
///
/// `cov_ab` is the coverage of `edge.a` over `edge.b`. A coverage ratio above
/// `rho` marks a hierarchical edge; otherwise the edge is simple-pairwise
/// when both endpoints have degree 1, and transitive when either has more.
pub fn classify_edge(
    graph: &CollisionGraph,
    edge: &CollisionEdge,
    cov_ab: f64,
    cov_ba: f64,
    rho: f64,
) -> Result<EdgeKind> {
    if !(rho > 1.0) {
        return Err(Error::Config(format!("rho must exceed 1, got {rho}")));
    }
    let hi = cov_ab.max(cov_ba);
    let lo = cov_ab.min(cov_ba);
    if hi / lo.max(HIERARCHY_EPS) > rho {
        return Ok(EdgeKind::Hierarchical);
    }
    if graph.degree(&edge.a) == 1 && graph.degree(&edge.b) == 1 {
        Ok(EdgeKind::SimplePairwise)
    } else {
        Ok(EdgeKind::Transitive)
    }
}

/// The broader endpoint: the one whose queries cover the other's better.
/// `None` on an exact tie.
pub fn broader_endpoint(edge: &CollisionEdge, cov_ab: f64, cov_ba: f64) -> Option<&IntentRef> {
    if cov_ab > cov_ba {
        Some(&edge.a)
    } else if cov_ba > cov_ab {
        Some(&edge.b)
    } else {
        None
    }
}

/// Fills in missing edge kinds with [`classify_edge`], computing coverage in
/// both directions from the corpora. Edges with an endpoint missing from the
/// corpora are left unlabelled.
pub fn annotate_kinds(
    graph: &CollisionGraph,
    corpora: &[Corpus],
    kind: &SimilarityKind<'_>,
    rho: f64,
) -> Result<CollisionGraph> {
    let mut out = graph.clone();
    for edge in graph.edges().filter(|e| e.kind.is_none()) {
        let (Some(a), Some(b)) = (find_intent(corpora, &edge.a), find_intent(corpora, &edge.b)) else {
            continue;
        };
        let cov_ab = coverage(a, b, kind)?;
        let cov_ba = coverage(b, a, kind)?;
        let k = classify_edge(graph, &edge, cov_ab, cov_ba, rho)?;
        out.set_kind(&edge.a, &edge.b, Some(k));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Graph nodes with no matching corpus intent.
    pub unresolved: Vec<IntentRef>,
    /// Corpus intents with no collision edge.
    pub no_collision: Vec<IntentRef>,
}

pub fn validate_against_corpora(graph: &CollisionGraph, corpora: &[Corpus]) -> ValidationReport {
    let unresolved = graph
        .nodes()
        .filter(|n| find_intent(corpora, n).is_none())
        .cloned()
        .collect();
    let mut no_collision: Vec<IntentRef> = corpora
        .iter()
        .flat_map(|c| c.intents.values().map(|i| i.intent_ref()))
        .filter(|r| graph.degree(r) == 0)
        .collect();
    no_collision.sort();
    ValidationReport {
        unresolved,
        no_collision,
    }
}
