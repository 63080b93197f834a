//! Synthetic template corpora shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use intent_collide::Corpus;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Carrier phrases shared by every topic.
pub const CARRIERS: &[&str] = &[
    "can you",
    "please",
    "i want to",
    "how do i",
    "tell me",
    "i need to",
    "could you",
    "help me",
    "what about",
    "show me",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn topic_words(topic: usize) -> Vec<String> {
    (0..8).map(|k| format!("t{topic}w{k}")).collect()
}

/// A carrier phrase followed by two to four content words of the topic.
pub fn topic_query(rng: &mut ChaCha8Rng, topic: usize) -> String {
    let words = topic_words(topic);
    let carrier = CARRIERS.choose(rng).unwrap();
    let n = rng.gen_range(2..=4);
    let content: Vec<&str> = (0..n).map(|_| words.choose(rng).unwrap().as_str()).collect();
    format!("{carrier} {}", content.join(" "))
}

/// `n` distinct queries drawn from one topic.
pub fn topic_queries(rng: &mut ChaCha8Rng, topic: usize, n: usize) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let q = topic_query(rng, topic);
        if seen.insert(q.clone()) {
            out.push(q);
        }
    }
    out
}

pub fn topic_corpus(dataset: &str, intents: &[(&str, usize, usize)], seed: u64) -> Corpus {
    let mut r = rng(seed);
    let mut c = Corpus::new(dataset);
    for &(name, topic, n) in intents {
        for q in topic_queries(&mut r, topic, n) {
            c.push(name, q, None, None);
        }
    }
    c
}

/// Fraction of the smaller intent's token types that also occur in the other.
pub fn token_overlap(a: &intent_collide::Intent, b: &intent_collide::Intent) -> f64 {
    let types = |i: &intent_collide::Intent| -> BTreeSet<String> {
        i.queries
            .iter()
            .flat_map(|q| q.norm_text.split(' ').map(str::to_string))
            .collect()
    };
    let (ta, tb) = (types(a), types(b));
    let shared = ta.intersection(&tb).count();
    shared as f64 / ta.len().min(tb.len()) as f64
}

/// Three datasets over shared carriers: `x` has intents on topics
/// 0..n, `y` repeats the same topics with fresh draws (one collision per
/// topic), and `z` uses topics n..2n that no other dataset touches.
pub fn separability_fixture(n: usize, per_intent: usize, seed: u64) -> Vec<Corpus> {
    let names: Vec<String> = (0..n).map(|i| format!("intent{i:02}")).collect();
    let spec = |offset: usize| -> Vec<(&str, usize, usize)> {
        names
            .iter()
            .enumerate()
            .map(|(i, name)| (name.as_str(), i + offset, per_intent))
            .collect()
    };
    vec![
        topic_corpus("x", &spec(0), seed),
        topic_corpus("y", &spec(0), seed + 1),
        topic_corpus("z", &spec(n), seed + 2),
    ]
}

pub fn write_jsonl(path: &std::path::Path, corpus: &Corpus) {
    std::fs::write(path, corpus.to_jsonl_string()).unwrap();
}
