//! Fixtures and independent oracles shared by the integration tests.
//!
//! The oracles here work on dense matrices and plain loops and never call
//! into the library's scoring code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use setexpan::{BipartiteGraph, ContextFeature, EntityId};

pub fn ent(s: &str) -> EntityId {
    EntityId::new(s).unwrap()
}

/// Skip-gram from its display form, e.g. `"city , __ , USA"`.
pub fn sg(text: &str) -> ContextFeature {
    let toks: Vec<&str> = text.split(' ').collect();
    let hole = toks.iter().position(|t| *t == "__").unwrap();
    ContextFeature::skipgram(&toks[..hole], &toks[hole + 1..]).unwrap()
}

pub fn ty(name: &str) -> ContextFeature {
    ContextFeature::coarse_type(name).unwrap()
}

pub const CITY: &str = "city , __ , USA";
pub const STATE: &str = "US state of __ .";

/// The six features of the simplified bipartite graph: one type feature and
/// five skip-grams, the last two being [`CITY`] and [`STATE`].
pub fn states_features() -> Vec<ContextFeature> {
    vec![
        ty("LOCATION"),
        sg("located in __ ,"),
        sg("the capital of __ is"),
        sg("pay __ sales tax ."),
        sg(CITY),
        sg(STATE),
    ]
}

/// Unit-weight graph: Florida on all six features, Ontario on the type
/// feature plus three skip-grams, Texas on the two shared skip-grams.
pub fn states_graph() -> BipartiteGraph {
    let f = states_features();
    let mut edges = Vec::new();
    for c in &f {
        edges.push((ent("Florida"), c.clone(), 1, 1.0));
    }
    for i in [0, 1, 4, 5] {
        edges.push((ent("Ontario"), f[i].clone(), 1, 1.0));
    }
    for i in [4, 5] {
        edges.push((ent("Texas"), f[i].clone(), 1, 1.0));
    }
    BipartiteGraph::from_weighted_edges(edges).unwrap()
}

pub const STATE_COMMA: &str = "US state of __ ,";
pub const PAY: &str = "pay __ sales tax .";

/// Graph for the rank-ensemble walkthrough: the expanded set {Florida, Texas}
/// covers all four selected features; California, Arizona and Quebec cover
/// three, two and one of the first subset's features.
pub fn ensemble_graph() -> BipartiteGraph {
    let feats = [
        sg(CITY),
        sg(STATE_COMMA),
        sg(PAY),
        sg("governor of __ said"),
    ];
    let mut edges = Vec::new();
    for m in ["Florida", "Texas"] {
        for c in &feats {
            edges.push((ent(m), c.clone(), 1, 1.0));
        }
    }
    for (e, idx) in [
        ("California", &[0usize, 1, 2][..]),
        ("Arizona", &[1, 2][..]),
        ("Quebec", &[0][..]),
        ("Ontario", &[3][..]),
    ] {
        for &i in idx {
            edges.push((ent(e), feats[i].clone(), 1, 1.0));
        }
    }
    BipartiteGraph::from_weighted_edges(edges).unwrap()
}

/// Dense weight matrix view: entity-major, features in graph index order.
pub struct Dense {
    pub entities: Vec<EntityId>,
    pub features: Vec<ContextFeature>,
    pub w: Vec<Vec<f64>>,
}

impl Dense {
    pub fn from_graph(g: &BipartiteGraph) -> Self {
        let entities = g.entities().to_vec();
        let features = g.features().to_vec();
        let mut w = vec![vec![0.0; features.len()]; entities.len()];
        for (e, c, _, weight) in g.edges() {
            let i = entities.iter().position(|x| x == e).unwrap();
            let j = features.iter().position(|x| x == c).unwrap();
            w[i][j] = weight;
        }
        Dense {
            entities,
            features,
            w,
        }
    }

    pub fn idx(&self, e: &EntityId) -> usize {
        self.entities.iter().position(|x| x == e).unwrap()
    }

    pub fn cols(&self, fs: &[ContextFeature]) -> Vec<usize> {
        fs.iter()
            .filter_map(|f| self.features.iter().position(|x| x == f))
            .collect()
    }

    /// Weighted Jaccard straight from the definition.
    pub fn sim(&self, a: usize, b: usize, cols: &[usize]) -> f64 {
        let num: f64 = cols.iter().map(|&c| self.w[a][c].min(self.w[b][c])).sum();
        let den: f64 = cols.iter().map(|&c| self.w[a][c].max(self.w[b][c])).sum();
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    pub fn score(&self, e: usize, members: &[usize], cols: &[usize]) -> f64 {
        members.iter().map(|&m| self.sim(e, m, cols)).sum::<f64>() / members.len() as f64
    }

    /// All features with positive summed weight over `members`, fully sorted
    /// by score descending then key ascending, truncated to `q`.
    pub fn select(&self, members: &[usize], q: usize) -> Vec<ContextFeature> {
        let mut scored: Vec<(f64, &ContextFeature)> = (0..self.features.len())
            .map(|c| {
                (
                    members.iter().map(|&m| self.w[m][c]).sum::<f64>(),
                    &self.features[c],
                )
            })
            .filter(|(s, _)| *s > 0.0)
            .collect();
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.key().cmp(b.1.key()))
        });
        scored.into_iter().take(q).map(|(_, f)| f.clone()).collect()
    }
}

/// Rank of each score by the indicator sum over all scores.
pub fn indicator_rank_oracle(scores: &[f64]) -> Vec<usize> {
    scores
        .iter()
        .map(|&s| scores.iter().filter(|&&o| s <= o).count())
        .collect()
}

pub fn tfidf_oracle(x: u64, n: u64, col: u64) -> f64 {
    (1.0 + x as f64).ln() * ((n as f64).ln() - (col as f64).ln()).max(0.0)
}

/// Random graph with up to `max_e` entities and `max_f` features; weights
/// are drawn from a handful of levels so that ties and zeros occur.
pub fn random_graph(rng: &mut ChaCha8Rng, max_e: usize, max_f: usize) -> BipartiteGraph {
    loop {
        let n_e = rng.gen_range(2..=max_e);
        let n_f = rng.gen_range(1..=max_f);
        let density = rng.gen_range(0.2..0.9);
        let mut edges = Vec::new();
        for e in 0..n_e {
            for f in 0..n_f {
                if rng.gen_bool(density) {
                    let weight = match rng.gen_range(0..4) {
                        0 => 0.0,
                        1 => 1.0,
                        _ => rng.gen_range(0.01..5.0),
                    };
                    edges.push((
                        ent(&format!("e{e}")),
                        ContextFeature::skipgram(&[format!("w{f}")], &["x"]).unwrap(),
                        rng.gen_range(1..6u64),
                        weight,
                    ));
                }
            }
        }
        if !edges.is_empty() {
            return BipartiteGraph::from_weighted_edges(edges).unwrap();
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hand-tabulated counts for `tests/data/toy_corpus.jsonl`.
///
/// "solo" is the six padded skip-grams of a one-token sentence and "visit"
/// those of `visit <entity>`.
pub fn toy_expected_counts() -> BTreeMap<(String, String), u64> {
    let solo = [
        "⟨S⟩ __ ⟨/S⟩",
        "⟨S⟩ __ ⟨/S⟩ ⟨/S⟩",
        "⟨S⟩ ⟨S⟩ __ ⟨/S⟩",
        "⟨S⟩ ⟨S⟩ __ ⟨/S⟩ ⟨/S⟩",
        "⟨S⟩ __ ⟨/S⟩ ⟨/S⟩ ⟨/S⟩",
        "⟨S⟩ ⟨S⟩ ⟨S⟩ __ ⟨/S⟩",
    ];
    let visit = [
        "visit __ ⟨/S⟩",
        "visit __ ⟨/S⟩ ⟨/S⟩",
        "⟨S⟩ visit __ ⟨/S⟩",
        "⟨S⟩ visit __ ⟨/S⟩ ⟨/S⟩",
        "visit __ ⟨/S⟩ ⟨/S⟩ ⟨/S⟩",
        "⟨S⟩ ⟨S⟩ visit __ ⟨/S⟩",
    ];
    // entity, solo count, visit count, type, type count
    let table = [
        ("paris", 2, 1, "LOC", 3),
        ("rome", 1, 2, "LOC", 3),
        ("alice", 3, 0, "PER", 3),
        ("bob", 0, 1, "PER", 1),
        ("oslo", 1, 1, "LOC", 2),
    ];
    let mut out = BTreeMap::new();
    for (e, n_solo, n_visit, t, n_t) in table {
        for (frame, n) in [(&solo, n_solo), (&visit, n_visit)] {
            if n > 0 {
                for f in frame.iter() {
                    out.insert((e.to_string(), sg(f).key().to_string()), n);
                }
            }
        }
        out.insert((e.to_string(), ty(t).key().to_string()), n_t);
    }
    out
}

pub fn toy_corpus_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy_corpus.jsonl")
}
