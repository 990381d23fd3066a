//! Context-dependent similarity between entities.
//!
//! Similarities are computed on sparse *profiles*: an entity's positive
//! weights restricted to a feature set, as `(feature index, weight)` pairs in
//! ascending feature order. Summing in that order makes the sparse kernels
//! agree bit-for-bit with a dense loop over the same features.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::{ContextFeature, EntityId};
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;

/// An ordered set of distinct context features.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSet(Vec<ContextFeature>);

impl FeatureSet {
    /// Keeps the first occurrence of each feature.
    pub fn new<I: IntoIterator<Item = ContextFeature>>(features: I) -> Self {
        let mut out: Vec<ContextFeature> = Vec::new();
        for f in features {
            if !out.contains(&f) {
                out.push(f);
            }
        }
        FeatureSet(out)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ContextFeature> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[ContextFeature] {
        &self.0
    }

    pub fn contains(&self, feature: &ContextFeature) -> bool {
        self.0.contains(feature)
    }

    /// Graph indices of the features, ascending. Features the graph does not
    /// know carry zero weight everywhere and are dropped.
    pub fn resolve(&self, graph: &BipartiteGraph) -> Vec<u32> {
        let mut idx: Vec<u32> = self
            .0
            .iter()
            .filter_map(|f| graph.feature_index(f))
            .collect();
        idx.sort_unstable();
        idx
    }
}

impl FromIterator<ContextFeature> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = ContextFeature>>(iter: I) -> Self {
        FeatureSet::new(iter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityScore {
    pub entity: EntityId,
    pub value: f64,
}

/// A similarity over sparse profiles (see module docs).
pub trait SimilarityMetric: Send + Sync {
    fn compare(&self, a: &[(u32, f64)], b: &[(u32, f64)]) -> f64;
}

/// `sum min(f_a, f_b) / sum max(f_a, f_b)`, with 0/0 taken as 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct WeightedJaccard;

impl SimilarityMetric for WeightedJaccard {
    fn compare(&self, a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (mut num, mut den) = (0.0f64, 0.0f64);
        while i < a.len() || j < b.len() {
            let order = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => x.0.cmp(&y.0),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match order {
                Ordering::Less => {
                    den += a[i].1;
                    i += 1;
                }
                Ordering::Greater => {
                    den += b[j].1;
                    j += 1;
                }
                Ordering::Equal => {
                    num += a[i].1.min(b[j].1);
                    den += a[i].1.max(b[j].1);
                    i += 1;
                    j += 1;
                }
            }
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

/// Positive weights of `entity` on `features` (ascending indices).
pub fn profile(graph: &BipartiteGraph, entity: u32, features: &[u32]) -> Vec<(u32, f64)> {
    let row = graph.row(entity);
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < row.features.len() && j < features.len() {
        match row.features[i].cmp(&features[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                if row.weights[i] > 0.0 {
                    out.push((features[j], row.weights[i]));
                }
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn entity_profile(graph: &BipartiteGraph, entity: &EntityId, features: &[u32]) -> Vec<(u32, f64)> {
    graph
        .entity_index(entity)
        .map(|e| profile(graph, e, features))
        .unwrap_or_default()
}

/// Weighted Jaccard similarity of two entities restricted to `features`.
pub fn context_sim(
    graph: &BipartiteGraph,
    a: &EntityId,
    b: &EntityId,
    features: &FeatureSet,
) -> Result<f64> {
    context_sim_with(&WeightedJaccard, graph, a, b, features)
}

pub fn context_sim_with<M: SimilarityMetric + ?Sized>(
    metric: &M,
    graph: &BipartiteGraph,
    a: &EntityId,
    b: &EntityId,
    features: &FeatureSet,
) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    let idx = features.resolve(graph);
    Ok(metric.compare(
        &entity_profile(graph, a, &idx),
        &entity_profile(graph, b, &idx),
    ))
}

/// Mean similarity of `entity` to every member of `members`.
pub fn entity_score(
    graph: &BipartiteGraph,
    entity: &EntityId,
    members: &[EntityId],
    features: &FeatureSet,
) -> Result<EntityScore> {
    if members.is_empty() {
        return Err(Error::EmptyExpandedSet);
    }
    if features.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    let idx = features.resolve(graph);
    let own = entity_profile(graph, entity, &idx);
    let member_profiles: Vec<_> = members
        .iter()
        .map(|m| entity_profile(graph, m, &idx))
        .collect();
    Ok(EntityScore {
        entity: entity.clone(),
        value: mean_similarity(&WeightedJaccard, &own, &member_profiles),
    })
}

fn mean_similarity<M: SimilarityMetric + ?Sized>(
    metric: &M,
    candidate: &[(u32, f64)],
    members: &[Vec<(u32, f64)>],
) -> f64 {
    let total: f64 = members.iter().map(|m| metric.compare(candidate, m)).sum();
    total / members.len() as f64
}

/// Mean similarity to `members` for every entity with a positive weight on
/// at least one of `features` (ascending indices). Returned in entity order;
/// members themselves are included.
///
/// Entities outside that set have an empty profile and score 0 under any
/// metric that maps empty-vs-anything to 0, as weighted Jaccard does.
pub fn score_candidates<M: SimilarityMetric + ?Sized>(
    metric: &M,
    graph: &BipartiteGraph,
    members: &[u32],
    features: &[u32],
) -> Vec<(u32, f64)> {
    if members.is_empty() {
        return Vec::new();
    }
    let member_profiles: Vec<_> = members
        .iter()
        .map(|&m| profile(graph, m, features))
        .collect();

    let mut triples: Vec<(u32, u32, f64)> = Vec::new();
    for &c in features {
        let (ents, weights) = graph.column(c);
        for (&e, &w) in ents.iter().zip(weights) {
            if w > 0.0 {
                triples.push((e, c, w));
            }
        }
    }
    // stable: features stay ascending within an entity
    triples.sort_by_key(|t| t.0);

    let mut out = Vec::new();
    let mut buf: Vec<(u32, f64)> = Vec::new();
    for group in triples.chunk_by(|x, y| x.0 == y.0) {
        buf.clear();
        buf.extend(group.iter().map(|&(_, c, w)| (c, w)));
        out.push((group[0].0, mean_similarity(metric, &buf, &member_profiles)));
    }
    out
}
