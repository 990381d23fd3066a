//! The weighted bipartite entity–context graph.
//!
//! Edges are stored twice in CSR form: rows by entity and columns by feature.
//! Entities and features are indexed in ascending key order, so index order
//! and key order agree everywhere.

use std::collections::HashMap;

use crate::corpus::{ContextFeature, EntityId, FeatureKind, MentionRecord};
use crate::error::{Error, Result};

/// Default frequency cutoff for candidate entities.
pub const DEFAULT_MIN_COUNT: u64 = 3;

/// TF-IDF edge weight `log(1 + X_ec) * max(0, log|E| - log(sum_e' X_e'c))`.
///
/// Natural log. The IDF bracket is clamped at zero, so features occurring
/// more often than there are candidate entities carry no weight.
pub fn tfidf_weight(count: u64, total_entities: u64, column_sum: u64) -> Result<f64> {
    if column_sum < count {
        return Err(Error::InconsistentCounts { count, column_sum });
    }
    if count == 0 {
        return Ok(0.0);
    }
    if total_entities == 0 {
        return Err(Error::InvalidEdge("no candidate entities".into()));
    }
    let tf = (count as f64).ln_1p();
    let idf = (total_entities as f64).ln() - (column_sum as f64).ln();
    Ok(if idf > 0.0 { tf * idf } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityStats {
    pub entity: EntityId,
    pub mention_count: u64,
    /// Type feature with the highest raw count (ties to the smaller key).
    pub dominant_type: Option<ContextFeature>,
}

/// One entity's outgoing edges, sorted by feature index.
#[derive(Debug, Clone, Copy)]
pub struct EdgeRow<'a> {
    pub features: &'a [u32],
    pub counts: &'a [u64],
    pub weights: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    min_count: u64,
    entities: Vec<EntityId>,
    mention_counts: Vec<u64>,
    dominant_types: Vec<Option<u32>>,
    features: Vec<ContextFeature>,
    entity_lookup: HashMap<EntityId, u32>,
    feature_lookup: HashMap<ContextFeature, u32>,

    row_offsets: Vec<usize>,
    row_features: Vec<u32>,
    row_counts: Vec<u64>,
    row_weights: Vec<f64>,

    col_offsets: Vec<usize>,
    col_entities: Vec<u32>,
    col_weights: Vec<f64>,
}

/// Counts mention/feature co-occurrences and builds the weighted graph.
///
/// Entities with fewer than `min_count` mentions are dropped with their
/// edges before weighting; features left without edges disappear too.
pub fn build_graph<I>(records: I, min_count: u64) -> Result<BipartiteGraph>
where
    I: IntoIterator<Item = MentionRecord>,
{
    if min_count == 0 {
        return Err(Error::InvalidConfig("min_count must be at least 1".into()));
    }
    let mut entity_ids: HashMap<EntityId, u32> = HashMap::new();
    let mut feature_ids: HashMap<ContextFeature, u32> = HashMap::new();
    let mut mentions: Vec<u64> = Vec::new();
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();

    for record in records {
        let next = entity_ids.len() as u32;
        let e = *entity_ids.entry(record.entity).or_insert(next);
        if e as usize == mentions.len() {
            mentions.push(0);
        }
        mentions[e as usize] += 1;
        let mut seen: Vec<u32> = Vec::with_capacity(record.features.len());
        for feature in record.features {
            let next = feature_ids.len() as u32;
            let c = *feature_ids.entry(feature).or_insert(next);
            if !seen.contains(&c) {
                seen.push(c);
                *counts.entry((e, c)).or_insert(0) += 1;
            }
        }
    }

    let mut kept: Vec<(EntityId, u32)> = entity_ids
        .into_iter()
        .filter(|&(_, e)| mentions[e as usize] >= min_count)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyGraph { min_count });
    }
    kept.sort_unstable();
    let mut entity_remap = vec![u32::MAX; mentions.len()];
    for (new, (_, old)) in kept.iter().enumerate() {
        entity_remap[*old as usize] = new as u32;
    }

    let mut live_features = vec![false; feature_ids.len()];
    let mut edges: Vec<(u32, u32, u64)> = Vec::new();
    for (&(e, c), &n) in &counts {
        let new_e = entity_remap[e as usize];
        if new_e != u32::MAX {
            live_features[c as usize] = true;
            edges.push((new_e, c, n));
        }
    }
    let mut features: Vec<(ContextFeature, u32)> = feature_ids
        .into_iter()
        .filter(|&(_, c)| live_features[c as usize])
        .collect();
    features.sort_unstable();
    let mut feature_remap = vec![u32::MAX; live_features.len()];
    for (new, (_, old)) in features.iter().enumerate() {
        feature_remap[*old as usize] = new as u32;
    }

    let total_entities = kept.len() as u64;
    let mut column_sums = vec![0u64; features.len()];
    for edge in &mut edges {
        edge.1 = feature_remap[edge.1 as usize];
        column_sums[edge.1 as usize] += edge.2;
    }
    let weighted = edges
        .into_iter()
        .map(|(e, c, n)| {
            Ok((
                e,
                c,
                n,
                tfidf_weight(n, total_entities, column_sums[c as usize])?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let entity_mentions = kept
        .iter()
        .map(|(_, old)| mentions[*old as usize])
        .collect();
    Ok(BipartiteGraph::assemble(
        min_count,
        kept.into_iter().map(|(id, _)| id).collect(),
        entity_mentions,
        features.into_iter().map(|(f, _)| f).collect(),
        weighted,
    ))
}

impl BipartiteGraph {
    /// Builds a graph from explicit `(entity, feature, raw count, weight)` edges.
    ///
    /// Meant for fixtures and alternative weightings. An entity's mention
    /// count is taken as the largest raw count on its edges.
    pub fn from_weighted_edges<I>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (EntityId, ContextFeature, u64, f64)>,
    {
        let edges: Vec<_> = edges.into_iter().collect();
        if edges.is_empty() {
            return Err(Error::EmptyGraph { min_count: 1 });
        }
        let mut entities: Vec<EntityId> = edges.iter().map(|e| e.0.clone()).collect();
        entities.sort_unstable();
        entities.dedup();
        let mut features: Vec<ContextFeature> = edges.iter().map(|e| e.1.clone()).collect();
        features.sort_unstable();
        features.dedup();
        let mut mention_counts = vec![0u64; entities.len()];
        let mut indexed = Vec::with_capacity(edges.len());
        for (entity, feature, count, weight) in edges {
            if count == 0 {
                return Err(Error::InvalidEdge(format!(
                    "{entity} / {feature}: zero count"
                )));
            }
            if !(weight.is_finite() && weight >= 0.0) {
                return Err(Error::InvalidEdge(format!(
                    "{entity} / {feature}: weight {weight}"
                )));
            }
            let e = entities.binary_search(&entity).unwrap() as u32;
            let c = features.binary_search(&feature).unwrap() as u32;
            mention_counts[e as usize] = mention_counts[e as usize].max(count);
            indexed.push((e, c, count, weight));
        }
        indexed.sort_unstable_by_key(|&(e, c, _, _)| (e, c));
        if let Some(w) = indexed
            .windows(2)
            .find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(Error::InvalidEdge(format!(
                "duplicate edge {} / {}",
                entities[w[0].0 as usize], features[w[0].1 as usize]
            )));
        }
        Ok(Self::assemble(
            1,
            entities,
            mention_counts,
            features,
            indexed,
        ))
    }

    /// `entities` and `features` must be sorted and distinct; edges index into them.
    pub(crate) fn assemble(
        min_count: u64,
        entities: Vec<EntityId>,
        mention_counts: Vec<u64>,
        features: Vec<ContextFeature>,
        mut edges: Vec<(u32, u32, u64, f64)>,
    ) -> Self {
        let n_e = entities.len();
        let n_f = features.len();
        edges.sort_unstable_by_key(|&(e, c, _, _)| (e, c));

        let mut row_offsets = vec![0usize; n_e + 1];
        for &(e, ..) in &edges {
            row_offsets[e as usize + 1] += 1;
        }
        for i in 0..n_e {
            row_offsets[i + 1] += row_offsets[i];
        }
        let row_features = edges.iter().map(|e| e.1).collect();
        let row_counts = edges.iter().map(|e| e.2).collect();
        let row_weights: Vec<f64> = edges.iter().map(|e| e.3).collect();

        let mut col_offsets = vec![0usize; n_f + 1];
        for &(_, c, ..) in &edges {
            col_offsets[c as usize + 1] += 1;
        }
        for i in 0..n_f {
            col_offsets[i + 1] += col_offsets[i];
        }
        let mut cursor = col_offsets.clone();
        let mut col_entities = vec![0u32; edges.len()];
        let mut col_weights = vec![0f64; edges.len()];
        // Rows are visited in entity order, so each column comes out sorted.
        for &(e, c, _, w) in &edges {
            let slot = &mut cursor[c as usize];
            col_entities[*slot] = e;
            col_weights[*slot] = w;
            *slot += 1;
        }

        let mut dominant_types = vec![None; n_e];
        for (e, slot) in dominant_types.iter_mut().enumerate() {
            let mut best: Option<(u64, u32)> = None;
            for &(_, c, n, _) in &edges[row_offsets[e]..row_offsets[e + 1]] {
                if features[c as usize].kind() == FeatureKind::Type
                    && best.is_none_or(|(bn, _)| n > bn)
                {
                    best = Some((n, c));
                }
            }
            *slot = best.map(|(_, c)| c);
        }

        let entity_lookup = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i as u32))
            .collect();
        let feature_lookup = features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i as u32))
            .collect();

        BipartiteGraph {
            min_count,
            entities,
            mention_counts,
            dominant_types,
            features,
            entity_lookup,
            feature_lookup,
            row_offsets,
            row_features,
            row_counts,
            row_weights,
            col_offsets,
            col_entities,
            col_weights,
        }
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn num_edges(&self) -> usize {
        self.row_features.len()
    }

    /// Candidate entities in key order.
    pub fn entities(&self) -> &[EntityId] {
        &self.entities
    }

    /// Features in key order.
    pub fn features(&self) -> &[ContextFeature] {
        &self.features
    }

    pub fn entity_index(&self, entity: &EntityId) -> Option<u32> {
        self.entity_lookup.get(entity).copied()
    }

    pub fn feature_index(&self, feature: &ContextFeature) -> Option<u32> {
        self.feature_lookup.get(feature).copied()
    }

    pub fn entity(&self, index: u32) -> &EntityId {
        &self.entities[index as usize]
    }

    pub fn feature(&self, index: u32) -> &ContextFeature {
        &self.features[index as usize]
    }

    pub fn row(&self, entity: u32) -> EdgeRow<'_> {
        let span = self.row_offsets[entity as usize]..self.row_offsets[entity as usize + 1];
        EdgeRow {
            features: &self.row_features[span.clone()],
            counts: &self.row_counts[span.clone()],
            weights: &self.row_weights[span],
        }
    }

    /// Entities on feature `feature` (ascending) with their weights.
    pub fn column(&self, feature: u32) -> (&[u32], &[f64]) {
        let span = self.col_offsets[feature as usize]..self.col_offsets[feature as usize + 1];
        (&self.col_entities[span.clone()], &self.col_weights[span])
    }

    /// `f_{e,c}`, zero when there is no edge.
    pub fn weight_at(&self, entity: u32, feature: u32) -> f64 {
        let row = self.row(entity);
        row.features
            .binary_search(&feature)
            .map_or(0.0, |i| row.weights[i])
    }

    pub fn count_at(&self, entity: u32, feature: u32) -> u64 {
        let row = self.row(entity);
        row.features
            .binary_search(&feature)
            .map_or(0, |i| row.counts[i])
    }

    pub fn weight(&self, entity: &EntityId, feature: &ContextFeature) -> f64 {
        match (self.entity_index(entity), self.feature_index(feature)) {
            (Some(e), Some(c)) => self.weight_at(e, c),
            _ => 0.0,
        }
    }

    pub fn raw_count(&self, entity: &EntityId, feature: &ContextFeature) -> u64 {
        match (self.entity_index(entity), self.feature_index(feature)) {
            (Some(e), Some(c)) => self.count_at(e, c),
            _ => 0,
        }
    }

    /// Weighted features of `entity`, in key order. Unknown entities have none.
    pub fn features_of(&self, entity: &EntityId) -> Vec<(ContextFeature, f64)> {
        let Some(e) = self.entity_index(entity) else {
            return Vec::new();
        };
        let row = self.row(e);
        row.features
            .iter()
            .zip(row.weights)
            .map(|(&c, &w)| (self.features[c as usize].clone(), w))
            .collect()
    }

    /// Weighted entities on `feature`, in key order. Unknown features have none.
    pub fn entities_with(&self, feature: &ContextFeature) -> Vec<(EntityId, f64)> {
        let Some(c) = self.feature_index(feature) else {
            return Vec::new();
        };
        let (ents, weights) = self.column(c);
        ents.iter()
            .zip(weights)
            .map(|(&e, &w)| (self.entities[e as usize].clone(), w))
            .collect()
    }

    pub fn mention_count_at(&self, entity: u32) -> u64 {
        self.mention_counts[entity as usize]
    }

    pub fn dominant_type_at(&self, entity: u32) -> Option<u32> {
        self.dominant_types[entity as usize]
    }

    pub fn stats(&self, entity: &EntityId) -> Option<EntityStats> {
        let e = self.entity_index(entity)?;
        Some(EntityStats {
            entity: entity.clone(),
            mention_count: self.mention_counts[e as usize],
            dominant_type: self.dominant_types[e as usize].map(|c| self.feature(c).clone()),
        })
    }

    /// All edges as `(entity, feature, raw count, weight)`, entity-major.
    pub fn edges(&self) -> impl Iterator<Item = (&EntityId, &ContextFeature, u64, f64)> + '_ {
        (0..self.entities.len()).flat_map(move |e| {
            let row = self.row(e as u32);
            (0..row.features.len()).map(move |i| {
                (
                    &self.entities[e],
                    &self.features[row.features[i] as usize],
                    row.counts[i],
                    row.weights[i],
                )
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ent(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn sg(l: &str, r: &str) -> ContextFeature {
        ContextFeature::skipgram(&[l], &[r]).unwrap()
    }

    fn record(e: &str, feats: &[ContextFeature]) -> MentionRecord {
        MentionRecord {
            entity: ent(e),
            features: feats.to_vec(),
        }
    }

    #[test]
    fn tfidf_examples() {
        assert_eq!(tfidf_weight(0, 100, 10).unwrap(), 0.0);
        let w = tfidf_weight(5, 100, 10).unwrap();
        assert!((w - 4.125_678_644_075_443).abs() < 1e-9, "{w}");
        assert_eq!(tfidf_weight(3, 10, 50).unwrap(), 0.0);
        assert!(matches!(
            tfidf_weight(2, 10, 0),
            Err(Error::InconsistentCounts { .. })
        ));
    }

    #[test]
    fn counts_cooccurrences() {
        let c = sg("a", "b");
        let recs = vec![record("E", std::slice::from_ref(&c)); 3];
        let g = build_graph(recs, 1).unwrap();
        assert_eq!(g.raw_count(&ent("e"), &c), 3);
        // one entity, column sum 3: IDF negative, clamped
        assert_eq!(g.weight(&ent("e"), &c), 0.0);
    }

    #[test]
    fn min_count_drops_rare_entities() {
        let c = sg("a", "b");
        let d = sg("x", "y");
        let recs = vec![
            record("common", std::slice::from_ref(&c)),
            record("common", std::slice::from_ref(&c)),
            record("rare", std::slice::from_ref(&d)),
        ];
        let g = build_graph(recs, 2).unwrap();
        assert!(g.entity_index(&ent("rare")).is_none());
        assert!(g.entities_with(&d).is_empty());
        assert_eq!(g.num_features(), 1);
        assert!(matches!(
            build_graph(Vec::new(), 1),
            Err(Error::EmptyGraph { .. })
        ));
    }

    #[test]
    fn dominant_type_prefers_highest_count_then_key() {
        let loc = ContextFeature::coarse_type("LOC").unwrap();
        let org = ContextFeature::coarse_type("ORG").unwrap();
        let recs = vec![
            record("x", std::slice::from_ref(&org)),
            record("x", std::slice::from_ref(&loc)),
            record("x", std::slice::from_ref(&org)),
            record("y", std::slice::from_ref(&org)),
            record("y", std::slice::from_ref(&loc)),
        ];
        let g = build_graph(recs, 1).unwrap();
        assert_eq!(g.stats(&ent("x")).unwrap().dominant_type, Some(org));
        assert_eq!(g.stats(&ent("y")).unwrap().dominant_type, Some(loc));
        assert_eq!(g.stats(&ent("x")).unwrap().mention_count, 3);
    }

    #[test]
    fn weighted_edges_reject_bad_input() {
        let c = sg("a", "b");
        assert!(BipartiteGraph::from_weighted_edges(vec![(ent("a"), c.clone(), 1, -1.0)]).is_err());
        assert!(BipartiteGraph::from_weighted_edges(vec![(ent("a"), c.clone(), 0, 1.0)]).is_err());
        assert!(BipartiteGraph::from_weighted_edges(vec![
            (ent("a"), c.clone(), 1, 1.0),
            (ent("a"), c.clone(), 1, 2.0)
        ])
        .is_err());
    }
}
