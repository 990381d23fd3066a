//! Iterative set expansion: context feature selection followed by entity
//! selection through a rank ensemble over sampled feature subsets.
//!
//! Each iteration
//!
//! 1. scores every feature by its summed weight over the current set and
//!    keeps the top `Q` (from scratch, nothing is carried over),
//! 2. draws `T` subsets of `ceil(alpha * |F|)` features without replacement,
//! 3. ranks candidates by mean weighted Jaccard similarity to the set on each
//!    subset,
//! 4. sums reciprocal ranks across the `T` lists and accepts every entity
//!    whose sum reaches `T / r`.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EntityId;
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::similarity::{score_candidates, FeatureSet, SimilarityMetric, WeightedJaccard};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Context features selected per iteration (Q).
    pub context_features: usize,
    /// Number of sampled subsets / ranked lists in the ensemble (T).
    pub ensemble_size: usize,
    /// Relative subset size, in (0, 1) (alpha).
    pub subset_fraction: f64,
    /// Average-rank threshold (r); acceptance needs mrr >= T / r.
    pub rank_threshold: f64,
    /// Target size of the expanded set, seeds included (K).
    pub target_size: usize,
    pub rng_seed: u64,
    pub max_iterations: usize,
    /// Keep only candidates whose dominant type matches a seed's.
    pub type_filter: bool,
    /// Truncate each ranked list; `None` ranks every positive-score candidate.
    pub list_cutoff: Option<usize>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            context_features: 150,
            ensemble_size: 60,
            subset_fraction: 0.6,
            rank_threshold: 5.0,
            target_size: 50,
            rng_seed: 0,
            max_iterations: 20,
            type_filter: true,
            list_cutoff: None,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.context_features == 0 {
            return fail("context_features (Q) must be at least 1");
        }
        if self.ensemble_size == 0 {
            return fail("ensemble_size (T) must be at least 1");
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction < 1.0) {
            return fail("subset_fraction (alpha) must lie strictly between 0 and 1");
        }
        if !(self.rank_threshold >= 1.0 && self.rank_threshold.is_finite()) {
            return fail("rank_threshold (r) must be a finite number >= 1");
        }
        if self.target_size == 0 {
            return fail("target_size (K) must be at least 1");
        }
        if self.max_iterations == 0 {
            return fail("max_iterations must be at least 1");
        }
        if self.list_cutoff == Some(0) {
            return fail("list_cutoff must be positive");
        }
        Ok(())
    }

    /// The mrr acceptance bar `T / r`.
    pub fn acceptance_threshold(&self) -> f64 {
        self.ensemble_size as f64 / self.rank_threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntity {
    pub entity: EntityId,
    pub score: f64,
    /// Number of listed candidates scoring at least as high as this one.
    pub rank: usize,
}

/// Candidates with positive score, by score descending then key ascending.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntity>,
}

impl RankedList {
    /// Builds a list from raw scores: drops non-positive scores, sorts and
    /// assigns indicator ranks.
    pub fn from_scores<I: IntoIterator<Item = (EntityId, f64)>>(scores: I) -> Self {
        let mut scored: Vec<(EntityId, f64)> = scores.into_iter().filter(|s| s.1 > 0.0).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let ranks = indicator_ranks(&scored.iter().map(|s| s.1).collect::<Vec<_>>());
        RankedList {
            entries: scored
                .into_iter()
                .zip(ranks)
                .map(|((entity, score), rank)| RankedEntity {
                    entity,
                    score,
                    rank,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rank_of(&self, entity: &EntityId) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| &e.entity == entity)
            .map(|e| e.rank)
    }
}

/// Indicator ranks for scores sorted in descending order: the rank of an
/// entry is the number of entries scoring at least as high, so tied entries
/// all take the position of the last one in their tie group.
pub fn indicator_ranks(sorted_desc: &[f64]) -> Vec<usize> {
    let mut ranks = vec![0; sorted_desc.len()];
    let mut start = 0;
    while start < sorted_desc.len() {
        let mut end = start + 1;
        while end < sorted_desc.len() && sorted_desc[end] == sorted_desc[start] {
            end += 1;
        }
        ranks[start..end].fill(end);
        start = end;
    }
    ranks
}

/// Accumulated reciprocal ranks per entity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MrrTable(BTreeMap<EntityId, f64>);

impl MrrTable {
    pub fn get(&self, entity: &EntityId) -> Option<f64> {
        self.0.get(entity).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityId, f64)> {
        self.0.iter().map(|(e, &v)| (e, v))
    }
}

impl FromIterator<(EntityId, f64)> for MrrTable {
    fn from_iter<I: IntoIterator<Item = (EntityId, f64)>>(iter: I) -> Self {
        MrrTable(iter.into_iter().collect())
    }
}

/// Sums `1 / rank` over the lists; entities missing from a list get nothing
/// from it.
pub fn ensemble_mrr(lists: &[RankedList]) -> MrrTable {
    let mut table: BTreeMap<EntityId, f64> = BTreeMap::new();
    for list in lists {
        for entry in &list.entries {
            *table.entry(entry.entity.clone()).or_insert(0.0) += 1.0 / entry.rank as f64;
        }
    }
    MrrTable(table)
}

/// Inclusive `mrr >= T / r` with a relative tolerance for float rounding in
/// the reciprocal sums.
fn meets_threshold(mrr: f64, threshold: f64) -> bool {
    mrr >= threshold - 1e-12 * threshold.max(1.0)
}

/// Entities with `mrr >= T / r`, by mrr descending then key ascending.
pub fn accept_entities(
    table: &MrrTable,
    ensemble_size: usize,
    rank_threshold: f64,
) -> Vec<(EntityId, f64)> {
    let threshold = ensemble_size as f64 / rank_threshold;
    let mut out: Vec<(EntityId, f64)> = table
        .iter()
        .filter(|&(_, v)| meets_threshold(v, threshold))
        .map(|(e, v)| (e.clone(), v))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

fn resolve_members(graph: &BipartiteGraph, members: &[EntityId]) -> Result<Vec<u32>> {
    members
        .iter()
        .map(|m| {
            graph
                .entity_index(m)
                .ok_or_else(|| Error::UnknownSeed(m.to_string()))
        })
        .collect()
}

/// Top-`q` features by summed weight over `members`, as graph indices in
/// selection order (score descending, key ascending). Only positive scores.
pub fn select_feature_indices(graph: &BipartiteGraph, members: &[u32], q: usize) -> Vec<u32> {
    let mut scores: HashMap<u32, f64> = HashMap::new();
    for &m in members {
        let row = graph.row(m);
        for (&c, &w) in row.features.iter().zip(row.weights) {
            *scores.entry(c).or_insert(0.0) += w;
        }
    }
    let mut ranked: Vec<(u32, f64)> = scores.into_iter().filter(|s| s.1 > 0.0).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(q);
    ranked.into_iter().map(|(c, _)| c).collect()
}

/// The `q` context features with the highest accumulated weight over
/// `members`. Fewer come back when fewer have a positive score.
pub fn select_context_features(
    graph: &BipartiteGraph,
    members: &[EntityId],
    q: usize,
) -> Result<FeatureSet> {
    if members.is_empty() {
        return Err(Error::EmptyExpandedSet);
    }
    let idx = resolve_members(graph, members)?;
    let selected = select_feature_indices(graph, &idx, q);
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(selected
        .into_iter()
        .map(|c| graph.feature(c).clone())
        .collect())
}

/// Subset size `ceil(alpha * n)`, kept within `1..=n`.
pub fn subset_size(n: usize, subset_fraction: f64) -> usize {
    // shave off representation error so that e.g. 0.7 * 10 stays 7
    let raw = (subset_fraction * n as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

/// `count` position subsets of `0..n`, each drawn uniformly without
/// replacement and returned in ascending order.
pub fn sample_positions<R: Rng + ?Sized>(
    n: usize,
    count: usize,
    subset_fraction: f64,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new(); count];
    }
    let size = subset_size(n, subset_fraction);
    (0..count)
        .map(|_| {
            let mut picked = index::sample(rng, n, size).into_vec();
            picked.sort_unstable();
            picked
        })
        .collect()
}

/// `count` feature subsets of `features`, each in the order of `features`.
pub fn sample_subsets<R: Rng + ?Sized>(
    features: &FeatureSet,
    count: usize,
    subset_fraction: f64,
    rng: &mut R,
) -> Vec<FeatureSet> {
    sample_positions(features.len(), count, subset_fraction, rng)
        .into_iter()
        .map(|pos| {
            pos.into_iter()
                .map(|i| features.as_slice()[i].clone())
                .collect()
        })
        .collect()
}

/// Generator for the subset draws of one iteration (1-based).
pub fn iteration_rng(rng_seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(iteration as u64);
    rng
}

/// Which entities may appear in a ranked list.
#[derive(Debug, Clone, Default)]
pub struct CandidatePolicy {
    /// Allowed dominant types (feature indices); `None` disables the filter.
    pub allowed_types: Option<HashSet<u32>>,
    pub list_cutoff: Option<usize>,
}

impl CandidatePolicy {
    pub fn for_seeds(graph: &BipartiteGraph, seeds: &[EntityId], config: &Config) -> Result<Self> {
        let allowed_types = if config.type_filter {
            let types: HashSet<u32> = resolve_members(graph, seeds)?
                .into_iter()
                .filter_map(|s| graph.dominant_type_at(s))
                .collect();
            // untyped seeds give nothing to filter against
            (!types.is_empty()).then_some(types)
        } else {
            None
        };
        Ok(CandidatePolicy {
            allowed_types,
            list_cutoff: config.list_cutoff,
        })
    }

    fn admits(&self, graph: &BipartiteGraph, entity: u32) -> bool {
        match &self.allowed_types {
            None => true,
            Some(types) => graph
                .dominant_type_at(entity)
                .is_some_and(|t| types.contains(&t)),
        }
    }
}

/// `(entity, score, rank)` in list order.
type IndexedList = Vec<(u32, f64, usize)>;

fn rank_indexed<M: SimilarityMetric + ?Sized>(
    metric: &M,
    graph: &BipartiteGraph,
    members: &[u32],
    excluded: &HashSet<u32>,
    features: &[u32],
    policy: &CandidatePolicy,
) -> IndexedList {
    let mut scored: Vec<(u32, f64)> = score_candidates(metric, graph, members, features)
        .into_iter()
        .filter(|&(e, s)| s > 0.0 && !excluded.contains(&e) && policy.admits(graph, e))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let ranks = indicator_ranks(&scored.iter().map(|s| s.1).collect::<Vec<_>>());
    let mut list: IndexedList = scored
        .into_iter()
        .zip(ranks)
        .map(|((e, s), r)| (e, s, r))
        .collect();
    if let Some(cut) = policy.list_cutoff {
        list.truncate(cut);
    }
    list
}

/// Ranks every admissible non-member by its mean similarity to `members`
/// on `features`. Ranks are computed before truncation.
pub fn rank_candidates(
    graph: &BipartiteGraph,
    members: &[EntityId],
    features: &FeatureSet,
    policy: &CandidatePolicy,
) -> Result<RankedList> {
    if members.is_empty() {
        return Err(Error::EmptyExpandedSet);
    }
    if features.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    let idx = resolve_members(graph, members)?;
    let excluded: HashSet<u32> = idx.iter().copied().collect();
    let list = rank_indexed(
        &WeightedJaccard,
        graph,
        &idx,
        &excluded,
        &features.resolve(graph),
        policy,
    );
    Ok(RankedList {
        entries: list
            .into_iter()
            .map(|(e, score, rank)| RankedEntity {
                entity: graph.entity(e).clone(),
                score,
                rank,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionStatus {
    ReachedK,
    Stalled,
    MaxIterations,
}

impl std::fmt::Display for ExpansionStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExpansionStatus::ReachedK => "reached_K",
            ExpansionStatus::Stalled => "stalled",
            ExpansionStatus::MaxIterations => "max_iterations",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedEntity {
    pub entity: EntityId,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Selected features, in selection order.
    pub features: FeatureSet,
    /// Positions into `features` drawn for each ensemble subset.
    pub subsets: Vec<Vec<usize>>,
    pub list_lengths: Vec<usize>,
    pub accepted: Vec<AcceptedEntity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionState {
    /// Seeds first, then accepted entities in acceptance order.
    pub expanded: Vec<EntityId>,
    pub num_seeds: usize,
    pub iteration: usize,
    pub status: ExpansionStatus,
    pub history: Vec<IterationRecord>,
}

impl ExpansionState {
    pub fn seeds(&self) -> &[EntityId] {
        &self.expanded[..self.num_seeds]
    }

    /// Accepted entities, seeds excluded, in acceptance order.
    pub fn extracted(&self) -> &[EntityId] {
        &self.expanded[self.num_seeds..]
    }

    /// `(entity, iteration, mrr)` for every accepted entity in acceptance order.
    pub fn accepted(&self) -> impl Iterator<Item = (&EntityId, usize, f64)> {
        self.history.iter().flat_map(|h| {
            h.accepted
                .iter()
                .map(move |a| (&a.entity, h.iteration, a.mrr))
        })
    }
}

/// Expands `seeds` until the set holds `target_size` entities, nothing more
/// is accepted, or `max_iterations` runs out.
pub fn expand(
    graph: &BipartiteGraph,
    seeds: &[EntityId],
    config: &Config,
) -> Result<ExpansionState> {
    expand_with(&WeightedJaccard, graph, seeds, config)
}

pub fn expand_with<M: SimilarityMetric + ?Sized>(
    metric: &M,
    graph: &BipartiteGraph,
    seeds: &[EntityId],
    config: &Config,
) -> Result<ExpansionState> {
    config.validate()?;
    let mut unique_seeds: Vec<EntityId> = Vec::with_capacity(seeds.len());
    for s in seeds {
        if !unique_seeds.contains(s) {
            unique_seeds.push(s.clone());
        }
    }
    if unique_seeds.is_empty() {
        return Err(Error::EmptyExpandedSet);
    }
    let mut members = resolve_members(graph, &unique_seeds)?;
    let mut member_set: HashSet<u32> = members.iter().copied().collect();
    let policy = CandidatePolicy::for_seeds(graph, &unique_seeds, config)?;
    let threshold = config.acceptance_threshold();

    let mut history = Vec::new();
    let mut iteration = 0;
    let status = loop {
        if members.len() >= config.target_size {
            break ExpansionStatus::ReachedK;
        }
        if iteration >= config.max_iterations {
            break ExpansionStatus::MaxIterations;
        }
        iteration += 1;

        let selected = select_feature_indices(graph, &members, config.context_features);
        let features: FeatureSet = selected.iter().map(|&c| graph.feature(c).clone()).collect();
        if selected.is_empty() {
            history.push(IterationRecord {
                iteration,
                features,
                subsets: Vec::new(),
                list_lengths: Vec::new(),
                accepted: Vec::new(),
            });
            break ExpansionStatus::Stalled;
        }

        let mut rng = iteration_rng(config.rng_seed, iteration);
        let subsets = sample_positions(
            selected.len(),
            config.ensemble_size,
            config.subset_fraction,
            &mut rng,
        );
        let lists: Vec<IndexedList> = subsets
            .par_iter()
            .map(|positions| {
                let mut feats: Vec<u32> = positions.iter().map(|&p| selected[p]).collect();
                feats.sort_unstable();
                rank_indexed(metric, graph, &members, &member_set, &feats, &policy)
            })
            .collect();

        let mut mrr: HashMap<u32, f64> = HashMap::new();
        for list in &lists {
            for &(e, _, rank) in list {
                *mrr.entry(e).or_insert(0.0) += 1.0 / rank as f64;
            }
        }
        let mut accepted: Vec<(u32, f64)> = mrr
            .into_iter()
            .filter(|&(_, v)| meets_threshold(v, threshold))
            .collect();
        accepted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        history.push(IterationRecord {
            iteration,
            features,
            subsets,
            list_lengths: lists.iter().map(Vec::len).collect(),
            accepted: accepted
                .iter()
                .map(|&(e, mrr)| AcceptedEntity {
                    entity: graph.entity(e).clone(),
                    mrr,
                })
                .collect(),
        });
        if accepted.is_empty() {
            break ExpansionStatus::Stalled;
        }
        for (e, _) in accepted {
            members.push(e);
            member_set.insert(e);
        }
    };

    Ok(ExpansionState {
        expanded: members.iter().map(|&e| graph.entity(e).clone()).collect(),
        num_seeds: unique_seeds.len(),
        iteration,
        status,
        history,
    })
}
