//! AP@k, MAP@k and MMAP@k over expansion queries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EntityId;
use crate::error::{Error, Result};
use crate::expansion::{expand, Config, ExpansionStatus};
use crate::graph::BipartiteGraph;

pub const DEFAULT_KS: [usize; 3] = [10, 20, 50];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    #[serde(rename = "class")]
    pub class_name: String,
    pub seeds: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(rename = "class")]
    pub class_name: String,
    pub members: Vec<String>,
}

/// Normalized ground-truth members of one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthSet(HashSet<EntityId>);

impl TruthSet {
    pub fn new<I: IntoIterator<Item = EntityId>>(members: I) -> Self {
        TruthSet(members.into_iter().collect())
    }

    /// Normalizes `truth` and removes `seeds`.
    pub fn without_seeds(truth: &GroundTruth, seeds: &[EntityId]) -> Result<Self> {
        let mut members = HashSet::new();
        for m in &truth.members {
            members.insert(EntityId::new(m)?);
        }
        for s in seeds {
            members.remove(s);
        }
        Ok(TruthSet(members))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, entity: &EntityId) -> bool {
        self.0.contains(entity)
    }
}

/// `(1 / min(k, |truth|)) * sum_{i <= k} precision@i * rel(i)`.
pub fn average_precision_at_k(ranked: &[EntityId], truth: &TruthSet, k: usize) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyGroundTruth(String::new()));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, entity) in ranked.iter().take(k).enumerate() {
        if truth.contains(entity) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / k.min(truth.len()) as f64)
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyAverage);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// MAP over the AP values of one class's queries.
pub fn map_at_k(aps: &[f64]) -> Result<f64> {
    mean(aps)
}

/// MMAP over per-class MAP values.
pub fn mmap_at_k(maps: &[f64]) -> Result<f64> {
    mean(maps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub index: usize,
    pub class: String,
    pub seeds: Vec<String>,
    pub rng_seed: u64,
    pub status: Option<ExpansionStatus>,
    pub error: Option<String>,
    pub iterations: usize,
    pub extracted: Vec<String>,
    pub ap: BTreeMap<usize, f64>,
}

impl QueryReport {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub ks: Vec<usize>,
    pub queries: Vec<QueryReport>,
    /// Per class: MAP@k over that class's successful queries.
    pub classes: BTreeMap<String, BTreeMap<usize, f64>>,
    /// MMAP@k over classes with at least one successful query.
    pub mmap: BTreeMap<usize, f64>,
}

impl BenchmarkReport {
    pub fn failed_queries(&self) -> impl Iterator<Item = &QueryReport> {
        self.queries.iter().filter(|q| q.failed())
    }

    /// Aligned-column text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let head: Vec<String> = self.ks.iter().map(|k| format!("MAP@{k}")).collect();
        let width = self
            .classes
            .keys()
            .map(String::len)
            .chain(["class".len(), "MMAP".len()])
            .max()
            .unwrap_or(5);
        let _ = write!(out, "{:<width$}", "class");
        for h in &head {
            let _ = write!(out, "  {h:>8}");
        }
        out.push('\n');
        for (class, maps) in &self.classes {
            let _ = write!(out, "{class:<width$}");
            for k in &self.ks {
                let _ = write!(out, "  {:>8.4}", maps.get(k).copied().unwrap_or(f64::NAN));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<width$}", "MMAP");
        for k in &self.ks {
            let _ = write!(
                out,
                "  {:>8.4}",
                self.mmap.get(k).copied().unwrap_or(f64::NAN)
            );
        }
        out.push('\n');
        for q in self.failed_queries() {
            let _ = writeln!(
                out,
                "failed query {} ({}): {}",
                q.index,
                q.class,
                q.error.as_deref().unwrap_or_default()
            );
        }
        out
    }
}

/// Seed for query `index` derived from the base seed.
pub fn query_rng_seed(base: u64, index: usize) -> u64 {
    base ^ index as u64
}

/// Expands every query and scores its extracted entities against the
/// class ground truth. Failed queries are reported and left out of the
/// averages.
pub fn run_benchmark(
    graph: &BipartiteGraph,
    queries: &[Query],
    truths: &[GroundTruth],
    config: &Config,
    ks: &[usize],
) -> Result<BenchmarkReport> {
    config.validate()?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidConfig("k values must be positive".into()));
    }
    let truth_by_class: HashMap<&str, &GroundTruth> =
        truths.iter().map(|t| (t.class_name.as_str(), t)).collect();

    let reports: Vec<QueryReport> = queries
        .par_iter()
        .enumerate()
        .map(|(index, query)| {
            let rng_seed = query_rng_seed(config.rng_seed, index);
            let mut report = QueryReport {
                index,
                class: query.class_name.clone(),
                seeds: query.seeds.clone(),
                rng_seed,
                status: None,
                error: None,
                iterations: 0,
                extracted: Vec::new(),
                ap: BTreeMap::new(),
            };
            if let Err(e) = score_query(
                graph,
                query,
                &truth_by_class,
                config,
                rng_seed,
                ks,
                &mut report,
            ) {
                report.error = Some(e.to_string());
                report.ap.clear();
            }
            report
        })
        .collect();

    let mut per_class: BTreeMap<String, Vec<&QueryReport>> = BTreeMap::new();
    for r in reports.iter().filter(|r| !r.failed()) {
        per_class.entry(r.class.clone()).or_default().push(r);
    }
    let mut classes = BTreeMap::new();
    for (class, rs) in &per_class {
        let mut maps = BTreeMap::new();
        for &k in ks {
            let aps: Vec<f64> = rs.iter().map(|r| r.ap[&k]).collect();
            maps.insert(k, map_at_k(&aps)?);
        }
        classes.insert(class.clone(), maps);
    }
    let mut mmap = BTreeMap::new();
    if !classes.is_empty() {
        for &k in ks {
            let maps: Vec<f64> = classes.values().map(|m| m[&k]).collect();
            mmap.insert(k, mmap_at_k(&maps)?);
        }
    }

    Ok(BenchmarkReport {
        ks: ks.to_vec(),
        queries: reports,
        classes,
        mmap,
    })
}

fn score_query(
    graph: &BipartiteGraph,
    query: &Query,
    truths: &HashMap<&str, &GroundTruth>,
    config: &Config,
    rng_seed: u64,
    ks: &[usize],
    report: &mut QueryReport,
) -> Result<()> {
    let truth = truths
        .get(query.class_name.as_str())
        .ok_or_else(|| Error::EmptyGroundTruth(query.class_name.clone()))?;
    let seeds = query
        .seeds
        .iter()
        .map(|s| EntityId::new(s))
        .collect::<Result<Vec<_>>>()?;
    let truth_set = TruthSet::without_seeds(truth, &seeds)?;
    if truth_set.is_empty() {
        return Err(Error::EmptyGroundTruth(query.class_name.clone()));
    }
    let query_config = Config {
        rng_seed,
        ..config.clone()
    };
    let state = expand(graph, &seeds, &query_config)?;
    report.status = Some(state.status);
    report.iterations = state.iteration;
    report.extracted = state.extracted().iter().map(|e| e.to_string()).collect();
    for &k in ks {
        report
            .ap
            .insert(k, average_precision_at_k(state.extracted(), &truth_set, k)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(names: &[&str]) -> Vec<EntityId> {
        names.iter().map(|n| EntityId::new(n).unwrap()).collect()
    }

    #[test]
    fn ap_hand_example() {
        let truth = TruthSet::new(ids(&["a", "c"]));
        let ap = average_precision_at_k(&ids(&["a", "b", "c"]), &truth, 3).unwrap();
        assert!((ap - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn ap_extremes() {
        let truth = TruthSet::new(ids(&["a", "b", "c", "d"]));
        assert_eq!(
            average_precision_at_k(&ids(&["a", "b", "c"]), &truth, 3).unwrap(),
            1.0
        );
        assert_eq!(
            average_precision_at_k(&ids(&["x", "y", "a"]), &truth, 2).unwrap(),
            0.0
        );
        assert_eq!(average_precision_at_k(&[], &truth, 5).unwrap(), 0.0);
        assert!(average_precision_at_k(&ids(&["a"]), &TruthSet::new([]), 5).is_err());
    }

    #[test]
    fn truth_excludes_seeds() {
        let gt = GroundTruth {
            class_name: "s".into(),
            members: vec!["Texas".into(), "Ohio".into()],
        };
        let t = TruthSet::without_seeds(&gt, &ids(&["texas"])).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.contains(&EntityId::new("ohio").unwrap()));
    }

    #[test]
    fn means() {
        assert_eq!(map_at_k(&[0.25]).unwrap(), 0.25);
        assert!((mmap_at_k(&[0.4, 0.8]).unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(mean(&[]), Err(Error::EmptyAverage)));
    }

    #[test]
    fn query_files_use_class_key() {
        let q: Vec<Query> =
            serde_json::from_str(r#"[{"class": "states", "seeds": ["a", "b"]}]"#).unwrap();
        assert_eq!(q[0].class_name, "states");
        let t: Vec<GroundTruth> =
            serde_json::from_str(r#"[{"class": "states", "members": ["a"]}]"#).unwrap();
        assert_eq!(t[0].members, vec!["a"]);
    }
}
