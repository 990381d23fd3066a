//! Synthetic corpora with planted semantic classes.
//!
//! Every class owns a pool of context templates (three words left, three
//! words right of the entity slot); a generic pool is shared by all classes.
//! Each entity prefers a random part of its class pool. A mention draws its
//! template from a random other class's pool with probability `noise`, from
//! the generic pool with probability `generic_rate` otherwise, and from the
//! entity's own preferred templates in the remaining cases.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_mention, AnnotatedSentence, Mention};
use crate::error::{Error, Result};
use crate::evaluation::{GroundTruth, Query};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const QUERIES_FILE: &str = "queries.json";
pub const TRUTH_FILE: &str = "truth.json";

/// Coarse type shared by all planted entities, so type filtering cannot
/// separate the classes.
pub const SYNTH_TYPE: &str = "ENTITY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub classes: usize,
    pub entities_per_class: usize,
    /// Probability that a mention uses another class's context.
    pub noise: f64,
    pub rng_seed: u64,
    pub contexts_per_class: usize,
    pub generic_contexts: usize,
    /// Probability that a mention not drawn as noise uses a generic context.
    pub generic_rate: f64,
    /// Fraction of its class pool an entity draws from.
    pub context_affinity: f64,
    pub min_mentions: usize,
    pub max_mentions: usize,
    pub queries_per_class: usize,
    pub seeds_per_query: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            classes: 3,
            entities_per_class: 30,
            noise: 0.05,
            rng_seed: 0,
            contexts_per_class: 40,
            generic_contexts: 30,
            generic_rate: 0.3,
            context_affinity: 0.5,
            min_mentions: 10,
            max_mentions: 40,
            queries_per_class: 5,
            seeds_per_query: 3,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.noise) {
            return fail("noise must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.generic_rate) {
            return fail("generic_rate must lie in [0, 1]");
        }
        if !(self.context_affinity > 0.0 && self.context_affinity <= 1.0) {
            return fail("context_affinity must lie in (0, 1]");
        }
        if self.classes == 0 || self.entities_per_class == 0 {
            return fail("need at least one class and one entity per class");
        }
        if self.contexts_per_class == 0 || self.generic_contexts == 0 {
            return fail("context pools must be non-empty");
        }
        if self.min_mentions == 0 || self.min_mentions > self.max_mentions {
            return fail("need 1 <= min_mentions <= max_mentions");
        }
        if self.seeds_per_query == 0 || self.seeds_per_query > self.entities_per_class {
            return fail("seeds_per_query must lie in 1..=entities_per_class");
        }
        Ok(())
    }
}

/// Which pool a template belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pool {
    Class(usize),
    Generic,
}

#[derive(Debug, Clone)]
struct Template {
    left: [String; 3],
    right: [String; 3],
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub params: SynthParams,
    pub sentences: Vec<AnnotatedSentence>,
    pub queries: Vec<Query>,
    pub truths: Vec<GroundTruth>,
    /// Planted class of every entity surface.
    pub membership: BTreeMap<String, usize>,
    /// Pool of every context word, for auditing.
    word_pools: HashMap<String, Pool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub sentences: usize,
    pub entities: usize,
    /// Mentions whose context came from another class's pool.
    pub cross_class_mentions: usize,
    pub generic_mentions: usize,
}

pub fn class_name(class: usize) -> String {
    format!("class{class}")
}

pub fn entity_surface(class: usize, index: usize) -> String {
    format!("C{class}E{index:03}")
}

fn template_words(tag: &str, index: usize) -> Template {
    let w = |side: &str, i: usize| format!("{tag}t{index}{side}{i}");
    Template {
        left: [w("l", 0), w("l", 1), w("l", 2)],
        right: [w("r", 0), w("r", 1), w("r", 2)],
    }
}

pub fn generate(params: &SynthParams) -> Result<SynthCorpus> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);

    let class_pools: Vec<Vec<Template>> = (0..params.classes)
        .map(|c| {
            (0..params.contexts_per_class)
                .map(|j| template_words(&format!("k{c}"), j))
                .collect()
        })
        .collect();
    let generic: Vec<Template> = (0..params.generic_contexts)
        .map(|j| template_words("g", j))
        .collect();

    let mut word_pools = HashMap::new();
    for (c, pool) in class_pools.iter().enumerate() {
        for t in pool {
            for w in t.left.iter().chain(&t.right) {
                word_pools.insert(w.clone(), Pool::Class(c));
            }
        }
    }
    for t in &generic {
        for w in t.left.iter().chain(&t.right) {
            word_pools.insert(w.clone(), Pool::Generic);
        }
    }

    let preferred = ((params.contexts_per_class as f64 * params.context_affinity).ceil() as usize)
        .clamp(1, params.contexts_per_class);
    let log_lo = (params.min_mentions as f64).ln();
    let log_hi = (params.max_mentions as f64 + 1.0).ln();

    let mut sentences = Vec::new();
    let mut membership = BTreeMap::new();
    for class in 0..params.classes {
        for index in 0..params.entities_per_class {
            let surface = entity_surface(class, index);
            membership.insert(surface.clone(), class);
            let mut own: Vec<usize> = (0..params.contexts_per_class).collect();
            own.shuffle(&mut rng);
            own.truncate(preferred);
            let mentions = (rng.gen_range(log_lo..log_hi).exp() as usize)
                .clamp(params.min_mentions, params.max_mentions);
            for _ in 0..mentions {
                let template = if rng.gen::<f64>() < params.noise && params.classes > 1 {
                    let mut other = rng.gen_range(0..params.classes - 1);
                    if other >= class {
                        other += 1;
                    }
                    &class_pools[other][rng.gen_range(0..params.contexts_per_class)]
                } else if rng.gen::<f64>() < params.generic_rate {
                    &generic[rng.gen_range(0..generic.len())]
                } else {
                    &class_pools[class][own[rng.gen_range(0..own.len())]]
                };
                let mut tokens: Vec<String> = template.left.to_vec();
                tokens.push(surface.clone());
                tokens.extend(template.right.iter().cloned());
                sentences.push(AnnotatedSentence {
                    tokens,
                    mentions: vec![Mention {
                        start: 3,
                        end: 4,
                        coarse_type: SYNTH_TYPE.to_string(),
                    }],
                });
            }
        }
    }
    sentences.shuffle(&mut rng);

    let mut queries = Vec::new();
    let mut truths = Vec::new();
    for class in 0..params.classes {
        for _ in 0..params.queries_per_class {
            let picked = rand::seq::index::sample(
                &mut rng,
                params.entities_per_class,
                params.seeds_per_query,
            );
            queries.push(Query {
                class_name: class_name(class),
                seeds: picked
                    .into_iter()
                    .map(|i| entity_surface(class, i))
                    .collect(),
            });
        }
        truths.push(GroundTruth {
            class_name: class_name(class),
            members: (0..params.entities_per_class)
                .map(|i| entity_surface(class, i))
                .collect(),
        });
    }

    Ok(SynthCorpus {
        params: params.clone(),
        sentences,
        queries,
        truths,
        membership,
        word_pools,
    })
}

impl SynthCorpus {
    /// Recounts the emitted corpus and checks it against the planted
    /// membership and the truth/query files.
    pub fn audit(&self) -> Result<AuditReport> {
        let fail = |m: String| Err(Error::InvalidConfig(format!("synthetic audit: {m}")));
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut cross = 0;
        let mut generic = 0;
        for s in &self.sentences {
            if let Err(m) = s.validate() {
                return fail(m);
            }
            for (i, m) in s.mentions.iter().enumerate() {
                let surface = s.surface(i);
                let Some(&class) = self.membership.get(&surface) else {
                    return fail(format!("unplanted entity {surface}"));
                };
                *seen.entry(surface).or_insert(0) += 1;
                let pools: Vec<Pool> = s.tokens[..m.start]
                    .iter()
                    .chain(&s.tokens[m.end..])
                    .filter_map(|w| self.word_pools.get(w).copied())
                    .collect();
                match pools.first() {
                    Some(Pool::Class(c)) if *c != class => cross += 1,
                    Some(Pool::Generic) => generic += 1,
                    Some(_) => {}
                    None => return fail("context words from no pool".into()),
                }
            }
        }
        if seen.len() != self.membership.len() {
            return fail("some planted entities never occur".into());
        }
        for truth in &self.truths {
            let class = truth
                .class_name
                .trim_start_matches("class")
                .parse::<usize>();
            let planted: Vec<&String> = self
                .membership
                .iter()
                .filter(|(_, &c)| Ok(c) == class)
                .map(|(s, _)| s)
                .collect();
            let mut members: Vec<&String> = truth.members.iter().collect();
            members.sort();
            if members != planted {
                return fail(format!(
                    "truth for {} differs from planted membership",
                    truth.class_name
                ));
            }
        }
        for q in &self.queries {
            let truth = self.truths.iter().find(|t| t.class_name == q.class_name);
            if !truth.is_some_and(|t| q.seeds.iter().all(|s| t.members.contains(s))) {
                return fail(format!(
                    "query seeds {:?} outside class {}",
                    q.seeds, q.class_name
                ));
            }
        }
        if self.params.noise == 0.0 && cross > 0 {
            return fail(format!("{cross} cross-class mentions with zero noise"));
        }
        Ok(AuditReport {
            sentences: self.sentences.len(),
            entities: seen.len(),
            cross_class_mentions: cross,
            generic_mentions: generic,
        })
    }

    /// Planted class of a normalized entity key.
    pub fn class_of(&self, canonical: &str) -> Option<usize> {
        self.membership
            .iter()
            .find(|(s, _)| normalize_mention(s).is_ok_and(|e| e.as_str() == canonical))
            .map(|(_, &c)| c)
    }

    pub fn corpus_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Writes corpus, query and truth files into `dir`; returns their paths.
    pub fn write_to(&self, dir: &Path) -> Result<[PathBuf; 3]> {
        fs::create_dir_all(dir)?;
        let corpus = dir.join(CORPUS_FILE);
        let mut w = BufWriter::new(fs::File::create(&corpus)?);
        w.write_all(self.corpus_jsonl()?.as_bytes())?;
        w.flush()?;
        let queries = dir.join(QUERIES_FILE);
        fs::write(
            &queries,
            serde_json::to_string_pretty(&self.queries)? + "\n",
        )?;
        let truth = dir.join(TRUTH_FILE);
        fs::write(&truth, serde_json::to_string_pretty(&self.truths)? + "\n")?;
        Ok([corpus, queries, truth])
    }
}
