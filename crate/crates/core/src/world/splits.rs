use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{EntityId, FactUniverse, QueryId, RelationId};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetSplits {
    pub train: Vec<QueryId>,
    pub validation: Vec<QueryId>,
    pub test: Vec<QueryId>,
}

impl DatasetSplits {
    pub fn is_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .all(|q| seen.insert(*q))
    }
}

/// Uniform random disjoint train/validation/test assignment.
pub fn split_dataset(universe: &FactUniverse, sizes: SplitSizes, seed: u64) -> Result<DatasetSplits> {
    let total = sizes.train + sizes.validation + sizes.test;
    if total > universe.n_facts() {
        return Err(Error::arg(alloc::format!(
            "split sizes sum to {total} but the universe has {} facts",
            universe.n_facts()
        )));
    }
    let mut ids = universe.all_queries();
    ids.shuffle(&mut stream(seed, &[purpose::SPLIT]));
    let validation_end = sizes.train + sizes.validation;
    Ok(DatasetSplits {
        train: ids[..sizes.train].to_vec(),
        validation: ids[sizes.train..validation_end].to_vec(),
        test: ids[validation_end..total].to_vec(),
    })
}

fn key_set(universe: &FactUniverse, queries: &[QueryId]) -> BTreeSet<(EntityId, RelationId)> {
    queries
        .iter()
        .filter_map(|q| universe.facts.get(q.index()).map(|f| f.key()))
        .collect()
}

/// Drops test queries asking the same `(subject, relation)` as any train
/// query. Queries that merely share an answer entity are kept.
pub fn deduplicate(train: &[QueryId], test: &[QueryId], universe: &FactUniverse) -> Vec<QueryId> {
    let keys = key_set(universe, train);
    test.iter()
        .copied()
        .filter(|q| {
            universe
                .facts
                .get(q.index())
                .is_some_and(|f| !keys.contains(&f.key()))
        })
        .collect()
}

/// Cross-world variant of [`deduplicate`]. Distinct universes have
/// independent entity namespaces, so only a shared universe can collide.
pub fn deduplicate_across(
    train_universe: &FactUniverse,
    train: &[QueryId],
    test_universe: &FactUniverse,
    test: &[QueryId],
) -> Vec<QueryId> {
    if train_universe.fingerprint() == test_universe.fingerprint() {
        deduplicate(train, test, test_universe)
    } else {
        test.to_vec()
    }
}

/// Downsamples every subset to the size of the smallest, without
/// replacement. Selected queries keep their original relative order.
pub fn downsample_balanced(subsets: &[Vec<QueryId>], seed: u64) -> Result<Vec<Vec<QueryId>>> {
    if subsets.is_empty() {
        return Err(Error::arg("no subsets to balance"));
    }
    if let Some(i) = subsets.iter().position(Vec::is_empty) {
        return Err(Error::arg(alloc::format!("subset {i} is empty")));
    }
    let target = subsets.iter().map(Vec::len).min().unwrap_or(0);
    Ok(subsets
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream(seed, &[purpose::DOWNSAMPLE, i as u64]);
            let mut idx = rand::seq::index::sample(&mut rng, s.len(), target).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|j| s[j]).collect()
        })
        .collect())
}
