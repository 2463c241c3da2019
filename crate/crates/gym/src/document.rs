//! Versioned JSON documents for universes, splits and policy checkpoints.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use recall_gym_core::world::DatasetSplits;
use recall_gym_core::{FactUniverse, FormId, QueryId, RecallPolicy, FEATURE_DIM};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// A universe and (optionally) its splits. Ids are plain integers and the
/// knowledge matrix is stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniverseDocument {
    pub schema_version: u32,
    pub universe_hash: u64,
    pub universe: FactUniverse,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<DatasetSplits>,
}

impl UniverseDocument {
    pub fn new(universe: FactUniverse, splits: Option<DatasetSplits>) -> Self {
        UniverseDocument {
            schema_version: SCHEMA_VERSION,
            universe_hash: universe.fingerprint(),
            universe,
            splits,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc: UniverseDocument = read_json(path)?;
        check_schema(path, doc.schema_version)?;
        let found = doc.universe.fingerprint();
        if found != doc.universe_hash {
            return Err(Error::HashMismatch { expected: doc.universe_hash, found });
        }
        if let Some(s) = &doc.splits {
            let n = doc.universe.n_facts();
            let in_range = s.train.iter().chain(&s.validation).chain(&s.test).all(|q| q.index() < n);
            if !in_range || !s.is_disjoint() {
                return Err(Error::format(path, "splits reference unknown or repeated queries"));
            }
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Policy parameters pinned to one universe. Delta entries with magnitude
/// below `pruned_below` are dropped on save.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub universe_hash: u64,
    pub w: [f64; FEATURE_DIM],
    pub delta_enabled: bool,
    pub pruned_below: f64,
    /// Queries that own a delta row, including all-zero rows.
    pub delta_rows: Vec<QueryId>,
    /// `(query, form, value)`
    pub delta: Vec<(QueryId, FormId, f64)>,
}

impl Checkpoint {
    pub fn from_policy(policy: &RecallPolicy, pruned_below: f64) -> Self {
        Checkpoint {
            schema_version: SCHEMA_VERSION,
            universe_hash: policy.universe().fingerprint(),
            w: *policy.weights(),
            delta_enabled: policy.delta_enabled(),
            pruned_below,
            delta_rows: policy.delta_queries(),
            delta: policy
                .delta_triplets()
                .into_iter()
                .filter(|t| t.2.abs() >= pruned_below)
                .collect(),
        }
    }

    pub fn into_policy(self, universe: Arc<FactUniverse>) -> Result<RecallPolicy> {
        let expected = universe.fingerprint();
        if expected != self.universe_hash {
            return Err(Error::HashMismatch { expected, found: self.universe_hash });
        }
        Ok(RecallPolicy::from_parts(universe, self.w, &self.delta_rows, &self.delta, self.delta_enabled)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = read_json(path)?;
        check_schema(path, ck.schema_version)?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

fn check_schema(path: &Path, found: u32) -> Result<()> {
    if found == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(Error::format(path, format!("schema_version {found}, expected {SCHEMA_VERSION}")))
    }
}

/// Reads any JSON document; errors name the file.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
