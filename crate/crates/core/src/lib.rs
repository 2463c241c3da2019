//! Categorical testbed for outcome-reward RL on direct factual recall.
//!
//! A frozen synthetic "parametric memory" (knowledge and popularity scores
//! over a surface-form vocabulary) is read through a small trainable access
//! transform. Trainers (GRPO, PPO, SFT, RFT, DPO) can only change how the
//! frozen scores are weighted, never the scores themselves, so every gain is
//! a redistribution of probability mass over answers the world already
//! "knows".
//!
//! The crate is `no_std` + `alloc`. IO, file formats and the CLI live in the
//! `recall-gym` companion crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod math;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod trainers;
pub mod world;

pub use error::{Error, Result};
pub use policy::{RecallPolicy, ReferencePolicy, FEATURE_DIM};
pub use reward::{Verifier, VerifierMode};
pub use world::{
    DatasetSplits, EntityId, Fact, FactUniverse, FormId, QueryId, RelationId, SurfaceForm,
    WorldConfig,
};
