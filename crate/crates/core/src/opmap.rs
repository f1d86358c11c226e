//! Normalization of raw dataset operation names into the eight-kind triplet
//! form.
//!
//! Question corpora in the wild use a wide vocabulary of operation names
//! ("filter size", "different color", "exist", ...). The mapping table is an
//! external, editable JSON array; a seed table covering the common names
//! ships with the crate ([`OpMap::builtin`]). Each entry gives the target
//! kind, optional fixed argument slots, and positional roles for the raw
//! arguments:
//!
//! ```json
//! {"raw_op": "filter size", "kind": "filter", "arg_roles": ["category", "attribute"]}
//! {"raw_op": "different color", "kind": "compare", "attribute": "color", "arg_roles": ["dep", "dep"]}
//! ```
//!
//! A `dep` role marks a raw argument that names the step producing an input
//! set; resolving those names to step indices is the caller's job. Entries
//! for answer-producing operations that have no clean triplet form (such as
//! "exist") map to a default kind and carry `"flagged": true` so reports can
//! call them out. Unmapped names are always a hard error, never silently
//! dropped.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::OpKind;
use crate::scene::Token;

#[derive(Debug, Error)]
pub enum OpMapError {
    #[error("mapping table is not valid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("duplicate mapping entry for raw operation {0:?}")]
    DuplicateEntry(String),
    #[error("mapping entry {raw_op:?} assigns {slot} both a fixed value and an argument role")]
    SlotConflict { raw_op: String, slot: &'static str },
    #[error("unmapped raw operation {0:?}")]
    Unmapped(String),
    #[error("raw operation {raw_op:?} takes {expected} argument(s), got {got}")]
    ArgArity {
        raw_op: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgRole {
    Category,
    Attribute,
    Relation,
    Dep,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpMapEntry {
    pub raw_op: String,
    pub kind: OpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Token>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<Token>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<Token>,
    #[serde(default)]
    pub arg_roles: Vec<ArgRole>,
    #[serde(default)]
    pub flagged: bool,
}

/// Normalized step template: the triplet slots plus unresolved dep names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepTemplate {
    pub kind: OpKind,
    pub category: Option<Token>,
    pub attribute: Option<Token>,
    pub relation: Option<Token>,
    /// Raw argument strings that name dependency-producing steps.
    pub dep_refs: Vec<String>,
    /// True when the mapping is a flagged default (surfaced in reports).
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct OpMap {
    entries: BTreeMap<String, OpMapEntry>,
}

impl OpMap {
    /// Load a table from its JSON text, validating entries.
    pub fn load(text: &str) -> Result<OpMap, OpMapError> {
        let list: Vec<OpMapEntry> = serde_json::from_str(text)?;
        let mut entries = BTreeMap::new();
        for entry in list {
            let key = Token::new(&entry.raw_op).as_str().to_owned();
            for (slot, fixed, role) in [
                ("category", entry.category.is_some(), ArgRole::Category),
                ("attribute", entry.attribute.is_some(), ArgRole::Attribute),
                ("relation", entry.relation.is_some(), ArgRole::Relation),
            ] {
                if fixed && entry.arg_roles.contains(&role) {
                    return Err(OpMapError::SlotConflict {
                        raw_op: entry.raw_op.clone(),
                        slot,
                    });
                }
            }
            if entries.insert(key, entry.clone()).is_some() {
                return Err(OpMapError::DuplicateEntry(entry.raw_op));
            }
        }
        Ok(OpMap { entries })
    }

    /// The seed table shipped with the crate (~35 common operation names).
    pub fn builtin() -> OpMap {
        OpMap::load(include_str!("../data/gqa_ops.json")).expect("builtin table is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Map a raw operation and its positional arguments to a step template.
    pub fn normalize(&self, raw_name: &str, raw_args: &[&str]) -> Result<StepTemplate, OpMapError> {
        let key = Token::new(raw_name);
        let entry = self
            .entries
            .get(key.as_str())
            .ok_or_else(|| OpMapError::Unmapped(raw_name.to_owned()))?;
        if raw_args.len() != entry.arg_roles.len() {
            return Err(OpMapError::ArgArity {
                raw_op: raw_name.to_owned(),
                expected: entry.arg_roles.len(),
                got: raw_args.len(),
            });
        }
        let mut template = StepTemplate {
            kind: entry.kind,
            category: entry.category.clone(),
            attribute: entry.attribute.clone(),
            relation: entry.relation.clone(),
            dep_refs: Vec::new(),
            flagged: entry.flagged,
        };
        for (role, arg) in entry.arg_roles.iter().zip(raw_args) {
            match role {
                ArgRole::Category => template.category = Some(Token::new(arg)),
                ArgRole::Attribute => template.attribute = Some(Token::new(arg)),
                ArgRole::Relation => template.relation = Some(Token::new(arg)),
                ArgRole::Dep => template.dep_refs.push((*arg).to_owned()),
            }
        }
        Ok(template)
    }
}
