//! Walks a reasoning program over a scene graph to find the regions of
//! interest for each step.
//!
//! Every step yields one or more groups of object ids (the sets a correct
//! attention process should visit at that step) and an *output* set that
//! downstream steps consume:
//!
//! * `select` looks up its category; the group and the output are that set.
//! * `filter` keeps the objects of its input that carry the attribute.
//! * `query` / `verify` pass their input through, restricted to the step's
//!   category when one is given.
//! * `relate` has two groups: the input it relates from, and the objects of
//!   the related category. Its output is the category group alone, since the
//!   newly related referent is what later steps reason about. That is what
//!   makes a chain like "jeans, then the girl wearing them, then the bag to
//!   her left" narrow down instead of accumulating.
//! * `and` / `compare` keep one group per dependency; `or` merges its
//!   dependencies into a single group. These output the union.
//!
//! A category lookup that finds nothing in the scene falls back to the
//! objects of the top-k categories that co-occur with the missing one in the
//! corpus (k = 20 by default), mirroring how people scan plausible context
//! when the referent is absent. Attribute filters never fall back: an empty
//! filter result is kept and flagged downstream.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::{validate_program, OpKind, ReasoningProgram, Violation};
use crate::scene::{has_attribute, ObjectId, SceneGraph, Token};

#[derive(Debug, Error)]
pub enum RoiError {
    #[error("co-occurrence corpus is empty")]
    EmptyCorpus,
    #[error("invalid program: {0:?}")]
    InvalidProgram(Vec<Violation>),
    #[error("k must be at least 1")]
    BadK,
    #[error("co-occurrence table is not valid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("co-occurrence count pairs a category with itself: {0:?}")]
    SelfPair(String),
    #[error("co-occurrence count references unlisted category {0:?}")]
    UnknownCategory(String),
    #[error("duplicate co-occurrence pair ({0:?}, {1:?})")]
    DuplicatePair(String, String),
    #[error("step {step} dependency {dep} has no derived output (internal bug)")]
    UnresolvedDep { step: usize, dep: usize },
}

/// How often two categories appear in the same scene, over a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceTable {
    categories: BTreeSet<Token>,
    counts: BTreeMap<(Token, Token), u64>,
    /// Per category, co-occurring categories ranked count desc, ties
    /// lexicographic. Zero-count pairs are not neighbors.
    neighbors: BTreeMap<Token, Vec<Token>>,
}

impl CooccurrenceTable {
    fn build(categories: BTreeSet<Token>, counts: BTreeMap<(Token, Token), u64>) -> CooccurrenceTable {
        let mut ranked: BTreeMap<Token, Vec<(u64, Token)>> = BTreeMap::new();
        for ((a, b), n) in &counts {
            ranked.entry(a.clone()).or_default().push((*n, b.clone()));
            ranked.entry(b.clone()).or_default().push((*n, a.clone()));
        }
        let neighbors = ranked
            .into_iter()
            .map(|(cat, mut list)| {
                list.sort_by(|(na, ta), (nb, tb)| nb.cmp(na).then_with(|| ta.cmp(tb)));
                (cat, list.into_iter().map(|(_, t)| t).collect())
            })
            .collect();
        CooccurrenceTable {
            categories,
            counts,
            neighbors,
        }
    }

    /// Symmetric lookup; 0 when the pair never co-occurred (or a == b).
    pub fn count(&self, a: &Token, b: &Token) -> u64 {
        if a == b {
            return 0;
        }
        let key = if a < b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        self.counts.get(&key).copied().unwrap_or(0)
    }

    /// Is the category part of the corpus vocabulary?
    pub fn knows(&self, category: &Token) -> bool {
        self.categories.contains(category)
    }

    /// Ranked co-occurring categories (count desc, ties lexicographic).
    pub fn neighbors(&self, category: &Token) -> &[Token] {
        self.neighbors.get(category).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn categories(&self) -> &BTreeSet<Token> {
        &self.categories
    }

    pub fn to_json(&self) -> String {
        let doc = TableDoc {
            categories: self.categories.iter().cloned().collect(),
            counts: self
                .counts
                .iter()
                .map(|((a, b), n)| (a.clone(), b.clone(), *n))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("table doc serializes")
    }

    pub fn from_json(text: &str) -> Result<CooccurrenceTable, RoiError> {
        let doc: TableDoc = serde_json::from_str(text)?;
        let categories: BTreeSet<Token> = doc.categories.into_iter().collect();
        let mut counts = BTreeMap::new();
        for (a, b, n) in doc.counts {
            if a == b {
                return Err(RoiError::SelfPair(a.as_str().to_owned()));
            }
            for t in [&a, &b] {
                if !categories.contains(t) {
                    return Err(RoiError::UnknownCategory(t.as_str().to_owned()));
                }
            }
            let key = if a < b { (a, b) } else { (b, a) };
            if n == 0 {
                continue;
            }
            if counts.insert(key.clone(), n).is_some() {
                return Err(RoiError::DuplicatePair(
                    key.0.as_str().to_owned(),
                    key.1.as_str().to_owned(),
                ));
            }
        }
        Ok(CooccurrenceTable::build(categories, counts))
    }
}

#[derive(Serialize, Deserialize)]
struct TableDoc {
    categories: Vec<Token>,
    counts: Vec<(Token, Token, u64)>,
}

/// Count pairwise scene-level co-occurrence across a graph corpus.
pub fn build_cooccurrence<'a, I>(corpus: I) -> Result<CooccurrenceTable, RoiError>
where
    I: IntoIterator<Item = &'a SceneGraph>,
{
    let mut categories = BTreeSet::new();
    let mut counts: BTreeMap<(Token, Token), u64> = BTreeMap::new();
    let mut any = false;
    for graph in corpus {
        any = true;
        let present: Vec<Token> = graph.categories().into_iter().collect();
        categories.extend(present.iter().cloned());
        for (i, a) in present.iter().enumerate() {
            for b in &present[i + 1..] {
                // present is sorted, so (a, b) is already ordered
                *counts.entry((a.clone(), b.clone())).or_insert(0) += 1;
            }
        }
    }
    if !any {
        return Err(RoiError::EmptyCorpus);
    }
    Ok(CooccurrenceTable::build(categories, counts))
}

#[derive(Debug, Clone, Copy)]
pub struct RoiOptions {
    /// Neighbor budget for the missing-category fallback.
    pub k: usize,
    /// Non-canonical: restrict relate's category group to objects actually
    /// linked to the input by an edge with the step's predicate.
    pub strict_relate: bool,
}

impl Default for RoiOptions {
    fn default() -> RoiOptions {
        RoiOptions {
            k: 20,
            strict_relate: false,
        }
    }
}

/// ROI groups for one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiSet {
    pub step: usize,
    pub groups: Vec<BTreeSet<ObjectId>>,
    pub fallback_used: bool,
}

/// Per-step ROI groups for a whole program. Carries the program so a trace
/// document is self-contained for scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiTrace {
    pub program: ReasoningProgram,
    pub sets: Vec<RoiSet>,
}

/// Objects standing in for a category absent from the scene: everything in
/// the graph whose category ranks in the top-k co-occurring neighbors of the
/// missing one. A category the table has never seen degenerates to all
/// objects in the graph.
pub fn fallback_rois(
    g: &SceneGraph,
    t: &CooccurrenceTable,
    missing_category: &Token,
    k: usize,
) -> BTreeSet<ObjectId> {
    if !t.knows(missing_category) {
        return g.objects.keys().cloned().collect();
    }
    let top: BTreeSet<&Token> = t.neighbors(missing_category).iter().take(k).collect();
    g.objects
        .values()
        .filter(|o| top.contains(&o.category))
        .map(|o| o.id.clone())
        .collect()
}

/// Derive per-step ROI groups for a validated program over a scene graph.
pub fn derive_roi_trace(
    p: &ReasoningProgram,
    g: &SceneGraph,
    t: &CooccurrenceTable,
    opts: &RoiOptions,
) -> Result<RoiTrace, RoiError> {
    if opts.k == 0 {
        return Err(RoiError::BadK);
    }
    let violations = validate_program(p);
    if !violations.is_empty() {
        return Err(RoiError::InvalidProgram(violations));
    }

    let mut sets: Vec<RoiSet> = Vec::with_capacity(p.steps.len());
    let mut outputs: Vec<BTreeSet<ObjectId>> = Vec::with_capacity(p.steps.len());

    for (i, step) in p.steps.iter().enumerate() {
        let dep_output = |d: usize| -> Result<&BTreeSet<ObjectId>, RoiError> {
            outputs.get(d).ok_or(RoiError::UnresolvedDep { step: i, dep: d })
        };

        let mut fallback_used = false;
        // category lookup with the missing-category fallback
        let lookup = |cat: &Token, fallback_used: &mut bool| -> BTreeSet<ObjectId> {
            let found = g.objects_by_category(cat);
            if found.is_empty() {
                *fallback_used = true;
                fallback_rois(g, t, cat, opts.k)
            } else {
                found
            }
        };

        let (groups, output) = match step.kind {
            OpKind::Select => {
                let set = lookup(step.category.as_ref().expect("validated"), &mut fallback_used);
                (vec![set.clone()], set)
            }
            OpKind::Filter => {
                let attr = step.attribute.as_ref().expect("validated");
                let input = dep_output(step.deps[0])?;
                let set: BTreeSet<ObjectId> = input
                    .iter()
                    .filter(|id| g.object(id).map(|o| has_attribute(o, attr)).unwrap_or(false))
                    .cloned()
                    .collect();
                (vec![set.clone()], set)
            }
            OpKind::Query | OpKind::Verify => {
                let input = dep_output(step.deps[0])?.clone();
                let set = match &step.category {
                    Some(cat) => {
                        if g.objects_by_category(cat).is_empty() {
                            fallback_used = true;
                            fallback_rois(g, t, cat, opts.k)
                        } else {
                            input
                                .iter()
                                .filter(|id| {
                                    g.object(id).map(|o| &o.category == cat).unwrap_or(false)
                                })
                                .cloned()
                                .collect()
                        }
                    }
                    None => input,
                };
                (vec![set.clone()], set)
            }
            OpKind::Relate => {
                let input = dep_output(step.deps[0])?.clone();
                let cat = step.category.as_ref().expect("validated");
                let mut related = lookup(cat, &mut fallback_used);
                if opts.strict_relate && !fallback_used {
                    let predicate = step.relation.as_ref().expect("validated");
                    related.retain(|id| edge_between(g, id, &input, predicate));
                }
                (vec![input, related.clone()], related)
            }
            OpKind::And | OpKind::Compare => {
                let mut groups = Vec::with_capacity(step.deps.len());
                let mut union = BTreeSet::new();
                for &d in &step.deps {
                    let set = dep_output(d)?.clone();
                    union.extend(set.iter().cloned());
                    groups.push(set);
                }
                (groups, union)
            }
            OpKind::Or => {
                let mut union = BTreeSet::new();
                for &d in &step.deps {
                    union.extend(dep_output(d)?.iter().cloned());
                }
                (vec![union.clone()], union)
            }
        };

        sets.push(RoiSet {
            step: i,
            groups,
            fallback_used,
        });
        outputs.push(output);
    }

    Ok(RoiTrace {
        program: p.clone(),
        sets,
    })
}

/// Any edge with this predicate between `id` and a member of `others`, in
/// either direction.
fn edge_between(g: &SceneGraph, id: &ObjectId, others: &BTreeSet<ObjectId>, predicate: &Token) -> bool {
    if let Some(obj) = g.object(id) {
        if obj
            .relations
            .iter()
            .any(|r| &r.predicate == predicate && others.contains(&r.target))
        {
            return true;
        }
    }
    others.iter().any(|other| {
        g.object(other)
            .map(|o| {
                o.relations
                    .iter()
                    .any(|r| &r.predicate == predicate && &r.target == id)
            })
            .unwrap_or(false)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{jeans_chain, parse_program};
    use crate::scene::{girl_jeans_bag, parse_scene_graph};

    fn ids(names: &[&str]) -> BTreeSet<ObjectId> {
        names.iter().map(|n| ObjectId::from(*n)).collect()
    }

    fn graph(objects: &str) -> SceneGraph {
        parse_scene_graph(&format!(
            r#"{{"image_id":"t","width":100,"height":100,"objects":{{{objects}}}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn single_graph_counts() {
        let g = graph(
            r#""a":{"category":"car","box":[0,0,10,10]},
               "b":{"category":"road","box":[20,20,10,10]}"#,
        );
        let t = build_cooccurrence([&g]).unwrap();
        let (car, road) = (Token::new("car"), Token::new("road"));
        assert_eq!(t.count(&car, &road), 1);
        assert_eq!(t.count(&road, &car), 1);
        assert_eq!(t.count(&car, &car), 0);
    }

    #[test]
    fn neighbor_ties_break_lexicographically() {
        let g1 = graph(
            r#""a":{"category":"car","box":[0,0,10,10]},
               "b":{"category":"road","box":[20,20,10,10]}"#,
        );
        let g2 = graph(
            r#""a":{"category":"car","box":[0,0,10,10]},
               "b":{"category":"tree","box":[20,20,10,10]}"#,
        );
        let t = build_cooccurrence([&g1, &g2]).unwrap();
        let car = Token::new("car");
        assert_eq!(
            t.neighbors(&car),
            &[Token::new("road"), Token::new("tree")]
        );
    }

    #[test]
    fn duplicate_categories_count_once_per_graph() {
        let g = graph(
            r#""a":{"category":"car","box":[0,0,10,10]},
               "b":{"category":"car","box":[20,20,10,10]},
               "c":{"category":"road","box":[40,40,10,10]}"#,
        );
        let t = build_cooccurrence([&g]).unwrap();
        assert_eq!(t.count(&Token::new("car"), &Token::new("road")), 1);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(build_cooccurrence([]), Err(RoiError::EmptyCorpus)));
    }

    #[test]
    fn table_roundtrips_through_json() {
        let g1 = graph(
            r#""a":{"category":"car","box":[0,0,10,10]},
               "b":{"category":"road","box":[20,20,10,10]},
               "c":{"category":"tree","box":[40,40,10,10]}"#,
        );
        let t = build_cooccurrence([&g1]).unwrap();
        let again = CooccurrenceTable::from_json(&t.to_json()).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn jeans_chain_trace_narrows_to_the_bag() {
        let g = girl_jeans_bag();
        let t = build_cooccurrence([&g]).unwrap();
        let trace = derive_roi_trace(&jeans_chain(), &g, &t, &RoiOptions::default()).unwrap();

        assert_eq!(trace.sets.len(), 4);
        assert_eq!(trace.sets[0].groups, vec![ids(&["o_jeans"])]);
        assert_eq!(
            trace.sets[1].groups,
            vec![ids(&["o_jeans"]), ids(&["o_girl"])]
        );
        assert_eq!(
            trace.sets[2].groups,
            vec![ids(&["o_girl"]), ids(&["o_bag"])]
        );
        assert_eq!(trace.sets[3].groups, vec![ids(&["o_bag"])]);
        assert!(trace.sets.iter().all(|s| !s.fallback_used));
    }

    #[test]
    fn filter_keeps_only_attribute_holders() {
        let g = graph(
            r#""r":{"category":"ball","box":[0,0,10,10],"attributes":["red"]},
               "b":{"category":"ball","box":[20,20,10,10],"attributes":["blue"]}"#,
        );
        let t = build_cooccurrence([&g]).unwrap();
        let p = parse_program(
            "0: select(category=ball)\n1: filter(attribute=red) <- [0]\n\
             2: query(attribute=color) <- [1]\n",
        )
        .unwrap();
        let trace = derive_roi_trace(&p, &g, &t, &RoiOptions::default()).unwrap();
        assert_eq!(trace.sets[0].groups, vec![ids(&["b", "r"])]);
        assert_eq!(trace.sets[1].groups, vec![ids(&["r"])]);
        assert_eq!(trace.sets[2].groups, vec![ids(&["r"])]);
    }

    #[test]
    fn filter_may_empty_without_fallback() {
        let g = graph(r#""b":{"category":"ball","box":[0,0,10,10],"attributes":["blue"]}"#);
        let t = build_cooccurrence([&g]).unwrap();
        let p = parse_program(
            "0: select(category=ball)\n1: filter(attribute=red) <- [0]\n",
        )
        .unwrap();
        let trace = derive_roi_trace(&p, &g, &t, &RoiOptions::default()).unwrap();
        assert_eq!(trace.sets[1].groups, vec![BTreeSet::new()]);
        assert!(!trace.sets[1].fallback_used);
    }

    #[test]
    fn and_keeps_one_group_per_dep_or_merges() {
        let g = graph(
            r#""a":{"category":"cup","box":[0,0,10,10]},
               "b":{"category":"plate","box":[20,20,10,10]}"#,
        );
        let t = build_cooccurrence([&g]).unwrap();
        let and = parse_program("0: select(category=cup)\n1: select(category=plate)\n2: and <- [0,1]\n").unwrap();
        let trace = derive_roi_trace(&and, &g, &t, &RoiOptions::default()).unwrap();
        assert_eq!(trace.sets[2].groups, vec![ids(&["a"]), ids(&["b"])]);

        let or = parse_program("0: select(category=cup)\n1: select(category=plate)\n2: or <- [0,1]\n").unwrap();
        let trace = derive_roi_trace(&or, &g, &t, &RoiOptions::default()).unwrap();
        assert_eq!(trace.sets[2].groups, vec![ids(&["a", "b"])]);
    }

    /// Pinned fallback fixture: neighbors(bottle) = [table, cup, chair] by
    /// construction, k=2 keeps {table, cup}, and only table objects exist.
    fn bottle_table() -> CooccurrenceTable {
        let mk = |os: &str| graph(os);
        let bottle_table = mk(
            r#""x":{"category":"bottle","box":[0,0,5,5]},
               "y":{"category":"table","box":[20,20,5,5]}"#,
        );
        let bottle_cup = mk(
            r#""x":{"category":"bottle","box":[0,0,5,5]},
               "y":{"category":"cup","box":[20,20,5,5]}"#,
        );
        let bottle_chair = mk(
            r#""x":{"category":"bottle","box":[0,0,5,5]},
               "y":{"category":"chair","box":[20,20,5,5]}"#,
        );
        // counts: bottle-table 3, bottle-cup 2, bottle-chair 1
        build_cooccurrence([
            &bottle_table,
            &bottle_table,
            &bottle_table,
            &bottle_cup,
            &bottle_cup,
            &bottle_chair,
        ])
        .unwrap()
    }

    #[test]
    fn fallback_takes_top_k_neighbors_present_in_graph() {
        let t = bottle_table();
        assert_eq!(
            t.neighbors(&Token::new("bottle")),
            &[Token::new("table"), Token::new("cup"), Token::new("chair")]
        );
        let g = graph(
            r#""t1":{"category":"table","box":[0,0,10,10]},
               "c1":{"category":"chair","box":[20,20,10,10]}"#,
        );
        let got = fallback_rois(&g, &t, &Token::new("bottle"), 2);
        assert_eq!(got, ids(&["t1"]));
    }

    #[test]
    fn fallback_for_unknown_category_returns_everything() {
        let t = bottle_table();
        let g = graph(
            r#""t1":{"category":"table","box":[0,0,10,10]},
               "c1":{"category":"chair","box":[20,20,10,10]},
               "d1":{"category":"dog","box":[40,40,10,10]}"#,
        );
        let got = fallback_rois(&g, &t, &Token::new("unicorn"), 2);
        assert_eq!(got.len(), 3);
    }

    #[test]
    fn select_of_missing_category_flags_fallback() {
        let t = bottle_table();
        let g = graph(
            r#""t1":{"category":"table","box":[0,0,10,10]},
               "c1":{"category":"chair","box":[20,20,10,10]}"#,
        );
        let p = parse_program("0: select(category=bottle)\n1: query(attribute=color) <- [0]\n").unwrap();
        let trace = derive_roi_trace(&p, &g, &t, &RoiOptions { k: 2, strict_relate: false }).unwrap();
        assert!(trace.sets[0].fallback_used);
        assert_eq!(trace.sets[0].groups, vec![ids(&["t1"])]);
        // query passes the fallback set through untouched
        assert!(!trace.sets[1].fallback_used);
        assert_eq!(trace.sets[1].groups, vec![ids(&["t1"])]);
    }

    #[test]
    fn query_with_category_restricts_the_input() {
        let g = graph(
            r#""d":{"category":"dog","box":[0,0,10,10]},
               "c":{"category":"cat","box":[20,20,10,10]}"#,
        );
        let t = build_cooccurrence([&g]).unwrap();
        let p = parse_program(
            "0: select(category=dog)\n1: select(category=cat)\n2: or <- [0,1]\n\
             3: query(attribute=name, category=dog) <- [2]\n",
        )
        .unwrap();
        let trace = derive_roi_trace(&p, &g, &t, &RoiOptions::default()).unwrap();
        assert_eq!(trace.sets[3].groups, vec![ids(&["d"])]);
        assert!(!trace.sets[3].fallback_used);
    }

    #[test]
    fn query_category_present_but_outside_input_stays_empty() {
        let g = graph(
            r#""d":{"category":"dog","box":[0,0,10,10]},
               "c":{"category":"cat","box":[20,20,10,10]}"#,
        );
        let t = build_cooccurrence([&g]).unwrap();
        let p = parse_program(
            "0: select(category=dog)\n1: query(attribute=name, category=cat) <- [0]\n",
        )
        .unwrap();
        let trace = derive_roi_trace(&p, &g, &t, &RoiOptions::default()).unwrap();
        // cat exists in the graph, so no fallback; it just isn't in the input
        assert_eq!(trace.sets[1].groups, vec![BTreeSet::new()]);
        assert!(!trace.sets[1].fallback_used);
    }

    #[test]
    fn relate_missing_category_falls_back_in_second_group() {
        let t = bottle_table();
        let g = graph(
            r#""t1":{"category":"table","box":[0,0,10,10]},
               "c1":{"category":"chair","box":[20,20,10,10]}"#,
        );
        let p = parse_program(
            "0: select(category=chair)\n\
             1: relate(category=bottle, relation=on) <- [0]\n",
        )
        .unwrap();
        let trace = derive_roi_trace(&p, &g, &t, &RoiOptions { k: 2, strict_relate: false }).unwrap();
        assert!(trace.sets[1].fallback_used);
        assert_eq!(trace.sets[1].groups, vec![ids(&["c1"]), ids(&["t1"])]);
    }

    #[test]
    fn strict_relate_filters_by_edges() {
        let g = graph(
            r#""g":{"category":"girl","box":[0,0,10,10],
                  "relations":[{"predicate":"wearing","target":"j1"}]},
               "j1":{"category":"jeans","box":[20,20,10,10]},
               "j2":{"category":"jeans","box":[40,40,10,10]}"#,
        );
        let t = build_cooccurrence([&g]).unwrap();
        let p = parse_program(
            "0: select(category=girl)\n\
             1: relate(category=jeans, relation=wearing) <- [0]\n",
        )
        .unwrap();
        let loose = derive_roi_trace(&p, &g, &t, &RoiOptions::default()).unwrap();
        assert_eq!(loose.sets[1].groups[1], ids(&["j1", "j2"]));

        let strict = derive_roi_trace(&p, &g, &t, &RoiOptions { k: 20, strict_relate: true }).unwrap();
        assert_eq!(strict.sets[1].groups[1], ids(&["j1"]));
        // edge direction doesn't matter
        let p_rev = parse_program(
            "0: select(category=jeans)\n\
             1: relate(category=girl, relation=wearing) <- [0]\n",
        )
        .unwrap();
        let strict_rev =
            derive_roi_trace(&p_rev, &g, &t, &RoiOptions { k: 20, strict_relate: true }).unwrap();
        assert_eq!(strict_rev.sets[1].groups[1], ids(&["g"]));
    }

    #[test]
    fn invalid_program_is_rejected() {
        let g = girl_jeans_bag();
        let t = build_cooccurrence([&g]).unwrap();
        let bad = ReasoningProgram {
            steps: vec![crate::program::Step {
                index: 0,
                kind: OpKind::Filter,
                category: None,
                attribute: Some(Token::new("red")),
                relation: None,
                deps: vec![],
            }],
        };
        assert!(matches!(
            derive_roi_trace(&bad, &g, &t, &RoiOptions::default()),
            Err(RoiError::InvalidProgram(_))
        ));
    }

    #[test]
    fn trace_roundtrips_through_json() {
        let g = girl_jeans_bag();
        let t = build_cooccurrence([&g]).unwrap();
        let trace = derive_roi_trace(&jeans_chain(), &g, &t, &RoiOptions::default()).unwrap();
        let text = serde_json::to_string(&trace).unwrap();
        let again: RoiTrace = serde_json::from_str(&text).unwrap();
        assert_eq!(trace, again);
    }
}
