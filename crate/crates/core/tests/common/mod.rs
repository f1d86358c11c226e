//! Random scene graphs and random valid programs for property tests.

use aire_core::program::{OpKind, ReasoningProgram, Step};
use aire_core::scene::{parse_scene_graph, SceneGraph, Token};
use rand::Rng;

pub const GRAPH_CATEGORIES: [&str; 5] = ["cat", "dog", "tree", "car", "ball"];
pub const ATTRIBUTES: [&str; 3] = ["red", "small", "shiny"];
pub const PREDICATES: [&str; 2] = ["near", "holding"];
/// Categories no generated graph ever contains, for exercising fallback.
pub const PHANTOM_CATEGORIES: [&str; 2] = ["unicorn", "wisp"];

pub fn random_graph(rng: &mut impl Rng) -> SceneGraph {
    let n = rng.random_range(1..=6);
    let mut objects = serde_json::Map::new();
    for i in 0..n {
        let category = GRAPH_CATEGORIES[rng.random_range(0..GRAPH_CATEGORIES.len())];
        let x = rng.random_range(0.0..70.0);
        let y = rng.random_range(0.0..70.0);
        let w = rng.random_range(5.0..25.0);
        let h = rng.random_range(5.0..25.0);
        let attributes: Vec<&str> = ATTRIBUTES
            .iter()
            .filter(|_| rng.random_bool(0.4))
            .copied()
            .collect();
        let mut relations = Vec::new();
        for _ in 0..rng.random_range(0..=2) {
            let target = format!("o{}", rng.random_range(0..n));
            let predicate = PREDICATES[rng.random_range(0..PREDICATES.len())];
            relations.push(serde_json::json!({"predicate": predicate, "target": target}));
        }
        objects.insert(
            format!("o{i}"),
            serde_json::json!({
                "category": category,
                "box": [x, y, w, h],
                "attributes": attributes,
                "relations": relations,
            }),
        );
    }
    let doc = serde_json::json!({
        "image_id": "synthetic",
        "width": 100.0,
        "height": 100.0,
        "objects": objects,
    });
    parse_scene_graph(&doc.to_string()).expect("generated graph is valid")
}

fn random_category(rng: &mut impl Rng) -> Token {
    // mostly real categories, sometimes one the graph cannot contain
    if rng.random_bool(0.25) {
        Token::new(PHANTOM_CATEGORIES[rng.random_range(0..PHANTOM_CATEGORIES.len())])
    } else {
        Token::new(GRAPH_CATEGORIES[rng.random_range(0..GRAPH_CATEGORIES.len())])
    }
}

fn random_attribute(rng: &mut impl Rng) -> Token {
    Token::new(ATTRIBUTES[rng.random_range(0..ATTRIBUTES.len())])
}

fn take_roots(roots: &mut Vec<usize>, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut taken = Vec::with_capacity(count);
    for _ in 0..count {
        let at = rng.random_range(0..roots.len());
        taken.push(roots.remove(at));
    }
    taken.sort_unstable();
    taken
}

/// Build a random program that passes validation: args match each kind's
/// arity and every step feeds (transitively) into the final one.
pub fn random_program(rng: &mut impl Rng) -> ReasoningProgram {
    let len = rng.random_range(1..=5);
    let mut steps: Vec<Step> = Vec::with_capacity(len);
    // steps produced but not yet consumed by a later step
    let mut roots: Vec<usize> = Vec::new();

    for index in 0..len {
        let remaining = len - index - 1;
        let mut viable: Vec<OpKind> = Vec::new();
        if remaining > 0 {
            viable.push(OpKind::Select);
            if !roots.is_empty() {
                viable.extend([OpKind::Filter, OpKind::Query, OpKind::Verify, OpKind::Relate]);
            }
            if roots.len() >= 2 {
                viable.extend([OpKind::And, OpKind::Or, OpKind::Compare]);
            }
        } else {
            // the last step must leave exactly itself as the only root
            match roots.len() {
                0 => viable.push(OpKind::Select),
                1 => viable.extend([OpKind::Filter, OpKind::Query, OpKind::Verify, OpKind::Relate]),
                _ => viable.extend([OpKind::And, OpKind::Or, OpKind::Compare]),
            }
        }
        let kind = viable[rng.random_range(0..viable.len())];

        let step = match kind {
            OpKind::Select => Step {
                index,
                kind,
                category: Some(random_category(rng)),
                attribute: None,
                relation: None,
                deps: Vec::new(),
            },
            OpKind::Filter => Step {
                index,
                kind,
                category: None,
                attribute: Some(random_attribute(rng)),
                relation: None,
                deps: take_roots(&mut roots, 1, rng),
            },
            OpKind::Query | OpKind::Verify => Step {
                index,
                kind,
                category: rng.random_bool(0.5).then(|| random_category(rng)),
                attribute: Some(random_attribute(rng)),
                relation: None,
                deps: take_roots(&mut roots, 1, rng),
            },
            OpKind::Relate => Step {
                index,
                kind,
                category: Some(random_category(rng)),
                attribute: None,
                relation: Some(Token::new(PREDICATES[rng.random_range(0..PREDICATES.len())])),
                deps: take_roots(&mut roots, 1, rng),
            },
            OpKind::And | OpKind::Or | OpKind::Compare => {
                let max = roots.len();
                let count = if remaining == 0 {
                    max
                } else {
                    rng.random_range(2..=max)
                };
                Step {
                    index,
                    kind,
                    category: None,
                    attribute: (kind == OpKind::Compare).then(|| random_attribute(rng)),
                    relation: None,
                    deps: take_roots(&mut roots, count, rng),
                }
            }
        };
        steps.push(step);
        roots.push(index);
    }

    ReasoningProgram { steps }
}
