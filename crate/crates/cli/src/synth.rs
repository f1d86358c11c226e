//! Synthetic fixture corpora with known trace answers.
//!
//! Every question is generated from a ChaCha8 stream keyed by (seed,
//! question index), so corpora are reproducible item by item. Scenes place
//! objects on a cell grid of a 640x480 image, programs only reference
//! categories that exist in the scene, and the planted attention signals
//! are:
//! - a "correct" map with 80% of its mass inside the final step's ROI boxes
//!   and 20% spread across the background, both lightly dithered,
//! - an "incorrect" map of uniform noise,
//! - fixations that follow the same split per participant (correct
//!   participants look at the final ROI 80% of the time),
//! - proposals that include jittered copies of the ROI boxes among random
//!   background boxes.

use std::fs;
use std::path::{Path, PathBuf};

use aire_core::analytics::QuestionOutcome;
use aire_core::attention::{fixations_to_csv, AttentionMap, Fixation, Grid, MapSource, ProposalAttention};
use aire_core::program::{parse_program, serialize_program, ReasoningProgram};
use aire_core::roi::{build_cooccurrence, derive_roi_trace, RoiOptions, RoiTrace};
use aire_core::scene::{parse_scene_graph, BoundingBox, SceneGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::RunConfig;
use crate::dataset;
use crate::emit::canonical_json;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    pub seed: u64,
    pub count: usize,
    pub map_size: usize,
}

impl Default for SynthOptions {
    fn default() -> SynthOptions {
        SynthOptions {
            seed: 0,
            count: 10,
            map_size: 256,
        }
    }
}

pub const IMAGE_W: f64 = 640.0;
pub const IMAGE_H: f64 = 480.0;

const CATEGORIES: [&str; 12] = [
    "person", "dog", "cat", "car", "tree", "table", "chair", "cup", "bottle", "bag", "ball",
    "book",
];
const ATTRIBUTES: [&str; 8] = [
    "red", "blue", "green", "small", "large", "wooden", "shiny", "old",
];
const PREDICATES: [&str; 5] = ["near", "left of", "right of", "holding", "on"];

#[derive(Debug, Clone)]
pub struct SynthQuestion {
    pub question_id: String,
    pub image_id: String,
    pub graph: SceneGraph,
    pub program: ReasoningProgram,
    pub trace: RoiTrace,
    pub fixations: Vec<Fixation>,
    pub proposals: ProposalAttention,
    pub outcome: QuestionOutcome,
    pub correct_map: AttentionMap,
    pub incorrect_map: AttentionMap,
}

struct SceneSpec {
    categories: Vec<&'static str>,
    attributes: Vec<Vec<&'static str>>,
    graph: SceneGraph,
}

fn sample_distinct(rng: &mut ChaCha8Rng, pool: usize, n: usize) -> Vec<usize> {
    let mut left: Vec<usize> = (0..pool).collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.random_range(0..left.len());
        out.push(left.swap_remove(i));
    }
    out
}

fn build_scene(rng: &mut ChaCha8Rng, image_id: &str) -> SceneSpec {
    let n = rng.random_range(4..=8);
    let cells = sample_distinct(rng, 12, n);
    let cats = sample_distinct(rng, CATEGORIES.len(), n);

    let mut categories = Vec::with_capacity(n);
    let mut attributes = Vec::with_capacity(n);
    let mut objects = serde_json::Map::new();
    for (i, (&cell, &cat)) in cells.iter().zip(&cats).enumerate() {
        let col = (cell % 4) as f64;
        let row = (cell / 4) as f64;
        let w = rng.random_range(40.0..=90.0);
        let h = rng.random_range(40.0..=90.0);
        let x = col * 160.0 + rng.random_range(0.0..=(160.0 - w));
        let y = row * 160.0 + rng.random_range(0.0..=(160.0 - h));

        let n_attr = rng.random_range(1..=2);
        let attrs: Vec<&str> = sample_distinct(rng, ATTRIBUTES.len(), n_attr)
            .into_iter()
            .map(|a| ATTRIBUTES[a])
            .collect();

        let mut relations = Vec::new();
        if i > 0 && rng.random_bool(0.8) {
            let predicate = PREDICATES[rng.random_range(0..PREDICATES.len())];
            relations.push(serde_json::json!({
                "predicate": predicate,
                "target": format!("o{}", i - 1),
            }));
        }

        categories.push(CATEGORIES[cat]);
        attributes.push(attrs.clone());
        objects.insert(
            format!("o{i}"),
            serde_json::json!({
                "category": CATEGORIES[cat],
                "box": [x, y, w, h],
                "attributes": attrs,
                "relations": relations,
            }),
        );
    }

    let doc = serde_json::json!({
        "image_id": image_id,
        "width": IMAGE_W,
        "height": IMAGE_H,
        "objects": objects,
    });
    let graph = parse_scene_graph(&doc.to_string()).expect("generated scene graph is valid");
    SceneSpec {
        categories,
        attributes,
        graph,
    }
}

fn pick_attr(rng: &mut ChaCha8Rng) -> &'static str {
    ATTRIBUTES[rng.random_range(0..ATTRIBUTES.len())]
}

fn pick_pred(rng: &mut ChaCha8Rng) -> &'static str {
    PREDICATES[rng.random_range(0..PREDICATES.len())]
}

/// One of eight program shapes, 2 to 4 steps, always ending in an
/// answer-producing operation and only referencing scene categories.
fn build_program(rng: &mut ChaCha8Rng, scene: &SceneSpec) -> ReasoningProgram {
    let picks = sample_distinct(rng, scene.categories.len(), 3);
    let a = scene.categories[picks[0]];
    let b = scene.categories[picks[1]];
    let c = scene.categories[picks[2]];
    let a_attr = scene.attributes[picks[0]][0];

    let shape = rng.random_range(0..8);
    let text = match shape {
        0 => format!(
            "0: select(category={a})\n1: query(attribute={}) <- [0]\n",
            pick_attr(rng)
        ),
        1 => format!(
            "0: select(category={a})\n1: filter(attribute={a_attr}) <- [0]\n2: query(attribute={}) <- [1]\n",
            pick_attr(rng)
        ),
        2 => format!(
            "0: select(category={a})\n1: relate(category={b}, relation={}) <- [0]\n2: query(attribute={}) <- [1]\n",
            pick_pred(rng),
            pick_attr(rng)
        ),
        3 => format!(
            "0: select(category={a})\n1: select(category={b})\n2: and <- [0,1]\n3: verify(attribute={}) <- [2]\n",
            pick_attr(rng)
        ),
        4 => format!(
            "0: select(category={a})\n1: select(category={b})\n2: or <- [0,1]\n3: query(attribute={}) <- [2]\n",
            pick_attr(rng)
        ),
        5 => format!(
            "0: select(category={a})\n1: select(category={b})\n2: compare(attribute={}) <- [0,1]\n",
            pick_attr(rng)
        ),
        6 => format!(
            "0: select(category={a})\n1: relate(category={b}, relation={}) <- [0]\n2: relate(category={c}, relation={}) <- [1]\n3: verify(attribute={}) <- [2]\n",
            pick_pred(rng),
            pick_pred(rng),
            pick_attr(rng)
        ),
        _ => format!(
            "0: select(category={a})\n1: filter(attribute={a_attr}) <- [0]\n2: relate(category={b}, relation={}) <- [1]\n3: query(attribute={}) <- [2]\n",
            pick_pred(rng),
            pick_attr(rng)
        ),
    };
    parse_program(&text).expect("generated program is valid")
}

/// Boxes of every object in the final step's ROI groups.
pub fn final_roi_boxes(trace: &RoiTrace, g: &SceneGraph) -> Vec<BoundingBox> {
    let mut ids = std::collections::BTreeSet::new();
    if let Some(last) = trace.sets.last() {
        for group in &last.groups {
            ids.extend(group.iter());
        }
    }
    ids.iter()
        .filter_map(|id| g.object(id).map(|o| o.bbox))
        .collect()
}

/// Pixels whose centers land inside any box, image coordinates mapped onto
/// a `size x size` grid. Boxes too small to cover a center mark the pixel
/// under their own center instead.
fn roi_mask(boxes: &[BoundingBox], size: usize) -> Vec<bool> {
    let sx = size as f64 / IMAGE_W;
    let sy = size as f64 / IMAGE_H;
    let mut mask = vec![false; size * size];
    for b in boxes {
        let mut hit = false;
        for r in 0..size {
            let y = (r as f64 + 0.5) / sy;
            if y < b.y || y >= b.y + b.h {
                continue;
            }
            for c in 0..size {
                let x = (c as f64 + 0.5) / sx;
                if x >= b.x && x < b.x + b.w {
                    mask[r * size + c] = true;
                    hit = true;
                }
            }
        }
        if !hit {
            let cc = (((b.x + b.w / 2.0) * sx).floor().max(0.0) as usize).min(size - 1);
            let rr = (((b.y + b.h / 2.0) * sy).floor().max(0.0) as usize).min(size - 1);
            mask[rr * size + cc] = true;
        }
    }
    mask
}

fn planted_map(rng: &mut ChaCha8Rng, boxes: &[BoundingBox], size: usize) -> AttentionMap {
    let mask = roi_mask(boxes, size);
    let n_in = mask.iter().filter(|&&m| m).count();
    let n_out = size * size - n_in;
    let in_value = if n_in > 0 { 0.8 / n_in as f64 } else { 0.0 };
    let out_value = if n_out > 0 { 0.2 / n_out as f64 } else { 0.0 };

    let mut data = Vec::with_capacity(size * size);
    for &inside in &mask {
        let base = if inside { in_value } else { out_value };
        data.push(base * (1.0 + 0.1 * rng.random::<f64>()));
    }
    let grid = Grid::from_data(size, size, data).expect("planted grid is well-formed");
    let max = grid.max();
    AttentionMap {
        grid: grid.map(|v| v / max),
        source: MapSource::HumanCorrect,
        normalized: true,
    }
}

fn noise_map(rng: &mut ChaCha8Rng, size: usize) -> AttentionMap {
    let data: Vec<f64> = (0..size * size).map(|_| rng.random::<f64>()).collect();
    let grid = Grid::from_data(size, size, data).expect("noise grid is well-formed");
    let max = grid.max();
    AttentionMap {
        grid: grid.map(|v| v / max),
        source: MapSource::HumanIncorrect,
        normalized: true,
    }
}

fn build_fixations(
    rng: &mut ChaCha8Rng,
    question_id: &str,
    boxes: &[BoundingBox],
) -> (Vec<Fixation>, u32, u32) {
    let n_participants = rng.random_range(3..=5u32);
    let n_correct = rng.random_range(1..n_participants);

    let mut out = Vec::new();
    for p in 0..n_participants {
        let is_correct = p < n_correct;
        let n_fix = rng.random_range(8..=14);
        let mut t = 0.0;
        for _ in 0..n_fix {
            let (x, y) = if is_correct && !boxes.is_empty() && rng.random_bool(0.8) {
                let b = boxes[rng.random_range(0..boxes.len())];
                (
                    b.x + rng.random::<f64>() * b.w,
                    b.y + rng.random::<f64>() * b.h,
                )
            } else {
                (
                    rng.random::<f64>() * IMAGE_W,
                    rng.random::<f64>() * IMAGE_H,
                )
            };
            let duration = rng.random_range(150.0..=300.0);
            out.push(Fixation {
                question_id: question_id.to_owned(),
                participant_id: format!("p{p}"),
                x,
                y,
                start_ms: t,
                end_ms: t + duration,
                answer: if is_correct { "yes" } else { "no" }.to_owned(),
                is_correct,
            });
            t += duration;
        }
    }
    (out, n_correct, n_participants)
}

fn build_proposals(rng: &mut ChaCha8Rng, boxes: &[BoundingBox]) -> ProposalAttention {
    let mut raw: Vec<(BoundingBox, f64)> = Vec::new();
    for _ in 0..rng.random_range(8..=12) {
        let w = rng.random_range(40.0..=160.0);
        let h = rng.random_range(40.0..=160.0);
        let x = rng.random_range(0.0..=(IMAGE_W - w));
        let y = rng.random_range(0.0..=(IMAGE_H - h));
        raw.push((BoundingBox::new(x, y, w, h), rng.random_range(0.05..0.3)));
    }
    for b in boxes {
        let dx = rng.random_range(-10.0..=10.0);
        let dy = rng.random_range(-10.0..=10.0);
        let x = (b.x + dx).clamp(0.0, IMAGE_W - b.w);
        let y = (b.y + dy).clamp(0.0, IMAGE_H - b.h);
        raw.push((BoundingBox::new(x, y, b.w, b.h), rng.random_range(0.5..1.0)));
    }
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    for (_, w) in raw.iter_mut() {
        *w /= total;
    }
    ProposalAttention::new(raw).expect("generated proposals are valid")
}

/// Generate question `index` of the corpus keyed by `seed`.
pub fn generate_question(seed: u64, index: u64, map_size: usize) -> SynthQuestion {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);

    let question_id = format!("q{index:04}");
    let image_id = format!("img{index:04}");
    let scene = build_scene(&mut rng, &image_id);
    let program = build_program(&mut rng, &scene);
    let table = build_cooccurrence([&scene.graph]).expect("non-empty corpus");
    let trace = derive_roi_trace(&program, &scene.graph, &table, &RoiOptions::default())
        .expect("generated programs trace cleanly");

    let boxes = final_roi_boxes(&trace, &scene.graph);
    let correct_map = planted_map(&mut rng, &boxes, map_size);
    let incorrect_map = noise_map(&mut rng, map_size);
    let (fixations, n_correct, n_participants) =
        build_fixations(&mut rng, &question_id, &boxes);
    let proposals = build_proposals(&mut rng, &boxes);

    SynthQuestion {
        outcome: QuestionOutcome {
            question_id: question_id.clone(),
            performance: n_correct as f64 / n_participants as f64,
            n_participants: Some(n_participants),
        },
        question_id,
        image_id,
        graph: scene.graph,
        program,
        trace,
        fixations,
        proposals,
        correct_map,
        incorrect_map,
    }
}

pub fn generate_corpus(opts: &SynthOptions) -> Vec<SynthQuestion> {
    (0..opts.count)
        .map(|i| generate_question(opts.seed, i as u64, opts.map_size))
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    fs::write(path, bytes).map_err(|source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a complete corpus directory, including a ready-to-run config.
pub fn write_corpus(dir: &Path, opts: &SynthOptions) -> Result<Vec<SynthQuestion>, SynthError> {
    for sub in ["graphs", "programs", "proposals", "maps"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|source| SynthError::Io { path: p, source })?;
    }

    let questions = generate_corpus(opts);

    let mut refs = Vec::new();
    let mut outcomes = Vec::new();
    let mut fixations = Vec::new();
    for q in &questions {
        refs.push(dataset::QuestionRef {
            question_id: q.question_id.clone(),
            image_id: q.image_id.clone(),
        });
        outcomes.push(q.outcome.clone());
        fixations.extend(q.fixations.iter().cloned());

        write_file(
            &dataset::graph_path(&dir.join("graphs"), &q.image_id),
            q.graph.to_json().as_bytes(),
        )?;
        write_file(
            &dataset::program_path(&dir.join("programs"), &q.question_id),
            serialize_program(&q.program).as_bytes(),
        )?;
        let proposals: Vec<serde_json::Value> = q
            .proposals
            .proposals()
            .iter()
            .map(|(b, w)| serde_json::json!({ "box": b, "weight": w }))
            .collect();
        write_file(
            &dataset::proposals_path(&dir.join("proposals"), &q.question_id),
            canonical_json(&proposals).as_bytes(),
        )?;
    }

    write_file(&dir.join("questions.json"), canonical_json(&refs).as_bytes())?;
    write_file(&dir.join("outcomes.json"), canonical_json(&outcomes).as_bytes())?;
    write_file(&dir.join("fixations.csv"), fixations_to_csv(&fixations).as_bytes())?;

    let config = RunConfig {
        questions: Some(PathBuf::from("questions.json")),
        scene_graphs: Some(PathBuf::from("graphs")),
        programs: Some(PathBuf::from("programs")),
        fixations: Some(PathBuf::from("fixations.csv")),
        attention_maps: Some(PathBuf::from("maps")),
        proposals: Some(PathBuf::from("proposals")),
        outcomes: Some(PathBuf::from("outcomes.json")),
        out_dir: Some(PathBuf::from("out")),
        map_size: opts.map_size,
        ..RunConfig::default()
    };
    write_file(&dir.join("config.json"), canonical_json(&config).as_bytes())?;

    Ok(questions)
}
