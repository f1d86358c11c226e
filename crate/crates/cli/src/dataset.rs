//! Corpus layout and loaders.
//!
//! A corpus directory holds:
//! - `questions.json`: array of `{question_id, image_id}` bindings
//! - `graphs/<image_id>.json`: scene graphs
//! - `programs/<question_id>.prog`: reasoning programs in text form
//! - `fixations.csv`: all fixation records
//! - `maps/<question_id>__<source>.json|csv`: precomputed dense maps
//! - `proposals/<question_id>.json`: region proposals with weights
//! - `outcomes.json`: per-question task performance
//! - `cooccur.json`: optional prebuilt co-occurrence table

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use aire_core::attention::{
    parse_fixations, AttentionMap, Fixation, Grid, MapSource, ProposalAttention,
};
use aire_core::program::{parse_program, ReasoningProgram};
use aire_core::roi::{CooccurrenceTable, RoiTrace};
use aire_core::scene::{parse_scene_graph, SceneGraph};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Content { path: PathBuf, message: String },
    #[error("questions manifest {path}: duplicate question id {question_id:?}")]
    DuplicateQuestion { path: PathBuf, question_id: String },
    #[error("map file {path}: expected a <question>__<source>.json|csv name")]
    MapFilename { path: PathBuf },
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn content_err(path: &Path, message: impl ToString) -> DatasetError {
    DatasetError::Content {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Fail early when an input directory is missing or not a directory.
pub fn require_dir(path: &Path) -> Result<(), DatasetError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(DatasetError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "not a readable directory",
            ),
        })
    }
}

/// One manifest entry binding a question to its image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRef {
    pub question_id: String,
    pub image_id: String,
}

/// Load the manifest, reject duplicate ids, and sort by question id.
pub fn load_questions(path: &Path) -> Result<Vec<QuestionRef>, DatasetError> {
    let text = read(path)?;
    let mut refs: Vec<QuestionRef> =
        serde_json::from_str(&text).map_err(|e| content_err(path, e))?;
    refs.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    for pair in refs.windows(2) {
        if pair[0].question_id == pair[1].question_id {
            return Err(DatasetError::DuplicateQuestion {
                path: path.to_path_buf(),
                question_id: pair[0].question_id.clone(),
            });
        }
    }
    Ok(refs)
}

pub fn graph_path(dir: &Path, image_id: &str) -> PathBuf {
    dir.join(format!("{image_id}.json"))
}

pub fn load_graph(dir: &Path, image_id: &str) -> Result<SceneGraph, DatasetError> {
    let path = graph_path(dir, image_id);
    let text = read(&path)?;
    parse_scene_graph(&text).map_err(|e| content_err(&path, e))
}

pub fn program_path(dir: &Path, question_id: &str) -> PathBuf {
    dir.join(format!("{question_id}.prog"))
}

pub fn load_program(dir: &Path, question_id: &str) -> Result<ReasoningProgram, DatasetError> {
    let path = program_path(dir, question_id);
    let text = read(&path)?;
    parse_program(&text).map_err(|e| content_err(&path, e))
}

pub fn load_fixations_file(path: &Path) -> Result<Vec<Fixation>, DatasetError> {
    let text = read(path)?;
    parse_fixations(text.as_bytes()).map_err(|e| content_err(path, e))
}

/// Scan a dense-map directory. Filenames must look like
/// `<question>__<source>.json` or `.csv`; anything else is a layout error,
/// except a `manifest.json` left behind by the map-writing tools.
pub fn scan_dense_maps(
    dir: &Path,
) -> Result<BTreeMap<String, Vec<(MapSource, PathBuf)>>, DatasetError> {
    let mut out: BTreeMap<String, Vec<(MapSource, PathBuf)>> = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| DatasetError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_file() && path.file_name().is_some_and(|n| n != "manifest.json") {
            paths.push(path);
        }
    }
    paths.sort();
    for path in paths {
        let (question_id, source) = parse_map_filename(&path)?;
        out.entry(question_id).or_default().push((source, path));
    }
    Ok(out)
}

pub fn parse_map_filename(path: &Path) -> Result<(String, MapSource), DatasetError> {
    let bad = || DatasetError::MapFilename {
        path: path.to_path_buf(),
    };
    let ext = path.extension().and_then(|e| e.to_str()).ok_or_else(bad)?;
    if ext != "json" && ext != "csv" {
        return Err(bad());
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).ok_or_else(bad)?;
    let (question_id, source) = stem.rsplit_once("__").ok_or_else(bad)?;
    if question_id.is_empty() {
        return Err(bad());
    }
    let source: MapSource = source.parse().map_err(|()| bad())?;
    Ok((question_id.to_owned(), source))
}

/// Load a dense map and rescale it so its maximum is 1 (a no-op for maps
/// that already are; scoring standardizes anyway).
pub fn load_dense_map(path: &Path, source: MapSource) -> Result<AttentionMap, DatasetError> {
    let text = read(path)?;
    let is_csv = path.extension().and_then(|e| e.to_str()) == Some("csv");
    let grid = if is_csv {
        Grid::from_csv(&text)
    } else {
        Grid::from_json(&text)
    }
    .map_err(|e| content_err(path, e))?;
    grid.validate_attention().map_err(|e| content_err(path, e))?;
    let max = grid.max();
    let grid = if max > 0.0 { grid.map(|v| v / max) } else { grid };
    Ok(AttentionMap {
        grid,
        source,
        normalized: true,
    })
}

pub fn proposals_path(dir: &Path, question_id: &str) -> PathBuf {
    dir.join(format!("{question_id}.json"))
}

/// `Ok(None)` when the question simply has no proposal file.
pub fn load_proposals(
    dir: &Path,
    question_id: &str,
) -> Result<Option<ProposalAttention>, DatasetError> {
    let path = proposals_path(dir, question_id);
    if !path.is_file() {
        return Ok(None);
    }
    let text = read(&path)?;
    ProposalAttention::from_json(&text)
        .map(Some)
        .map_err(|e| content_err(&path, e))
}

pub fn load_outcomes(
    path: &Path,
) -> Result<Vec<aire_core::analytics::QuestionOutcome>, DatasetError> {
    let text = read(path)?;
    let outcomes: Vec<aire_core::analytics::QuestionOutcome> =
        serde_json::from_str(&text).map_err(|e| content_err(path, e))?;
    aire_core::analytics::validate_outcomes(&outcomes).map_err(|e| content_err(path, e))?;
    Ok(outcomes)
}

pub fn load_cooccurrence(path: &Path) -> Result<CooccurrenceTable, DatasetError> {
    let text = read(path)?;
    CooccurrenceTable::from_json(&text).map_err(|e| content_err(path, e))
}

pub fn load_trace(path: &Path) -> Result<RoiTrace, DatasetError> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| content_err(path, e))
}

/// JSON value for a dense grid, matching `Grid::from_json`.
pub fn grid_to_value(grid: &Grid) -> serde_json::Value {
    serde_json::json!({
        "h": grid.h(),
        "w": grid.w(),
        "data": grid.data(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn questions_load_sorted_and_unique() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("questions.json");
        fs::write(
            &path,
            r#"[{"question_id":"q2","image_id":"i2"},{"question_id":"q1","image_id":"i1"}]"#,
        )
        .unwrap();
        let refs = load_questions(&path).unwrap();
        assert_eq!(refs[0].question_id, "q1");
        assert_eq!(refs[1].question_id, "q2");

        fs::write(
            &path,
            r#"[{"question_id":"q1","image_id":"a"},{"question_id":"q1","image_id":"b"}]"#,
        )
        .unwrap();
        assert!(matches!(
            load_questions(&path),
            Err(DatasetError::DuplicateQuestion { .. })
        ));
    }

    #[test]
    fn map_filenames_parse_or_get_rejected() {
        let ok = parse_map_filename(Path::new("maps/q07__human-correct.json")).unwrap();
        assert_eq!(ok.0, "q07");
        assert_eq!(ok.1, MapSource::HumanCorrect);

        let ok = parse_map_filename(Path::new("deep__id__machine.csv")).unwrap();
        assert_eq!(ok.0, "deep__id");
        assert_eq!(ok.1, MapSource::Machine);

        for bad in [
            "q07.json",
            "q07__machine.txt",
            "q07__nonsense.json",
            "__machine.json",
            "q07__machine",
        ] {
            assert!(parse_map_filename(Path::new(bad)).is_err(), "accepted {bad}");
        }
    }

    #[test]
    fn dense_maps_load_from_json_and_csv_and_normalize() {
        let dir = tempfile::tempdir().unwrap();
        let jpath = dir.path().join("q__machine.json");
        fs::write(&jpath, r#"{"h":1,"w":2,"data":[1.0,4.0]}"#).unwrap();
        let m = load_dense_map(&jpath, MapSource::Machine).unwrap();
        assert_eq!(m.grid.data(), &[0.25, 1.0]);
        assert_eq!(m.source, MapSource::Machine);

        let cpath = dir.path().join("q__human-total.csv");
        fs::write(&cpath, "0.0,2.0\n2.0,0.0\n").unwrap();
        let m = load_dense_map(&cpath, MapSource::HumanTotal).unwrap();
        assert_eq!(m.grid.data(), &[0.0, 1.0, 1.0, 0.0]);

        let bad = dir.path().join("q__machine2.json");
        fs::write(&bad, r#"{"h":1,"w":1,"data":[-1.0]}"#).unwrap();
        assert!(load_dense_map(&bad, MapSource::Machine).is_err());
    }

    #[test]
    fn dense_map_scan_groups_by_question() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("q1__machine.json"), "{}").unwrap();
        fs::write(dir.path().join("q1__human-total.json"), "{}").unwrap();
        fs::write(dir.path().join("q2__machine.csv"), "").unwrap();
        let scan = scan_dense_maps(dir.path()).unwrap();
        assert_eq!(scan.len(), 2);
        assert_eq!(scan["q1"].len(), 2);
        assert_eq!(scan["q2"].len(), 1);

        fs::write(dir.path().join("stray.json"), "{}").unwrap();
        assert!(matches!(
            scan_dense_maps(dir.path()),
            Err(DatasetError::MapFilename { .. })
        ));
    }

    #[test]
    fn graph_and_program_files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let graphs = dir.path().join("graphs");
        let programs = dir.path().join("programs");
        fs::create_dir_all(&graphs).unwrap();
        fs::create_dir_all(&programs).unwrap();

        let graph_json = r#"{
            "image_id": "i1",
            "width": 100.0,
            "height": 80.0,
            "objects": {
                "o1": {"category": "dog", "box": [10.0, 10.0, 20.0, 20.0],
                       "attributes": ["small"], "relations": []}
            }
        }"#;
        fs::write(graphs.join("i1.json"), graph_json).unwrap();
        let g = load_graph(&graphs, "i1").unwrap();
        assert_eq!(g.image_id, "i1");
        assert_eq!(g.objects.len(), 1);

        fs::write(
            programs.join("q1.prog"),
            "0: select(category=dog)\n1: query(attribute=color) <- [0]\n",
        )
        .unwrap();
        let p = load_program(&programs, "q1").unwrap();
        assert_eq!(p.steps.len(), 2);

        assert!(load_graph(&graphs, "missing").is_err());
        assert!(load_program(&programs, "missing").is_err());
    }

    #[test]
    fn grid_value_roundtrips_through_core_parser() {
        let grid = Grid::from_data(2, 2, vec![0.0, 0.5, 1.0, 0.25]).unwrap();
        let text = crate::emit::canonical_json(&grid_to_value(&grid));
        let back = Grid::from_json(&text).unwrap();
        assert_eq!(back.data(), grid.data());
    }
}
