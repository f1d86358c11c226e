//! The end-to-end evaluation pipeline behind `aire report`.
//!
//! Inputs are read once into shared read-only tables, questions are scored
//! on a worker pool, and results are ordered by question id regardless of
//! scheduling. Per-question failures land in an error ledger instead of
//! aborting the batch; only configuration and schema problems fail the run.
//!
//! Precomputed dense maps whose resolution differs from `map_size` are
//! resampled bilinearly before scoring so every map of a question competes
//! on the same grid.

use std::collections::BTreeMap;
use std::path::PathBuf;

use aire_core::analytics::{
    aggregate_temporal, answer_accuracy_stats, correlate_aire_with_performance,
    trials_from_fixations, AccuracyStats, CorrelationTable, TemporalAggregate, TemporalMatrix,
};
use aire_core::attention::{
    fixations_by_question, fixations_to_map, rasterize_proposal_attention,
    slice_fixations_temporal, AttentionMap, Fixation, MapSource,
};
use aire_core::metric::{score_temporal_matrix, score_trace, AirEReport};
use aire_core::program::ReasoningProgram;
use aire_core::roi::{build_cooccurrence, derive_roi_trace, CooccurrenceTable, RoiOptions};
use aire_core::scene::SceneGraph;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, OutputFormat, RunConfig};
use crate::dataset::{self, DatasetError, QuestionRef};
use crate::emit::{corpus_csv, correlations_csv, temporal_csv, Emitter};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("config: the {0} path is required for this command")]
    MissingPath(&'static str),
    #[error("analytics: {0}")]
    Analytics(#[from] aire_core::analytics::AnalyticsError),
    #[error("co-occurrence: {0}")]
    Cooccurrence(#[from] aire_core::roi::RoiError),
    #[error("cannot write output: {0}")]
    Write(#[from] std::io::Error),
}

/// One recorded per-question failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerEntry {
    pub question_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub n_questions: usize,
    /// All reports, ordered by (question id, map source).
    #[serde(skip)]
    pub reports: Vec<AirEReport>,
    pub correlations: BTreeMap<MapSource, CorrelationTable>,
    pub accuracy: Option<AccuracyStats>,
    pub temporal: TemporalAggregate,
    pub temporal_bins: Vec<(f64, f64)>,
    pub dropped_fixations: usize,
    pub ledger: Vec<LedgerEntry>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    opts: RoiOptions,
    graphs: BTreeMap<String, Result<SceneGraph, String>>,
    programs: BTreeMap<String, Result<ReasoningProgram, String>>,
    fixations: Option<BTreeMap<String, Vec<Fixation>>>,
    dense: BTreeMap<String, Vec<(MapSource, PathBuf)>>,
    proposals_dir: Option<PathBuf>,
    table: Option<CooccurrenceTable>,
}

#[derive(Default)]
struct QuestionOutput {
    ledger: Vec<LedgerEntry>,
    reports: Vec<AirEReport>,
    temporal: Option<TemporalMatrix>,
    dropped: usize,
}

pub fn run_evaluation(cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let questions_path = cfg
        .questions
        .as_ref()
        .ok_or(PipelineError::MissingPath("questions"))?;
    let graphs_dir = cfg
        .scene_graphs
        .as_ref()
        .ok_or(PipelineError::MissingPath("scene_graphs"))?;
    let programs_dir = cfg
        .programs
        .as_ref()
        .ok_or(PipelineError::MissingPath("programs"))?;

    let questions = dataset::load_questions(questions_path)?;
    let outcomes = cfg
        .outcomes
        .as_ref()
        .map(|p| dataset::load_outcomes(p))
        .transpose()?;

    if questions.is_empty() {
        return Ok(RunSummary {
            n_questions: 0,
            reports: Vec::new(),
            correlations: BTreeMap::new(),
            accuracy: outcomes
                .as_ref()
                .map(|o| answer_accuracy_stats(o, &[]))
                .transpose()?,
            temporal: aggregate_temporal(&[]),
            temporal_bins: cfg.temporal_bins.clone(),
            dropped_fixations: 0,
            ledger: Vec::new(),
        });
    }

    dataset::require_dir(graphs_dir)?;
    dataset::require_dir(programs_dir)?;

    let mut graphs = BTreeMap::new();
    for q in &questions {
        if !graphs.contains_key(&q.image_id) {
            let loaded = dataset::load_graph(graphs_dir, &q.image_id).map_err(|e| e.to_string());
            graphs.insert(q.image_id.clone(), loaded);
        }
    }
    let mut programs = BTreeMap::new();
    for q in &questions {
        let loaded =
            dataset::load_program(programs_dir, &q.question_id).map_err(|e| e.to_string());
        programs.insert(q.question_id.clone(), loaded);
    }

    let all_fixations = cfg
        .fixations
        .as_ref()
        .map(|p| dataset::load_fixations_file(p))
        .transpose()?;
    let fixations = all_fixations.as_ref().map(|f| fixations_by_question(f));

    let dense = match &cfg.attention_maps {
        Some(dir) if dir.is_dir() => dataset::scan_dense_maps(dir)?,
        _ => BTreeMap::new(),
    };

    let ok_graphs: Vec<&SceneGraph> = graphs.values().filter_map(|g| g.as_ref().ok()).collect();
    let table = match &cfg.cooccurrence {
        Some(path) => Some(dataset::load_cooccurrence(path)?),
        None if !ok_graphs.is_empty() => Some(build_cooccurrence(ok_graphs)?),
        None => None,
    };

    let ctx = Ctx {
        cfg,
        opts: RoiOptions {
            k: cfg.k,
            strict_relate: cfg.strict_relate,
        },
        graphs,
        programs,
        fixations,
        dense,
        proposals_dir: cfg.proposals.clone(),
        table,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .expect("worker pool construction cannot fail with validated jobs");
    let outputs: Vec<QuestionOutput> = pool.install(|| {
        questions
            .par_iter()
            .map(|q| process_question(q, &ctx))
            .collect()
    });

    let mut reports = Vec::new();
    let mut ledger = Vec::new();
    let mut matrices = Vec::new();
    let mut dropped = 0;
    for out in outputs {
        reports.extend(out.reports);
        ledger.extend(out.ledger);
        if let Some(m) = out.temporal {
            matrices.push(m);
        }
        dropped += out.dropped;
    }

    let mut correlations = BTreeMap::new();
    if let Some(outcomes) = &outcomes {
        for source in MapSource::ALL {
            let subset: Vec<AirEReport> = reports
                .iter()
                .filter(|r| r.source == source)
                .cloned()
                .collect();
            if subset.is_empty() {
                continue;
            }
            correlations.insert(source, correlate_aire_with_performance(&subset, outcomes)?);
        }
    }

    let accuracy = match (&outcomes, &all_fixations) {
        (Some(o), Some(f)) => Some(answer_accuracy_stats(o, &trials_from_fixations(f)?)?),
        (Some(o), None) => Some(answer_accuracy_stats(o, &[])?),
        (None, _) => None,
    };

    Ok(RunSummary {
        n_questions: questions.len(),
        reports,
        correlations,
        accuracy,
        temporal: aggregate_temporal(&matrices),
        temporal_bins: cfg.temporal_bins.clone(),
        dropped_fixations: dropped,
        ledger,
    })
}

fn process_question(q: &QuestionRef, ctx: &Ctx) -> QuestionOutput {
    let mut out = QuestionOutput::default();
    let fail = |out: &mut QuestionOutput, stage: &str, message: String| {
        out.ledger.push(LedgerEntry {
            question_id: q.question_id.clone(),
            stage: stage.to_owned(),
            message,
        });
    };

    let graph = match ctx.graphs.get(&q.image_id) {
        Some(Ok(g)) => g,
        Some(Err(msg)) => {
            fail(&mut out, "graph", msg.clone());
            return out;
        }
        None => {
            fail(&mut out, "graph", format!("no graph loaded for {}", q.image_id));
            return out;
        }
    };
    let program = match ctx.programs.get(&q.question_id) {
        Some(Ok(p)) => p,
        Some(Err(msg)) => {
            fail(&mut out, "program", msg.clone());
            return out;
        }
        None => {
            fail(&mut out, "program", "no program loaded".to_owned());
            return out;
        }
    };
    let table = ctx
        .table
        .as_ref()
        .expect("a loaded graph implies a co-occurrence table");
    let trace = match derive_roi_trace(program, graph, table, &ctx.opts) {
        Ok(t) => t,
        Err(e) => {
            fail(&mut out, "trace", e.to_string());
            return out;
        }
    };

    let size = ctx.cfg.map_size;
    let mut by_source: BTreeMap<MapSource, AttentionMap> = BTreeMap::new();

    let question_fixations = ctx
        .fixations
        .as_ref()
        .and_then(|m| m.get(&q.question_id));
    if let Some(fx) = question_fixations {
        let splits: [(Vec<Fixation>, MapSource); 3] = [
            (
                fx.iter().filter(|f| f.is_correct).cloned().collect(),
                MapSource::HumanCorrect,
            ),
            (
                fx.iter().filter(|f| !f.is_correct).cloned().collect(),
                MapSource::HumanIncorrect,
            ),
            (fx.clone(), MapSource::HumanTotal),
        ];
        for (subset, source) in splits {
            if subset.is_empty() {
                continue;
            }
            match fixations_to_map(&subset, graph.width, graph.height, size, ctx.cfg.sigma, source)
            {
                Ok(m) => {
                    by_source.insert(source, m);
                }
                Err(e) => fail(&mut out, "maps", format!("{source}: {e}")),
            }
        }
    }

    if let Some(dir) = &ctx.proposals_dir {
        match dataset::load_proposals(dir, &q.question_id) {
            Ok(Some(pa)) => {
                match rasterize_proposal_attention(&pa, graph.width, graph.height, size) {
                    Ok(m) => {
                        by_source.insert(MapSource::Machine, m);
                    }
                    Err(e) => fail(&mut out, "maps", format!("machine: {e}")),
                }
            }
            Ok(None) => {}
            Err(e) => fail(&mut out, "maps", format!("machine: {e}")),
        }
    }

    if let Some(files) = ctx.dense.get(&q.question_id) {
        for (source, path) in files {
            match dataset::load_dense_map(path, *source) {
                Ok(mut m) => {
                    if m.grid.h() != size || m.grid.w() != size {
                        let grid = m.grid.resample_bilinear(size);
                        let max = grid.max();
                        m.grid = if max > 0.0 { grid.map(|v| v / max) } else { grid };
                    }
                    by_source.insert(*source, m);
                }
                Err(e) => fail(&mut out, "maps", format!("{source}: {e}")),
            }
        }
    }

    for (source, m) in &by_source {
        match score_trace(&q.question_id, m, &trace, graph) {
            Ok(r) => out.reports.push(r),
            Err(e) => fail(&mut out, "score", format!("{source}: {e}")),
        }
    }

    if let (Some(fx), false) = (question_fixations, ctx.cfg.temporal_bins.is_empty()) {
        match slice_fixations_temporal(fx, &ctx.cfg.temporal_bins) {
            Ok((bins, dropped)) => {
                out.dropped = dropped;
                let maps: Result<Vec<AttentionMap>, _> = bins
                    .iter()
                    .map(|b| {
                        fixations_to_map(
                            b,
                            graph.width,
                            graph.height,
                            size,
                            ctx.cfg.sigma,
                            MapSource::HumanTotal,
                        )
                    })
                    .collect();
                match maps.map_err(|e| e.to_string()).and_then(|ms| {
                    score_temporal_matrix(&ms, &trace, graph).map_err(|e| e.to_string())
                }) {
                    Ok(matrix) => out.temporal = Some(matrix),
                    Err(msg) => fail(&mut out, "temporal", msg),
                }
            }
            Err(e) => fail(&mut out, "temporal", e.to_string()),
        }
    }

    out
}

/// Write the run's files under `out_dir` and return the manifest path.
pub fn emit_report(summary: &RunSummary, cfg: &RunConfig) -> Result<PathBuf, PipelineError> {
    let out_dir = cfg
        .out_dir
        .as_ref()
        .ok_or(PipelineError::MissingPath("out_dir"))?;
    let mut em = Emitter::new(out_dir)?;
    match cfg.format {
        OutputFormat::Json => {
            for r in &summary.reports {
                em.write_json(
                    &format!("reports/{}__{}.json", r.question_id, r.source.name()),
                    r,
                )?;
            }
        }
        OutputFormat::Csv => {
            em.write("corpus.csv", corpus_csv(&summary.reports).as_bytes())?;
            em.write(
                "correlations.csv",
                correlations_csv(&summary.correlations).as_bytes(),
            )?;
            em.write(
                "temporal.csv",
                temporal_csv(&summary.temporal, &summary.temporal_bins).as_bytes(),
            )?;
        }
    }
    em.write_json("summary.json", summary)?;
    Ok(em.finish()?)
}
