//! Binary entry point: flag parsing, config resolution, and exit codes.
//!
//! Exit codes: 0 on success, 1 when the batch finished but some questions
//! landed in the error ledger, 2 on configuration or schema failures.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use aire_cli::config::{parse_bins, OutputFormat, Overrides, RunConfig};
use aire_cli::dataset;
use aire_cli::emit::{canonical_json, correlations_csv, Emitter};
use aire_cli::pipeline;
use aire_cli::synth::{write_corpus, SynthOptions};
use aire_core::analytics::{answer_accuracy_stats, correlate_aire_with_performance};
use aire_core::attention::{fixations_by_question, fixations_to_map, Fixation, MapSource};
use aire_core::metric::{score_trace, AirEReport};
use aire_core::program::parse_program;
use aire_core::roi::{build_cooccurrence, derive_roi_trace, CooccurrenceTable, RoiOptions};
use aire_core::scene::{parse_scene_graph, SceneGraph};
use aire_core::supervision::{derive_target_attention, TargetAttention};

#[derive(Clone, Debug)]
struct BinsArg(Vec<(f64, f64)>);

impl FromStr for BinsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<BinsArg, String> {
        parse_bins(s).map(BinsArg)
    }
}

#[derive(Parser)]
#[command(name = "aire", version, about = "Attention-with-reasoning evaluation toolkit")]
struct Cli {
    /// Flat JSON config; relative paths resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Neighbor budget for the missing-category fallback.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Fixation blur radius in pixels.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Attention map resolution (maps are square).
    #[arg(long, global = true)]
    map_size: Option<usize>,
    /// Temporal bins in ms, e.g. 0-1000,1000-2000,2000-3000.
    #[arg(long, global = true)]
    bins: Option<BinsArg>,
    /// Attention-loss weight in the combined objective.
    #[arg(long, global = true)]
    phi: Option<f64>,
    /// Worker count; defaults to one per hardware thread.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Report format.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Keep only relate targets actually linked by the step's predicate.
    #[arg(long, global = true)]
    strict_relate: bool,
    /// RNG seed for synth.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a category co-occurrence table from a directory of scene graphs.
    Cooccur {
        #[arg(long)]
        graphs: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive the per-step ROI trace of one program over one scene graph.
    Trace {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        program: PathBuf,
        /// Co-occurrence table; built from the graph itself when omitted.
        #[arg(long)]
        cooccur: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rasterize a fixation CSV into per-question, per-source map files.
    Fixmap {
        #[arg(long)]
        fixations: Option<PathBuf>,
        #[arg(long)]
        graphs: Option<PathBuf>,
        #[arg(long)]
        questions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score dense maps against stored traces.
    Score {
        /// Directory of `<question>__<source>.json|csv` maps.
        #[arg(long)]
        maps: Option<PathBuf>,
        /// Directory of `<question>.json` trace files.
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        graphs: Option<PathBuf>,
        #[arg(long)]
        questions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive per-step proposal attention targets from stored traces.
    Targets {
        /// Directory of `<question>.json` trace files.
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        proposals: Option<PathBuf>,
        #[arg(long)]
        graphs: Option<PathBuf>,
        #[arg(long)]
        questions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlate stored reports with answer outcomes.
    Analyze {
        /// Directory of report JSON files.
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        outcomes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a self-contained synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Run the full evaluation pipeline described by the config.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| e.to_string())?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        k: cli.k,
        map_size: cli.map_size,
        sigma: cli.sigma,
        bins: cli.bins.clone().map(|b| b.0),
        phi: cli.phi,
        jobs: cli.jobs,
        format: cli.format,
        strict_relate: cli.strict_relate,
    });
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)
                    .map_err(|e| format!("cannot create {}: {e}", parent.display()))?;
            }
            fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            let res = stdout.write_all(text.as_bytes()).and_then(|()| {
                if text.ends_with('\n') {
                    Ok(())
                } else {
                    stdout.write_all(b"\n")
                }
            });
            match res {
                Ok(()) => Ok(()),
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                Err(e) => Err(format!("cannot write to stdout: {e}")),
            }
        }
    }
}

fn pick_dir(flag: Option<PathBuf>, key: &Option<PathBuf>, what: &str) -> Result<PathBuf, String> {
    let dir = flag
        .or_else(|| key.clone())
        .ok_or_else(|| format!("a {what} path is required (flag or config key)"))?;
    Ok(dir)
}

fn sorted_json_files(dir: &Path) -> Result<Vec<PathBuf>, String> {
    dataset::require_dir(dir).map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    let entries =
        fs::read_dir(dir).map_err(|e| format!("cannot read {}: {e}", dir.display()))?;
    for entry in entries {
        let path = entry
            .map_err(|e| format!("cannot read {}: {e}", dir.display()))?
            .path();
        if path.extension().and_then(|e| e.to_str()) == Some("json")
            && path.file_name().is_some_and(|n| n != "manifest.json")
        {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn load_graph_file(path: &Path) -> Result<SceneGraph, String> {
    parse_scene_graph(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn fixation_splits(fx: &[Fixation]) -> [(Vec<Fixation>, MapSource); 3] {
    [
        (
            fx.iter().filter(|f| f.is_correct).cloned().collect(),
            MapSource::HumanCorrect,
        ),
        (
            fx.iter().filter(|f| !f.is_correct).cloned().collect(),
            MapSource::HumanIncorrect,
        ),
        (fx.to_vec(), MapSource::HumanTotal),
    ]
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match &cli.command {
        Command::Cooccur { graphs, out } => {
            let cfg = resolve_config(&cli)?;
            let dir = pick_dir(graphs.clone(), &cfg.scene_graphs, "scene-graph directory")?;
            let mut loaded = Vec::new();
            for path in sorted_json_files(&dir)? {
                loaded.push(load_graph_file(&path)?);
            }
            let table = build_cooccurrence(&loaded).map_err(|e| e.to_string())?;
            write_out(out.as_deref(), &table.to_json())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Trace {
            graph,
            program,
            cooccur,
            out,
        } => {
            let cfg = resolve_config(&cli)?;
            let g = load_graph_file(graph)?;
            let prog = parse_program(&read(program)?)
                .map_err(|e| format!("{}: {e}", program.display()))?;
            let table = match cooccur.clone().or_else(|| cfg.cooccurrence.clone()) {
                Some(path) => {
                    CooccurrenceTable::from_json(&read(&path)?).map_err(|e| e.to_string())?
                }
                None => build_cooccurrence([&g]).map_err(|e| e.to_string())?,
            };
            let opts = RoiOptions {
                k: cfg.k,
                strict_relate: cfg.strict_relate,
            };
            let trace = derive_roi_trace(&prog, &g, &table, &opts).map_err(|e| e.to_string())?;
            write_out(out.as_deref(), &canonical_json(&trace))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Fixmap {
            fixations,
            graphs,
            questions,
            out,
        } => {
            let cfg = resolve_config(&cli)?;
            let fix_path = pick_dir(fixations.clone(), &cfg.fixations, "fixation CSV")?;
            let graphs_dir = pick_dir(graphs.clone(), &cfg.scene_graphs, "scene-graph directory")?;
            let questions_path = pick_dir(questions.clone(), &cfg.questions, "question manifest")?;
            let qs = dataset::load_questions(&questions_path).map_err(|e| e.to_string())?;
            let all = dataset::load_fixations_file(&fix_path).map_err(|e| e.to_string())?;
            let by_question = fixations_by_question(&all);

            let mut em = Emitter::new(out).map_err(|e| e.to_string())?;
            let mut written = 0usize;
            for q in &qs {
                let Some(fx) = by_question.get(&q.question_id) else {
                    continue;
                };
                let g = dataset::load_graph(&graphs_dir, &q.image_id).map_err(|e| e.to_string())?;
                for (subset, source) in fixation_splits(fx) {
                    if subset.is_empty() {
                        continue;
                    }
                    let m = fixations_to_map(
                        &subset,
                        g.width,
                        g.height,
                        cfg.map_size,
                        cfg.sigma,
                        source,
                    )
                    .map_err(|e| format!("{}/{source}: {e}", q.question_id))?;
                    em.write_json(
                        &format!("{}__{}.json", q.question_id, source.name()),
                        &dataset::grid_to_value(&m.grid),
                    )
                    .map_err(|e| e.to_string())?;
                    written += 1;
                }
            }
            let manifest = em.finish().map_err(|e| e.to_string())?;
            eprintln!("wrote {written} maps, manifest {}", manifest.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Score {
            maps,
            traces,
            graphs,
            questions,
            out,
        } => {
            let cfg = resolve_config(&cli)?;
            let maps_dir = pick_dir(maps.clone(), &cfg.attention_maps, "map directory")?;
            let graphs_dir = pick_dir(graphs.clone(), &cfg.scene_graphs, "scene-graph directory")?;
            let questions_path = pick_dir(questions.clone(), &cfg.questions, "question manifest")?;
            let qs = dataset::load_questions(&questions_path).map_err(|e| e.to_string())?;
            let dense = dataset::scan_dense_maps(&maps_dir).map_err(|e| e.to_string())?;

            let mut em = Emitter::new(out).map_err(|e| e.to_string())?;
            let mut written = 0usize;
            for q in &qs {
                let Some(files) = dense.get(&q.question_id) else {
                    continue;
                };
                let g = dataset::load_graph(&graphs_dir, &q.image_id).map_err(|e| e.to_string())?;
                let trace_path = traces.join(format!("{}.json", q.question_id));
                let trace = dataset::load_trace(&trace_path).map_err(|e| e.to_string())?;
                for (source, path) in files {
                    let m = dataset::load_dense_map(path, *source).map_err(|e| e.to_string())?;
                    let report = score_trace(&q.question_id, &m, &trace, &g)
                        .map_err(|e| format!("{}/{source}: {e}", q.question_id))?;
                    em.write_json(
                        &format!("{}__{}.json", q.question_id, source.name()),
                        &report,
                    )
                    .map_err(|e| e.to_string())?;
                    written += 1;
                }
            }
            let manifest = em.finish().map_err(|e| e.to_string())?;
            eprintln!("wrote {written} reports, manifest {}", manifest.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Targets {
            traces,
            proposals,
            graphs,
            questions,
            out,
        } => {
            let cfg = resolve_config(&cli)?;
            let proposals_dir = pick_dir(proposals.clone(), &cfg.proposals, "proposal directory")?;
            let graphs_dir = pick_dir(graphs.clone(), &cfg.scene_graphs, "scene-graph directory")?;
            let questions_path = pick_dir(questions.clone(), &cfg.questions, "question manifest")?;
            let qs = dataset::load_questions(&questions_path).map_err(|e| e.to_string())?;

            let mut em = Emitter::new(out).map_err(|e| e.to_string())?;
            let mut written = 0usize;
            for q in &qs {
                let Some(pa) = dataset::load_proposals(&proposals_dir, &q.question_id)
                    .map_err(|e| e.to_string())?
                else {
                    continue;
                };
                let g = dataset::load_graph(&graphs_dir, &q.image_id).map_err(|e| e.to_string())?;
                let trace_path = traces.join(format!("{}.json", q.question_id));
                let trace = dataset::load_trace(&trace_path).map_err(|e| e.to_string())?;
                let boxes: Vec<_> = pa.proposals().iter().map(|(b, _)| b.clone()).collect();
                let targets: Vec<TargetAttention> = trace
                    .sets
                    .iter()
                    .map(|s| derive_target_attention(s, &boxes, &g))
                    .collect::<Result<_, _>>()
                    .map_err(|e| format!("{}: {e}", q.question_id))?;
                em.write_json(&format!("{}.json", q.question_id), &targets)
                    .map_err(|e| e.to_string())?;
                written += 1;
            }
            let manifest = em.finish().map_err(|e| e.to_string())?;
            eprintln!("wrote {written} target files, manifest {}", manifest.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze {
            reports,
            outcomes,
            out,
        } => {
            let cfg = resolve_config(&cli)?;
            let outcomes_path = pick_dir(outcomes.clone(), &cfg.outcomes, "outcome file")?;
            let outcome_list =
                dataset::load_outcomes(&outcomes_path).map_err(|e| e.to_string())?;
            let mut loaded: Vec<AirEReport> = Vec::new();
            for path in sorted_json_files(reports)? {
                let report = serde_json::from_str(&read(&path)?)
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                loaded.push(report);
            }

            let mut correlations = BTreeMap::new();
            for source in MapSource::ALL {
                let subset: Vec<AirEReport> = loaded
                    .iter()
                    .filter(|r| r.source == source)
                    .cloned()
                    .collect();
                if subset.is_empty() {
                    continue;
                }
                let table = correlate_aire_with_performance(&subset, &outcome_list)
                    .map_err(|e| e.to_string())?;
                correlations.insert(source, table);
            }
            let accuracy =
                answer_accuracy_stats(&outcome_list, &[]).map_err(|e| e.to_string())?;

            let mut em = Emitter::new(out).map_err(|e| e.to_string())?;
            em.write_json(
                "analysis.json",
                &serde_json::json!({ "correlations": correlations, "accuracy": accuracy }),
            )
            .map_err(|e| e.to_string())?;
            em.write("correlations.csv", correlations_csv(&correlations).as_bytes())
                .map_err(|e| e.to_string())?;
            let manifest = em.finish().map_err(|e| e.to_string())?;
            eprintln!(
                "analyzed {} reports over {} sources, manifest {}",
                loaded.len(),
                correlations.len(),
                manifest.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { out, count } => {
            let cfg = resolve_config(&cli)?;
            let opts = SynthOptions {
                seed: cli.seed.unwrap_or(0),
                count: *count,
                map_size: cfg.map_size,
            };
            let questions = write_corpus(out, &opts).map_err(|e| e.to_string())?;
            eprintln!("wrote {} questions under {}", questions.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report => {
            let cfg = resolve_config(&cli)?;
            let summary = pipeline::run_evaluation(&cfg).map_err(|e| e.to_string())?;
            let manifest = pipeline::emit_report(&summary, &cfg).map_err(|e| e.to_string())?;
            eprintln!(
                "{} questions, {} reports, manifest {}",
                summary.n_questions,
                summary.reports.len(),
                manifest.display()
            );
            if summary.ledger.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for entry in &summary.ledger {
                    eprintln!("{} [{}]: {}", entry.question_id, entry.stage, entry.message);
                }
                eprintln!("{} question(s) failed", summary.ledger.len());
                Ok(ExitCode::from(1))
            }
        }
    }
}
