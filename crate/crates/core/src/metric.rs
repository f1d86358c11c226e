//! The AiR-E score: how well an attention map aligns with the regions a
//! reasoning step actually needs.
//!
//! A raw map is standardized (zero mean, unit population std) once per
//! trace. Each ROI box then scores the mean standardized value over the
//! pixels whose centers fall inside the rescaled box. Per step, each group
//! takes the maximum over its boxes; single-group kinds and `or` report a
//! plain maximum, while `relate`, `compare`, and `and` average the
//! per-group maxima. Empty groups are excluded and noted; a step whose
//! groups are all empty has no score.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{covered_range, standardize_map, AttentionMap, MapSource, StandardizedMap};
use crate::program::OpKind;
use crate::roi::{RoiSet, RoiTrace};
use crate::scene::{BoundingBox, ObjectId, SceneGraph};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("box ({0}, {1}, {2}, {3}) lies fully outside the image")]
    BoxOutsideImage(f64, f64, f64, f64),
    #[error("box ({0}, {1}, {2}, {3}) covers no pixel at map resolution {4}x{5}")]
    BoxBelowResolution(f64, f64, f64, f64, usize, usize),
    #[error("step {step} references object {id:?} missing from the scene graph")]
    UnknownObject { step: usize, id: ObjectId },
    #[error("trace has {sets} roi sets for {steps} program steps")]
    TraceShape { sets: usize, steps: usize },
    #[error("temporal scoring needs at least one bin map")]
    NoBins,
}

/// Mean standardized value inside a box. The box is clipped to the image,
/// rescaled to the map grid, and read at pixels whose centers fall in the
/// half-open rescaled rectangle. A degenerate (constant-input) map scores 0
/// everywhere by definition.
pub fn box_aire(
    sm: &StandardizedMap,
    b: &BoundingBox,
    image_w: f64,
    image_h: f64,
) -> Result<f64, MetricError> {
    let clipped = b
        .clip_to(image_w, image_h)
        .ok_or(MetricError::BoxOutsideImage(b.x, b.y, b.w, b.h))?;
    if sm.degenerate {
        return Ok(0.0);
    }
    let (h, w) = (sm.grid.h(), sm.grid.w());
    let cols = covered_range(clipped.x, clipped.x + clipped.w, w as f64 / image_w, w);
    let rows = covered_range(clipped.y, clipped.y + clipped.h, h as f64 / image_h, h);
    let n = cols.len() * rows.len();
    if n == 0 {
        return Err(MetricError::BoxBelowResolution(b.x, b.y, b.w, b.h, h, w));
    }
    let mut sum = 0.0;
    for j in rows {
        for i in cols.clone() {
            sum += sm.grid.get(j, i);
        }
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirEStepScore {
    pub step: usize,
    pub kind: OpKind,
    /// Max box score per group; `None` for an empty group.
    pub per_group: Vec<Option<f64>>,
    /// `None` when every group is empty.
    pub score: Option<f64>,
    pub fallback_used: bool,
}

/// Score one step's ROI set under `kind`'s aggregation rule.
pub fn aggregate_step_aire(
    sm: &StandardizedMap,
    rs: &RoiSet,
    kind: OpKind,
    g: &SceneGraph,
) -> Result<AirEStepScore, MetricError> {
    let mut per_group: Vec<Option<f64>> = Vec::with_capacity(rs.groups.len());
    for group in &rs.groups {
        let mut best: Option<f64> = None;
        for id in group {
            let obj = g.object(id).ok_or_else(|| MetricError::UnknownObject {
                step: rs.step,
                id: id.clone(),
            })?;
            let v = box_aire(sm, &obj.bbox, g.width, g.height)?;
            best = Some(match best {
                Some(b) => b.max(v),
                None => v,
            });
        }
        per_group.push(best);
    }

    let defined: Vec<f64> = per_group.iter().flatten().copied().collect();
    let score = if defined.is_empty() {
        None
    } else {
        match kind {
            // max over every ROI in the step; identical to the max of
            // per-group maxima
            OpKind::Select | OpKind::Filter | OpKind::Query | OpKind::Verify | OpKind::Or => {
                Some(defined.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            }
            OpKind::Relate | OpKind::Compare | OpKind::And => {
                Some(defined.iter().sum::<f64>() / defined.len() as f64)
            }
        }
    };

    Ok(AirEStepScore {
        step: rs.step,
        kind,
        per_group,
        score,
        fallback_used: rs.fallback_used,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirEReport {
    pub question_id: String,
    pub source: MapSource,
    pub steps: Vec<AirEStepScore>,
    /// Mean step score per operation kind, over steps with a defined score.
    pub per_kind_means: BTreeMap<OpKind, f64>,
    pub notes: Vec<String>,
}

/// Score a whole trace against one attention map.
pub fn score_trace(
    question_id: &str,
    m: &AttentionMap,
    trace: &RoiTrace,
    g: &SceneGraph,
) -> Result<AirEReport, MetricError> {
    if trace.sets.len() != trace.program.steps.len() {
        return Err(MetricError::TraceShape {
            sets: trace.sets.len(),
            steps: trace.program.steps.len(),
        });
    }

    let sm = standardize_map(m);
    let mut notes = Vec::new();
    if sm.degenerate {
        notes.push("attention map is constant; every box scores 0".to_owned());
    }

    let mut steps = Vec::with_capacity(trace.sets.len());
    for (set, pstep) in trace.sets.iter().zip(&trace.program.steps) {
        let scored = aggregate_step_aire(&sm, set, pstep.kind, g)?;
        if scored.fallback_used {
            notes.push(format!("step {} used the co-occurrence fallback", set.step));
        }
        for (gi, pg) in scored.per_group.iter().enumerate() {
            if pg.is_none() {
                notes.push(format!("step {} group {gi} is empty, excluded", set.step));
            }
        }
        steps.push(scored);
    }

    let mut sums: BTreeMap<OpKind, (f64, usize)> = BTreeMap::new();
    for s in &steps {
        if let Some(v) = s.score {
            let e = sums.entry(s.kind).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let per_kind_means = sums
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect();

    Ok(AirEReport {
        question_id: question_id.to_owned(),
        source: m.source,
        steps,
        per_kind_means,
        notes,
    })
}

/// Step scores per temporal bin: entry (i, j) is the step-j score of the
/// bin-i map, `None` where undefined.
pub fn score_temporal_matrix(
    maps_by_bin: &[AttentionMap],
    trace: &RoiTrace,
    g: &SceneGraph,
) -> Result<Vec<Vec<Option<f64>>>, MetricError> {
    if maps_by_bin.is_empty() {
        return Err(MetricError::NoBins);
    }
    let mut rows = Vec::with_capacity(maps_by_bin.len());
    for m in maps_by_bin {
        let report = score_trace("", m, trace, g)?;
        rows.push(report.steps.iter().map(|s| s.score).collect());
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::Grid;
    use crate::roi::{build_cooccurrence, derive_roi_trace, RoiOptions};
    use crate::scene;
    use std::collections::BTreeSet;

    fn sm_from(h: usize, w: usize, data: Vec<f64>) -> StandardizedMap {
        StandardizedMap {
            grid: Grid::from_data(h, w, data).unwrap(),
            degenerate: false,
        }
    }

    fn raw(h: usize, w: usize, data: Vec<f64>) -> AttentionMap {
        AttentionMap {
            grid: Grid::from_data(h, w, data).unwrap(),
            source: MapSource::HumanTotal,
            normalized: false,
        }
    }

    #[test]
    fn single_pixel_box_reads_that_pixel() {
        // 2 rows x 1 col standardized to [-1, +1]; box over the lower pixel
        let sm = sm_from(2, 1, vec![-1.0, 1.0]);
        let b = BoundingBox::new(0.0, 1.0, 1.0, 1.0);
        assert_eq!(box_aire(&sm, &b, 1.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_map_scores_zero() {
        let sm = StandardizedMap {
            grid: Grid::zeros(4, 4),
            degenerate: true,
        };
        let b = BoundingBox::new(0.5, 0.5, 2.0, 2.0);
        assert_eq!(box_aire(&sm, &b, 4.0, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn whole_map_box_scores_zero() {
        let m = raw(4, 4, (0..16).map(|i| (i as f64 * 0.37).fract()).collect());
        let sm = standardize_map(&m);
        let b = BoundingBox::new(0.0, 0.0, 64.0, 64.0);
        assert!(box_aire(&sm, &b, 64.0, 64.0).unwrap().abs() < 1e-9);
    }

    #[test]
    fn box_matches_double_loop_oracle() {
        let m = raw(16, 16, (0..256).map(|i| ((i * 37 % 101) as f64) / 101.0).collect());
        let sm = standardize_map(&m);
        let (iw, ih) = (320.0, 240.0);
        let boxes = [
            BoundingBox::new(10.0, 10.0, 50.0, 40.0),
            BoundingBox::new(0.0, 0.0, 320.0, 240.0),
            BoundingBox::new(300.0, 200.0, 60.0, 80.0), // clipped at the edge
            BoundingBox::new(17.3, 91.8, 23.4, 11.1),
        ];
        for b in &boxes {
            let got = box_aire(&sm, b, iw, ih).unwrap();
            // oracle: test every pixel center against the clipped rescaled rect
            let c = b.clip_to(iw, ih).unwrap();
            let (sx, sy) = (16.0 / iw, 16.0 / ih);
            let (x0, x1) = (c.x * sx, (c.x + c.w) * sx);
            let (y0, y1) = (c.y * sy, (c.y + c.h) * sy);
            let mut sum = 0.0;
            let mut n = 0usize;
            for j in 0..16 {
                for i in 0..16 {
                    let (cx, cy) = (i as f64 + 0.5, j as f64 + 0.5);
                    if cx >= x0 && cx < x1 && cy >= y0 && cy < y1 {
                        sum += sm.grid.get(j, i);
                        n += 1;
                    }
                }
            }
            assert!(n > 0);
            assert!((got - sum / n as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn box_error_cases() {
        let sm = sm_from(4, 4, (0..16).map(|i| i as f64).collect());
        let outside = BoundingBox::new(100.0, 100.0, 5.0, 5.0);
        assert!(matches!(
            box_aire(&sm, &outside, 64.0, 64.0),
            Err(MetricError::BoxOutsideImage(..))
        ));
        // positive area but far below one map pixel
        let sliver = BoundingBox::new(33.0, 33.0, 0.5, 0.5);
        assert!(matches!(
            box_aire(&sm, &sliver, 64.0, 64.0),
            Err(MetricError::BoxBelowResolution(..))
        ));
    }

    /// Graph with three 1-pixel objects on a 4x4 image so each box reads a
    /// single known standardized value.
    fn pixel_graph() -> SceneGraph {
        let doc = serde_json::json!({
            "image_id": "px",
            "width": 4.0,
            "height": 4.0,
            "objects": {
                "a": {"category": "alpha", "box": [0.0, 0.0, 1.0, 1.0], "attributes": [], "relations": []},
                "b": {"category": "beta",  "box": [1.0, 0.0, 1.0, 1.0], "attributes": [], "relations": []},
                "c": {"category": "gamma", "box": [2.0, 0.0, 1.0, 1.0], "attributes": [], "relations": []}
            }
        });
        crate::scene::parse_scene_graph(&doc.to_string()).unwrap()
    }

    fn ids(names: &[&str]) -> BTreeSet<ObjectId> {
        names.iter().map(|n| ObjectId::from(*n)).collect()
    }

    fn set(step: usize, groups: Vec<BTreeSet<ObjectId>>) -> RoiSet {
        RoiSet {
            step,
            groups,
            fallback_used: false,
        }
    }

    #[test]
    fn select_takes_max_over_rois() {
        // pixel (0,0) = 0.5, pixel (0,1) = 2.0
        let mut data = vec![0.0; 16];
        data[0] = 0.5;
        data[1] = 2.0;
        let sm = sm_from(4, 4, data);
        let g = pixel_graph();
        let s = aggregate_step_aire(&sm, &set(0, vec![ids(&["a", "b"])]), OpKind::Select, &g).unwrap();
        assert_eq!(s.score, Some(2.0));
        assert_eq!(s.per_group, vec![Some(2.0)]);
    }

    #[test]
    fn and_means_group_maxima_or_takes_overall_max() {
        let mut data = vec![0.0; 16];
        data[0] = 2.0; // a
        data[1] = 1.0; // b
        let sm = sm_from(4, 4, data);
        let g = pixel_graph();
        let groups = vec![ids(&["a"]), ids(&["b"])];
        let and = aggregate_step_aire(&sm, &set(2, groups.clone()), OpKind::And, &g).unwrap();
        assert_eq!(and.score, Some(1.5));
        let or = aggregate_step_aire(&sm, &set(2, vec![ids(&["a", "b"])]), OpKind::Or, &g).unwrap();
        assert_eq!(or.score, Some(2.0));
    }

    #[test]
    fn empty_groups_are_excluded_then_undefined() {
        let mut data = vec![0.0; 16];
        data[0] = 2.0;
        let sm = sm_from(4, 4, data);
        let g = pixel_graph();
        let partial =
            aggregate_step_aire(&sm, &set(1, vec![ids(&["a"]), ids(&[])]), OpKind::Compare, &g)
                .unwrap();
        assert_eq!(partial.per_group, vec![Some(2.0), None]);
        assert_eq!(partial.score, Some(2.0)); // mean over the one defined group
        let none =
            aggregate_step_aire(&sm, &set(1, vec![ids(&[]), ids(&[])]), OpKind::Compare, &g)
                .unwrap();
        assert_eq!(none.score, None);
    }

    #[test]
    fn mean_rule_lies_between_group_maxima() {
        let mut data = vec![0.0; 16];
        data[0] = -1.25;
        data[1] = 0.75;
        data[2] = 3.5;
        let sm = sm_from(4, 4, data);
        let g = pixel_graph();
        let s = aggregate_step_aire(
            &sm,
            &set(0, vec![ids(&["a"]), ids(&["b"]), ids(&["c"])]),
            OpKind::Relate,
            &g,
        )
        .unwrap();
        let maxima: Vec<f64> = s.per_group.iter().flatten().copied().collect();
        let lo = maxima.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = maxima.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = s.score.unwrap();
        assert!(v >= lo && v <= hi);
        assert!((v - (-1.25 + 0.75 + 3.5) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_object_is_an_error() {
        let sm = sm_from(4, 4, vec![0.0; 16]);
        let g = pixel_graph();
        let err = aggregate_step_aire(&sm, &set(0, vec![ids(&["ghost"])]), OpKind::Select, &g)
            .unwrap_err();
        assert!(matches!(err, MetricError::UnknownObject { step: 0, .. }));
    }

    fn girl_trace() -> (RoiTrace, SceneGraph) {
        let g = scene::girl_jeans_bag();
        let t = build_cooccurrence([&g]).unwrap();
        let p = crate::program::jeans_chain();
        let trace = derive_roi_trace(&p, &g, &t, &RoiOptions::default()).unwrap();
        (trace, g)
    }

    /// Map with all mass inside one image-space box.
    fn mass_in_box(g: &SceneGraph, b: &BoundingBox, size: usize) -> AttentionMap {
        let mut grid = Grid::zeros(size, size);
        let cols = covered_range(b.x, b.x + b.w, size as f64 / g.width, size);
        let rows = covered_range(b.y, b.y + b.h, size as f64 / g.height, size);
        for j in rows {
            for i in cols.clone() {
                grid.set(j, i, 1.0);
            }
        }
        AttentionMap {
            grid,
            source: MapSource::HumanTotal,
            normalized: true,
        }
    }

    #[test]
    fn mass_in_bag_box_makes_final_step_maximal() {
        let (trace, g) = girl_trace();
        let bag = g.object(&ObjectId::from("o_bag")).unwrap().bbox.clone();
        let m = mass_in_box(&g, &bag, 64);
        let report = score_trace("q_fig1", &m, &trace, &g).unwrap();
        assert_eq!(report.steps.len(), 4);
        let scores: Vec<f64> = report.steps.iter().map(|s| s.score.unwrap()).collect();
        let best = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(best, 3, "scores: {scores:?}");
    }

    #[test]
    fn constant_map_scores_every_step_zero() {
        let (trace, g) = girl_trace();
        let m = raw(32, 32, vec![0.4; 1024]);
        let report = score_trace("q", &m, &trace, &g).unwrap();
        assert!(report.steps.iter().all(|s| s.score == Some(0.0)));
        assert!(report.notes.iter().any(|n| n.contains("constant")));
        // undefined-free constant report still fills per-kind means
        assert_eq!(report.per_kind_means[&OpKind::Select], 0.0);
    }

    #[test]
    fn affine_scaling_leaves_report_unchanged() {
        let (trace, g) = girl_trace();
        let bag = g.object(&ObjectId::from("o_bag")).unwrap().bbox.clone();
        let m = mass_in_box(&g, &bag, 64);
        let scaled = AttentionMap {
            grid: m.grid.map(|v| 10.0 * v + 5.0),
            source: m.source,
            normalized: false,
        };
        let r1 = score_trace("q", &m, &trace, &g).unwrap();
        let r2 = score_trace("q", &scaled, &trace, &g).unwrap();
        for (a, b) in r1.steps.iter().zip(&r2.steps) {
            let (x, y) = (a.score.unwrap(), b.score.unwrap());
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn per_kind_means_average_within_kind() {
        let (trace, g) = girl_trace();
        let bag = g.object(&ObjectId::from("o_bag")).unwrap().bbox.clone();
        let m = mass_in_box(&g, &bag, 64);
        let report = score_trace("q", &m, &trace, &g).unwrap();
        // program kinds: select, relate, relate, query
        let relate_scores: Vec<f64> = report
            .steps
            .iter()
            .filter(|s| s.kind == OpKind::Relate)
            .map(|s| s.score.unwrap())
            .collect();
        assert_eq!(relate_scores.len(), 2);
        let mean = (relate_scores[0] + relate_scores[1]) / 2.0;
        assert!((report.per_kind_means[&OpKind::Relate] - mean).abs() < 1e-12);
        assert_eq!(report.per_kind_means.len(), 3);
    }

    #[test]
    fn temporal_matrix_shape_and_constant_rows() {
        let (trace, g) = girl_trace();
        let bag = g.object(&ObjectId::from("o_bag")).unwrap().bbox.clone();
        let m = mass_in_box(&g, &bag, 32);
        let rows = score_temporal_matrix(
            &[m.clone(), m.clone(), m.clone()],
            &trace,
            &g,
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.len() == 4));
        assert_eq!(rows[0], rows[1]);
        assert_eq!(rows[1], rows[2]);
        assert!(matches!(
            score_temporal_matrix(&[], &trace, &g),
            Err(MetricError::NoBins)
        ));
    }

    #[test]
    fn trace_shape_mismatch_is_an_error() {
        let (mut trace, g) = girl_trace();
        trace.sets.pop();
        let m = raw(8, 8, (0..64).map(|i| i as f64).collect());
        assert!(matches!(
            score_trace("q", &m, &trace, &g),
            Err(MetricError::TraceShape { .. })
        ));
    }

    #[test]
    fn report_serializes_with_kind_keyed_means() {
        let (trace, g) = girl_trace();
        let m = raw(8, 8, (0..64).map(|i| (i % 7) as f64).collect());
        let report = score_trace("q1", &m, &trace, &g).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert!(json["per_kind_means"].get("select").is_some());
        assert_eq!(json["source"], "human-total");
        let back: AirEReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, report);
    }
}
