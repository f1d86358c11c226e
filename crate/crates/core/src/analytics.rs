//! Corpus-level statistics: Pearson correlation between per-kind attention
//! scores and task performance (with a two-sided t-test), answer-accuracy
//! summaries, and averaging of temporal score matrices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::Fixation;
use crate::metric::AirEReport;
use crate::program::OpKind;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("series have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 points, got {0}")]
    TooFew(usize),
    #[error("correlation undefined: {0} series is constant")]
    ConstantSeries(&'static str),
    #[error("no question id is shared between reports and outcomes")]
    EmptyJoin,
    #[error("outcome {question_id:?} repeats")]
    DuplicateOutcome { question_id: String },
    #[error("outcome {question_id:?} has performance {value}, expected [0, 1]")]
    BadPerformance { question_id: String, value: f64 },
    #[error("trial {question_id:?}/{participant_id:?} mixes correct and incorrect records")]
    InconsistentTrial {
        question_id: String,
        participant_id: String,
    },
}

/// Task performance for one question: fraction of correct human answers, or
/// a model's [0, 1] score of the correct answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub question_id: String,
    pub performance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_participants: Option<u32>,
}

pub fn validate_outcomes(outcomes: &[QuestionOutcome]) -> Result<(), AnalyticsError> {
    let mut seen = std::collections::BTreeSet::new();
    for o in outcomes {
        if !(o.performance.is_finite() && (0.0..=1.0).contains(&o.performance)) {
            return Err(AnalyticsError::BadPerformance {
                question_id: o.question_id.clone(),
                value: o.performance,
            });
        }
        if !seen.insert(&o.question_id) {
            return Err(AnalyticsError::DuplicateOutcome {
                question_id: o.question_id.clone(),
            });
        }
    }
    Ok(())
}

/// Sample Pearson correlation. Exactly-constant input is rejected rather
/// than returning 0/0.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, AnalyticsError> {
    if xs.len() != ys.len() {
        return Err(AnalyticsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(AnalyticsError::TooFew(xs.len()));
    }
    if xs.windows(2).all(|w| w[0] == w[1]) {
        return Err(AnalyticsError::ConstantSeries("first"));
    }
    if ys.windows(2).all(|w| w[0] == w[1]) {
        return Err(AnalyticsError::ConstantSeries("second"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(AnalyticsError::ConstantSeries("first"));
    }
    if syy == 0.0 {
        return Err(AnalyticsError::ConstantSeries("second"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

// Lanczos approximation, g = 7, 9 coefficients.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let z = x - 1.0;
        let mut acc = COEF[0];
        for (i, c) in COEF.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
    }
}

// Continued fraction for the incomplete beta (modified Lentz).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 3e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value for a Pearson r on n samples, via the exact relation
/// p = I_x(df/2, 1/2) with t = r*sqrt(df/(1-r^2)), x = df/(df+t^2), df = n-2.
pub fn t_two_sided_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let r2 = r * r;
    if r2 >= 1.0 {
        return 0.0;
    }
    let t2 = r2 * df / (1.0 - r2);
    inc_beta(df / 2.0, 0.5, df / (df + t2)).clamp(0.0, 1.0)
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationStatus {
    /// r and p computed from >= 3 pairs.
    Ok,
    /// Fewer than 3 questions carried this kind.
    Insufficient,
    /// Enough pairs but one series constant; r undefined.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindCorrelation {
    pub n: usize,
    pub r: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
    pub status: CorrelationStatus,
}

/// One row of the correlation summary: every operation kind, whether or not
/// the corpus exercised it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub kinds: BTreeMap<OpKind, KindCorrelation>,
}

/// Correlate each kind's mean per-question attention score with that
/// question's task performance. Reports pair with outcomes by question id;
/// callers correlating several map sources slice the reports per source
/// first.
pub fn correlate_aire_with_performance(
    reports: &[AirEReport],
    outcomes: &[QuestionOutcome],
) -> Result<CorrelationTable, AnalyticsError> {
    validate_outcomes(outcomes)?;
    let by_id: BTreeMap<&str, f64> = outcomes
        .iter()
        .map(|o| (o.question_id.as_str(), o.performance))
        .collect();

    let mut sorted: Vec<&AirEReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.question_id.cmp(&b.question_id));

    let mut joined_any = false;
    let mut pairs: BTreeMap<OpKind, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for report in &sorted {
        let Some(perf) = by_id.get(report.question_id.as_str()) else {
            continue;
        };
        joined_any = true;
        for (kind, mean) in &report.per_kind_means {
            let entry = pairs.entry(*kind).or_default();
            entry.0.push(*mean);
            entry.1.push(*perf);
        }
    }
    if !joined_any {
        return Err(AnalyticsError::EmptyJoin);
    }

    let mut kinds = BTreeMap::new();
    for kind in OpKind::ALL {
        let cell = match pairs.get(&kind) {
            Some((xs, ys)) if xs.len() >= 3 => match pearson(xs, ys) {
                Ok(r) => {
                    let p = t_two_sided_p(r, xs.len());
                    KindCorrelation {
                        n: xs.len(),
                        r: Some(r),
                        p_value: Some(p),
                        significant: p < SIGNIFICANCE_LEVEL,
                        status: CorrelationStatus::Ok,
                    }
                }
                Err(AnalyticsError::ConstantSeries(_)) => KindCorrelation {
                    n: xs.len(),
                    r: None,
                    p_value: None,
                    significant: false,
                    status: CorrelationStatus::Degenerate,
                },
                Err(e) => return Err(e),
            },
            other => KindCorrelation {
                n: other.map(|(xs, _)| xs.len()).unwrap_or(0),
                r: None,
                p_value: None,
                significant: false,
                status: CorrelationStatus::Insufficient,
            },
        };
        kinds.insert(kind, cell);
    }
    Ok(CorrelationTable { kinds })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

fn moments(values: &[f64]) -> Option<Moments> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values
        .iter()
        .map(|v| {
            let d = v - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Some(Moments {
        mean,
        sd: var.sqrt(),
    })
}

/// One participant's pass over one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub question_id: String,
    pub participant_id: String,
    pub is_correct: bool,
    pub fixation_count: usize,
}

/// Collapse fixation records into per-(question, participant) trials. All
/// records of a trial must agree on correctness.
pub fn trials_from_fixations(fixations: &[Fixation]) -> Result<Vec<Trial>, AnalyticsError> {
    let mut map: BTreeMap<(String, String), (bool, usize)> = BTreeMap::new();
    for f in fixations {
        let key = (f.question_id.clone(), f.participant_id.clone());
        match map.get_mut(&key) {
            None => {
                map.insert(key, (f.is_correct, 1));
            }
            Some((correct, count)) => {
                if *correct != f.is_correct {
                    return Err(AnalyticsError::InconsistentTrial {
                        question_id: f.question_id.clone(),
                        participant_id: f.participant_id.clone(),
                    });
                }
                *count += 1;
            }
        }
    }
    Ok(map
        .into_iter()
        .map(|((question_id, participant_id), (is_correct, fixation_count))| Trial {
            question_id,
            participant_id,
            is_correct,
            fixation_count,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyStats {
    pub n_questions: usize,
    /// Mean/SD of per-question accuracy; absent for an empty corpus.
    pub accuracy: Option<Moments>,
    /// Ten equal bins over [0, 1]; accuracy 1.0 lands in the last bin.
    pub histogram: [usize; 10],
    pub fixations_correct: Option<Moments>,
    pub fixations_incorrect: Option<Moments>,
}

/// Accuracy distribution plus fixation-count moments split by trial
/// correctness.
pub fn answer_accuracy_stats(
    outcomes: &[QuestionOutcome],
    trials: &[Trial],
) -> Result<AccuracyStats, AnalyticsError> {
    validate_outcomes(outcomes)?;
    let accuracies: Vec<f64> = outcomes.iter().map(|o| o.performance).collect();
    let mut histogram = [0usize; 10];
    for a in &accuracies {
        let bin = ((a * 10.0).floor() as usize).min(9);
        histogram[bin] += 1;
    }
    let correct: Vec<f64> = trials
        .iter()
        .filter(|t| t.is_correct)
        .map(|t| t.fixation_count as f64)
        .collect();
    let incorrect: Vec<f64> = trials
        .iter()
        .filter(|t| !t.is_correct)
        .map(|t| t.fixation_count as f64)
        .collect();
    Ok(AccuracyStats {
        n_questions: outcomes.len(),
        accuracy: moments(&accuracies),
        histogram,
        fixations_correct: moments(&correct),
        fixations_incorrect: moments(&incorrect),
    })
}

pub type TemporalMatrix = Vec<Vec<Option<f64>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalAggregate {
    /// Mean over questions of each (bin, step) entry, where defined.
    pub mean: TemporalMatrix,
    /// How many questions contributed to each entry.
    pub count: Vec<Vec<usize>>,
}

/// Average per-question temporal matrices cell by cell. Questions with
/// shorter programs simply stop contributing past their last step.
pub fn aggregate_temporal(matrices: &[TemporalMatrix]) -> TemporalAggregate {
    let bins = matrices.iter().map(Vec::len).max().unwrap_or(0);
    let steps = matrices
        .iter()
        .flat_map(|m| m.iter().map(Vec::len))
        .max()
        .unwrap_or(0);
    let mut sum = vec![vec![0.0; steps]; bins];
    let mut count = vec![vec![0usize; steps]; bins];
    for m in matrices {
        for (b, row) in m.iter().enumerate() {
            for (s, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    sum[b][s] += v;
                    count[b][s] += 1;
                }
            }
        }
    }
    let mean = sum
        .into_iter()
        .zip(&count)
        .map(|(row, crow)| {
            row.into_iter()
                .zip(crow)
                .map(|(s, c)| if *c > 0 { Some(s / *c as f64) } else { None })
                .collect()
        })
        .collect();
    TemporalAggregate { mean, count }
}
