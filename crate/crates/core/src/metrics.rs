//! Ranking metrics: AUC, MRR and NDCG@k over binary click labels.
//!
//! | Metric  | Per impression                                   | Undefined when          |
//! |---------|--------------------------------------------------|-------------------------|
//! | AUC     | P(random click outscores random skip), ties ½     | no click or no skip     |
//! | MRR     | `1 / rank` of the first click                    | no click                |
//! | NDCG@k  | `DCG@k / IDCG@k`, gain = label, discount log2(p+1)| no click                |
//!
//! Undefined impressions are excluded from that metric's mean and the
//! denominators are reported alongside.

use std::{collections::HashMap, fmt, fmt::Write as _, str::FromStr};

use rayon::prelude::*;
use thiserror::Error;

use crate::{
    dataset::{BehaviorSet, Impression},
    ensemble::{rank_scores, RankedList},
    learners::ScoreTable,
};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("prediction {position} is for impression {found}, expected {expected}")]
    Misaligned {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("{found} predictions for {expected} impressions")]
    CountMismatch { expected: usize, found: usize },
    #[error("ranking for impression {0} is not a permutation of its candidates")]
    NotPermutation(String),
    #[error("no scores for impression {0}")]
    MissingImpression(String),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Metric used to pick fusion weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Objective {
    #[default]
    Auc,
    Mrr,
    Ndcg5,
    Ndcg10,
}

impl Objective {
    pub const ALL: [Objective; 4] = [Self::Auc, Self::Mrr, Self::Ndcg5, Self::Ndcg10];

    /// Command-line spelling.
    pub fn key(self) -> &'static str {
        match self {
            Self::Auc => "auc",
            Self::Mrr => "mrr",
            Self::Ndcg5 => "ndcg5",
            Self::Ndcg10 => "ndcg10",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auc => "AUC",
            Self::Mrr => "MRR",
            Self::Ndcg5 => "nDCG@5",
            Self::Ndcg10 => "nDCG@10",
        })
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded = s.to_ascii_lowercase().replace('@', "");
        Self::ALL
            .into_iter()
            .find(|o| o.key() == folded)
            .ok_or_else(|| format!("unsupported objective {s:?} (expected auc, mrr, ndcg5 or ndcg10)"))
    }
}

/// Click labels in ranked order, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRanking {
    pub labels: Vec<bool>,
    pub scores: Option<Vec<f64>>,
}

impl LabeledRanking {
    pub fn new(labels: Vec<bool>) -> Self {
        Self { labels, scores: None }
    }

    pub fn has_relevant(&self) -> bool {
        self.labels.iter().any(|&l| l)
    }
}

/// Mann–Whitney AUC with midranks for tied scores. `None` unless both
/// classes are present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end share their mean.
        let midrank = (start + 1 + end) as f64 / 2.0;
        let tied_positives = order[start..end].iter().filter(|&&i| labels[i]).count();
        positive_rank_sum += midrank * tied_positives as f64;
        start = end;
    }
    let p = positives as f64;
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Some(u / (p * negatives as f64))
}

/// Reciprocal of the 1-based position of the first relevant item.
pub fn reciprocal_rank(ranking: &LabeledRanking) -> Option<f64> {
    ranking.labels.iter().position(|&l| l).map(|p| 1.0 / (p + 1) as f64)
}

pub fn dcg_at_k(labels: &[bool], k: usize) -> f64 {
    labels
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &l)| l)
        .map(|(p, _)| 1.0 / ((p + 2) as f64).log2())
        .sum()
}

pub fn ndcg_at_k(ranking: &LabeledRanking, k: usize) -> Option<f64> {
    let relevant = ranking.labels.iter().filter(|&&l| l).count();
    if relevant == 0 || k == 0 {
        return None;
    }
    // The ideal ordering puts every relevant item first.
    let ideal: f64 = (0..relevant.min(k)).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    Some(dcg_at_k(&ranking.labels, k) / ideal)
}

/// Mean over defined values with its denominator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub count: usize,
}

impl MetricSummary {
    /// Sums in iteration order, skipping `None`.
    pub fn from_values(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let (sum, count) = values
            .into_iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        Self {
            mean: (count > 0).then(|| sum / count as f64),
            count,
        }
    }
}

pub fn mrr(rankings: &[LabeledRanking]) -> MetricSummary {
    MetricSummary::from_values(rankings.iter().map(reciprocal_rank))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImpressionMetrics {
    pub impression_id: String,
    pub auc: Option<f64>,
    pub mrr: Option<f64>,
    pub ndcg5: Option<f64>,
    pub ndcg10: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub impressions: usize,
    pub auc: MetricSummary,
    pub mrr: MetricSummary,
    pub ndcg5: MetricSummary,
    pub ndcg10: MetricSummary,
    pub per_impression: Vec<ImpressionMetrics>,
}

impl MetricReport {
    pub fn from_impressions(per_impression: Vec<ImpressionMetrics>) -> Self {
        Self {
            impressions: per_impression.len(),
            auc: MetricSummary::from_values(per_impression.iter().map(|m| m.auc)),
            mrr: MetricSummary::from_values(per_impression.iter().map(|m| m.mrr)),
            ndcg5: MetricSummary::from_values(per_impression.iter().map(|m| m.ndcg5)),
            ndcg10: MetricSummary::from_values(per_impression.iter().map(|m| m.ndcg10)),
            per_impression,
        }
    }

    pub fn summary(&self, objective: Objective) -> MetricSummary {
        match objective {
            Objective::Auc => self.auc,
            Objective::Mrr => self.mrr,
            Objective::Ndcg5 => self.ndcg5,
            Objective::Ndcg10 => self.ndcg10,
        }
    }

    pub fn value(&self, objective: Objective) -> Option<f64> {
        self.summary(objective).mean
    }

    /// Aligned table: one row of means, one of denominators.
    pub fn render_text(&self, model: &str) -> String {
        let width = model.len().max(8);
        let mut out = format!("{:<width$}", "model");
        for o in Objective::ALL {
            let _ = write!(out, "  {:>8}", o.to_string());
        }
        let _ = write!(out, "\n{model:<width$}");
        for o in Objective::ALL {
            let _ = write!(out, "  {:>8}", fmt_mean(self.value(o)));
        }
        let _ = write!(out, "\n{:<width$}", "eligible");
        for o in Objective::ALL {
            let _ = write!(out, "  {:>8}", self.summary(o).count);
        }
        let _ = writeln!(out, "\nimpressions {}", self.impressions);
        out
    }

    /// `key = value` lines mirroring the table columns.
    pub fn render_kv(&self, model: &str) -> String {
        let mut out = format!("model = {model}\nimpressions = {}\n", self.impressions);
        for o in Objective::ALL {
            let s = self.summary(o);
            let _ = writeln!(out, "{o} = {}\n{o}.count = {}", fmt_mean(s.mean), s.count);
        }
        out
    }

    /// Tab-separated per-impression values; `NA` where undefined.
    pub fn render_per_impression(&self) -> String {
        let mut out = String::from("impression_id\tAUC\tMRR\tnDCG@5\tnDCG@10\n");
        for m in &self.per_impression {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                m.impression_id,
                fmt_mean(m.auc),
                fmt_mean(m.mrr),
                fmt_mean(m.ndcg5),
                fmt_mean(m.ndcg10)
            );
        }
        out
    }
}

fn fmt_mean(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |v| format!("{v:.4}"))
}

/// Metrics for one impression given scores aligned with its candidates and
/// the induced best-first order of candidate positions.
fn impression_metrics(imp: &Impression, scores: &[f64], order: &[usize]) -> ImpressionMetrics {
    let labels: Vec<bool> = imp.labels().map(|l| l.is_clicked()).collect();
    let ranking = LabeledRanking::new(order.iter().map(|&i| labels[i]).collect());
    ImpressionMetrics {
        impression_id: imp.impression_id.clone(),
        auc: auc(scores, &labels),
        mrr: reciprocal_rank(&ranking),
        ndcg5: ndcg_at_k(&ranking, 5),
        ndcg10: ndcg_at_k(&ranking, 10),
    }
}

fn check_alignment<'a>(ids: impl Iterator<Item = &'a str>, behaviors: &BehaviorSet) -> Result<()> {
    let mut found = 0;
    for (position, id) in ids.enumerate() {
        found += 1;
        if let Some(imp) = behaviors.impressions().get(position) {
            if id != imp.impression_id {
                return Err(MetricError::Misaligned {
                    position: position + 1,
                    expected: imp.impression_id.clone(),
                    found: id.to_owned(),
                });
            }
        }
    }
    if found != behaviors.len() {
        return Err(MetricError::CountMismatch {
            expected: behaviors.len(),
            found,
        });
    }
    Ok(())
}

/// Evaluates best-first rankings aligned with `behaviors`. AUC is computed
/// from positions, so it matches evaluating the written prediction file.
pub fn evaluate_rankings(lists: &[RankedList], behaviors: &BehaviorSet) -> Result<MetricReport> {
    check_alignment(lists.iter().map(|l| l.impression_id.as_str()), behaviors)?;
    let per_impression = lists
        .par_iter()
        .zip(behaviors.impressions())
        .map(|(list, imp)| {
            let ids: Vec<&str> = imp.candidate_ids().collect();
            let ranks = list
                .ranks_for(&ids)
                .filter(|_| list.articles.len() == ids.len())
                .ok_or_else(|| MetricError::NotPermutation(imp.impression_id.clone()))?;
            Ok(metrics_from_ranks(imp, &ranks))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_impressions(per_impression))
}

/// Evaluates `(impression_id, ranks)` pairs, ranks aligned with each
/// impression's candidate order, as read from a prediction file.
pub fn evaluate_ranks(predictions: &[(&str, &[usize])], behaviors: &BehaviorSet) -> Result<MetricReport> {
    check_alignment(predictions.iter().map(|(id, _)| *id), behaviors)?;
    let per_impression = predictions
        .par_iter()
        .zip(behaviors.impressions())
        .map(|((_, ranks), imp)| {
            let mut seen = vec![false; ranks.len()];
            let valid = ranks.len() == imp.candidates.len()
                && ranks
                    .iter()
                    .all(|&r| r >= 1 && r <= ranks.len() && !std::mem::replace(&mut seen[r - 1], true));
            if !valid {
                return Err(MetricError::NotPermutation(imp.impression_id.clone()));
            }
            Ok(metrics_from_ranks(imp, ranks))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_impressions(per_impression))
}

/// Metrics from 1-based ranks aligned with candidate order.
pub fn metrics_from_ranks(imp: &Impression, ranks: &[usize]) -> ImpressionMetrics {
    let n = ranks.len();
    let scores: Vec<f64> = ranks.iter().map(|&r| (n - r) as f64).collect();
    let mut order = vec![0; n];
    for (i, &r) in ranks.iter().enumerate() {
        order[r - 1] = i;
    }
    impression_metrics(imp, &scores, &order)
}

/// Evaluates raw learner scores: AUC on the scores themselves (ties ½), rank
/// metrics on descending score with ties broken by ascending article id.
pub fn evaluate_scores(table: &ScoreTable, behaviors: &BehaviorSet) -> Result<MetricReport> {
    let per_impression = behaviors
        .impressions()
        .par_iter()
        .map(|imp| {
            let row = table
                .get(&imp.impression_id)
                .ok_or_else(|| MetricError::MissingImpression(imp.impression_id.clone()))?;
            let ids: Vec<&str> = imp.candidate_ids().collect();
            if row.article_ids.len() != ids.len() || row.article_ids.iter().zip(&ids).any(|(a, b)| a != b) {
                return Err(MetricError::NotPermutation(imp.impression_id.clone()));
            }
            let ranked = rank_scores(&imp.impression_id, &ids, &row.scores);
            let position: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, &a)| (a, i)).collect();
            let order: Vec<usize> = ranked.articles.iter().map(|a| position[a.as_str()]).collect();
            Ok(impression_metrics(imp, &row.scores, &order))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_impressions(per_impression))
}
