//! Weighted linear rank aggregation.
//!
//! Each member's raw scores are first mapped into a comparable space
//! ([`Transform`]), then combined as
//!
//! ```text
//! fused(c) = Σ_i w_i · comparable_i(c)
//! ```
//!
//! and sorted descending. Equal fused scores are ordered by ascending article
//! id so the output never depends on input order.

use std::{collections::HashSet, fmt, str::FromStr};

use rayon::prelude::*;
use thiserror::Error;

use crate::{
    dataset::BehaviorSet,
    learners::{LearnerError, ScoreTable},
    metrics::{self, MetricError, Objective},
};

/// Resolution of the fused-score comparison relative to the total weight.
/// Sums that agree to this precision are treated as ties, so reassociated
/// float sums of equal terms never reorder candidates.
const TIE_RESOLUTION: f64 = (1u64 << 40) as f64;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("fusion spec has no members")]
    NoMembers,
    #[error("weight of {member} must be finite and non-negative, got {weight}")]
    BadWeight { member: String, weight: f64 },
    #[error("all member weights are zero")]
    ZeroWeights,
    #[error("member {0} listed twice")]
    DuplicateMember(String),
    #[error("no scores for member {member} on impression {impression_id}")]
    MissingMember { member: String, impression_id: String },
    #[error("member {member} has {got} scores for {expected} candidates on impression {impression_id}")]
    LengthMismatch {
        member: String,
        impression_id: String,
        expected: usize,
        got: usize,
    },
    #[error("grid step {0} must lie in (0, 1] and divide 1 evenly")]
    BadStep(f64),
    #[error("weight sweep needs at least two members, got {0}")]
    TooFewMembers(usize),
    #[error("dev behavior set is empty")]
    EmptyDevSet,
    #[error("{0} is undefined on every dev impression")]
    UndefinedObjective(Objective),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T, E = EnsembleError> = std::result::Result<T, E>;

/// Mapping from raw learner scores to a scale shared by all members.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Transform {
    /// `1 / rank`, rank 1 being the best score.
    #[default]
    ReciprocalRank,
    /// `(n - rank) / (n - 1)`, or 1 for a single candidate.
    Borda,
    /// `(s - min) / (max - min)`, or 0.5 everywhere when all scores are equal.
    MinmaxScore,
}

impl Transform {
    pub const ALL: [Transform; 3] = [Self::ReciprocalRank, Self::Borda, Self::MinmaxScore];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ReciprocalRank => "reciprocal_rank",
            Self::Borda => "borda",
            Self::MinmaxScore => "minmax_score",
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Transform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown transform {s:?} (expected reciprocal_rank, borda or minmax_score)"))
    }
}

/// Competition ranks (1-based): a candidate's rank is one plus the number of
/// candidates with a strictly higher score, so equal scores share the better rank.
pub fn competition_ranks(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0; scores.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = if pos > 0 && scores[order[pos - 1]] == scores[i] {
            ranks[order[pos - 1]]
        } else {
            pos + 1
        };
    }
    ranks
}

pub fn to_comparable(scores: &[f64], transform: Transform) -> Vec<f64> {
    let n = scores.len();
    match transform {
        Transform::ReciprocalRank => competition_ranks(scores).into_iter().map(|r| 1.0 / r as f64).collect(),
        Transform::Borda if n == 1 => vec![1.0],
        Transform::Borda => competition_ranks(scores)
            .into_iter()
            .map(|r| (n - r) as f64 / (n - 1) as f64)
            .collect(),
        Transform::MinmaxScore => {
            let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = max - min;
            if span > 0.0 {
                scores.iter().map(|s| (s - min) / span).collect()
            } else {
                vec![0.5; n]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Member {
    pub name: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionSpec {
    members: Vec<Member>,
    transform: Transform,
}

impl FusionSpec {
    pub fn new(members: Vec<Member>, transform: Transform) -> Result<Self> {
        if members.is_empty() {
            return Err(EnsembleError::NoMembers);
        }
        let mut names = HashSet::new();
        for m in &members {
            if !names.insert(m.name.as_str()) {
                return Err(EnsembleError::DuplicateMember(m.name.clone()));
            }
            if !m.weight.is_finite() || m.weight < 0.0 {
                return Err(EnsembleError::BadWeight {
                    member: m.name.clone(),
                    weight: m.weight,
                });
            }
        }
        if members.iter().all(|m| m.weight == 0.0) {
            return Err(EnsembleError::ZeroWeights);
        }
        Ok(Self { members, transform })
    }

    /// Equal unit weights for every name.
    pub fn uniform<S: AsRef<str>>(names: &[S], transform: Transform) -> Result<Self> {
        Self::new(
            names
                .iter()
                .map(|n| Member {
                    name: n.as_ref().to_owned(),
                    weight: 1.0,
                })
                .collect(),
            transform,
        )
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    pub fn total_weight(&self) -> f64 {
        self.members.iter().map(|m| m.weight).sum()
    }

    /// `name:weight` pairs joined by commas, as used in run configs.
    pub fn members_string(&self) -> String {
        self.members
            .iter()
            .map(|m| format!("{}:{}", m.name, m.weight))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parses `name:weight,name:weight`; a bare `name` gets weight 1.
    pub fn parse_members(text: &str) -> Result<Vec<Member>, String> {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| match item.split_once(':') {
                Some((name, w)) => w
                    .trim()
                    .parse::<f64>()
                    .map(|weight| Member {
                        name: name.trim().to_owned(),
                        weight,
                    })
                    .map_err(|_| format!("invalid weight {w:?} for {name}")),
                None => Ok(Member {
                    name: item.to_owned(),
                    weight: 1.0,
                }),
            })
            .collect()
    }
}

/// Candidates of one impression, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub impression_id: String,
    pub articles: Vec<String>,
    pub scores: Vec<f64>,
}

impl RankedList {
    /// 1-based rank of each of `candidates` in this list.
    pub fn ranks_for<S: AsRef<str>>(&self, candidates: &[S]) -> Option<Vec<usize>> {
        let position: std::collections::HashMap<&str, usize> = self
            .articles
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), i + 1))
            .collect();
        candidates.iter().map(|c| position.get(c.as_ref()).copied()).collect()
    }
}

/// Ranks `candidates` by descending `keys`, ties by ascending id.
fn rank_by<S: AsRef<str>>(candidates: &[S], keys: &[i64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        keys[b]
            .cmp(&keys[a])
            .then_with(|| candidates[a].as_ref().cmp(candidates[b].as_ref()))
    });
    order
}

fn tie_key(score: f64, total_weight: f64) -> i64 {
    (score / total_weight * TIE_RESOLUTION).round() as i64
}

/// A single learner's own ranking: descending raw score, ties by ascending id.
pub fn rank_scores<S: AsRef<str>>(impression_id: &str, candidates: &[S], scores: &[f64]) -> RankedList {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| candidates[a].as_ref().cmp(candidates[b].as_ref()))
    });
    RankedList {
        impression_id: impression_id.to_owned(),
        articles: order.iter().map(|&i| candidates[i].as_ref().to_owned()).collect(),
        scores: order.iter().map(|&i| scores[i]).collect(),
    }
}

/// Fuses one impression. `member_scores` pairs each learner name with raw
/// scores aligned to `candidates`; every spec member must be present.
pub fn fuse<S: AsRef<str>>(
    impression_id: &str,
    candidates: &[S],
    member_scores: &[(&str, &[f64])],
    spec: &FusionSpec,
) -> Result<RankedList> {
    let comparable =
        spec.members
            .iter()
            .map(|m| {
                let (_, raw) = member_scores.iter().find(|(name, _)| *name == m.name).ok_or_else(|| {
                    EnsembleError::MissingMember {
                        member: m.name.clone(),
                        impression_id: impression_id.to_owned(),
                    }
                })?;
                if raw.len() != candidates.len() {
                    return Err(EnsembleError::LengthMismatch {
                        member: m.name.clone(),
                        impression_id: impression_id.to_owned(),
                        expected: candidates.len(),
                        got: raw.len(),
                    });
                }
                Ok(to_comparable(raw, spec.transform))
            })
            .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = spec.members.iter().map(|m| m.weight).collect();
    Ok(fuse_comparable(impression_id, candidates, &comparable, &weights))
}

/// Combines already-transformed member scores with `weights` (same order).
fn fuse_comparable<S: AsRef<str>>(
    impression_id: &str,
    candidates: &[S],
    comparable: &[Vec<f64>],
    weights: &[f64],
) -> RankedList {
    let total: f64 = weights.iter().sum();
    let fused: Vec<f64> = (0..candidates.len())
        .map(|c| comparable.iter().zip(weights).map(|(values, w)| w * values[c]).sum())
        .collect();
    let keys: Vec<i64> = fused.iter().map(|&s| tie_key(s, total)).collect();
    let order = rank_by(candidates, &keys);
    RankedList {
        impression_id: impression_id.to_owned(),
        articles: order.iter().map(|&i| candidates[i].as_ref().to_owned()).collect(),
        scores: order.iter().map(|&i| fused[i]).collect(),
    }
}

fn member_tables<'a>(tables: &'a [ScoreTable], spec: &FusionSpec) -> Result<Vec<&'a ScoreTable>> {
    spec.members
        .iter()
        .map(|m| {
            tables
                .iter()
                .find(|t| t.learner() == m.name)
                .ok_or_else(|| EnsembleError::MissingMember {
                    member: m.name.clone(),
                    impression_id: "*".into(),
                })
        })
        .collect()
}

/// Fuses every impression of `behaviors`; output follows file order.
pub fn fuse_tables(tables: &[ScoreTable], behaviors: &BehaviorSet, spec: &FusionSpec) -> Result<Vec<RankedList>> {
    let members = member_tables(tables, spec)?;
    for t in &members {
        t.check_coverage(behaviors)?;
    }
    behaviors
        .impressions()
        .par_iter()
        .map(|imp| {
            let candidates: Vec<&str> = imp.candidate_ids().collect();
            let scores: Vec<(&str, &[f64])> = members
                .iter()
                .map(|t| {
                    let row = t.get(&imp.impression_id).expect("coverage checked");
                    (t.learner(), row.scores.as_slice())
                })
                .collect();
            fuse(&imp.impression_id, &candidates, &scores, spec)
        })
        .collect()
}

/// Every weight vector on the simplex whose entries are multiples of `step`,
/// in lexicographic order of the weight tuples.
pub fn simplex_grid(members: usize, step: f64) -> Result<Vec<Vec<f64>>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(EnsembleError::BadStep(step));
    }
    let divisions = (1.0 / step).round();
    if (divisions * step - 1.0).abs() > 1e-9 {
        return Err(EnsembleError::BadStep(step));
    }
    let divisions = divisions as usize;
    let mut grid = Vec::new();
    let mut current = Vec::with_capacity(members);
    compositions(members, divisions, &mut current, &mut grid);
    Ok(grid
        .into_iter()
        .map(|parts| parts.into_iter().map(|k| k as f64 / divisions as f64).collect())
        .collect())
}

fn compositions(parts: usize, remaining: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        current.push(remaining);
        out.push(current.clone());
        current.pop();
        return;
    }
    for k in 0..=remaining {
        current.push(k);
        compositions(parts - 1, remaining - k, current, out);
        current.pop();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub weights: Vec<f64>,
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub objective: Objective,
    pub best: FusionSpec,
    pub best_value: f64,
    /// Every evaluated point, in enumeration order.
    pub grid: Vec<GridPoint>,
}

impl SweepResult {
    /// Aligned text table of the grid followed by the winner.
    pub fn render(&self) -> String {
        let names: Vec<&str> = self.best.members().iter().map(|m| m.name.as_str()).collect();
        let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(6);
        let mut out = String::new();
        for n in &names {
            out.push_str(&format!("{n:>width$}  "));
        }
        out.push_str(&format!("{:>8}\n", self.objective.to_string()));
        for point in &self.grid {
            for w in &point.weights {
                out.push_str(&format!("{w:>width$.4}  "));
            }
            match point.value {
                Some(v) => out.push_str(&format!("{v:>8.4}\n")),
                None => out.push_str(&format!("{:>8}\n", "-")),
            }
        }
        out.push_str(&format!(
            "best {} = {:.4} at {} ({})\n",
            self.objective,
            self.best_value,
            self.best.members_string(),
            self.best.transform()
        ));
        out
    }
}

/// Exhaustive search of simplex weights for `members` on a dev set. Ties
/// between weight vectors go to the first one in enumeration order.
pub fn sweep_weights<S: AsRef<str>>(
    tables: &[ScoreTable],
    members: &[S],
    behaviors: &BehaviorSet,
    objective: Objective,
    transform: Transform,
    step: f64,
) -> Result<SweepResult> {
    if members.len() < 2 {
        return Err(EnsembleError::TooFewMembers(members.len()));
    }
    if behaviors.is_empty() {
        return Err(EnsembleError::EmptyDevSet);
    }
    let grid = simplex_grid(members.len(), step)?;
    let probe = FusionSpec::uniform(members, transform)?;
    let tables = member_tables(tables, &probe)?;
    for t in &tables {
        t.check_coverage(behaviors)?;
    }

    // Transforms do not depend on weights; compute them once per impression.
    let comparable: Vec<Vec<Vec<f64>>> = behaviors
        .impressions()
        .par_iter()
        .map(|imp| {
            tables
                .iter()
                .map(|t| to_comparable(&t.get(&imp.impression_id).expect("coverage checked").scores, transform))
                .collect()
        })
        .collect();

    let values: Vec<Option<f64>> = grid
        .par_iter()
        .map(|weights| {
            let lists: Vec<RankedList> = behaviors
                .iter()
                .zip(&comparable)
                .map(|(imp, comp)| {
                    let candidates: Vec<&str> = imp.candidate_ids().collect();
                    fuse_comparable(&imp.impression_id, &candidates, comp, weights)
                })
                .collect();
            metrics::evaluate_rankings(&lists, behaviors).map(|r| r.value(objective))
        })
        .collect::<Result<_, MetricError>>()?;

    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    let (best_idx, best_value) = best.ok_or(EnsembleError::UndefinedObjective(objective))?;
    let best_spec = FusionSpec::new(
        members
            .iter()
            .zip(&grid[best_idx])
            .map(|(n, &w)| Member {
                name: n.as_ref().to_owned(),
                weight: w,
            })
            .collect(),
        transform,
    )?;
    Ok(SweepResult {
        objective,
        best: best_spec,
        best_value,
        grid: grid
            .into_iter()
            .zip(values)
            .map(|(weights, value)| GridPoint { weights, value })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(weights: &[(&str, f64)], transform: Transform) -> FusionSpec {
        FusionSpec::new(
            weights
                .iter()
                .map(|&(n, w)| Member {
                    name: n.into(),
                    weight: w,
                })
                .collect(),
            transform,
        )
        .unwrap()
    }

    #[test]
    fn comparable_examples() {
        let rr = to_comparable(&[0.9, 0.5, 0.1], Transform::ReciprocalRank);
        assert_eq!(rr[0], 1.0);
        assert_eq!(rr[1], 0.5);
        assert!((rr[2] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(to_comparable(&[2.0, 2.0, 2.0], Transform::MinmaxScore), vec![0.5; 3]);
        assert_eq!(to_comparable(&[3.0, 1.0, 2.0], Transform::Borda), vec![1.0, 0.0, 0.5]);
        assert_eq!(to_comparable(&[7.0], Transform::Borda), vec![1.0]);
        assert_eq!(
            to_comparable(&[4.0, 0.0, 2.0], Transform::MinmaxScore),
            vec![1.0, 0.0, 0.5]
        );
    }

    #[test]
    fn ties_share_the_better_rank() {
        assert_eq!(competition_ranks(&[0.5, 0.9, 0.5, 0.1]), vec![2, 1, 2, 4]);
        assert_eq!(
            to_comparable(&[0.5, 0.9, 0.5, 0.1], Transform::ReciprocalRank),
            vec![0.5, 1.0, 0.5, 0.25]
        );
    }

    #[test]
    fn fuse_crossed_lists_tie_breaks_by_id() {
        let s = spec(&[("l1", 0.5), ("l2", 0.5)], Transform::ReciprocalRank);
        let l1 = [2.0, 1.0];
        let l2 = [1.0, 2.0];
        let out = fuse("1", &["A", "B"], &[("l1", &l1), ("l2", &l2)], &s).unwrap();
        assert_eq!(out.articles, vec!["A", "B"]);
        assert_eq!(out.scores, vec![0.75, 0.75]);
    }

    #[test]
    fn fuse_projection_and_consensus() {
        let a = [0.1, 0.7, 0.4];
        let b = [0.9, 0.2, 0.3];
        let cands = ["X", "Y", "Z"];
        let proj = fuse(
            "1",
            &cands,
            &[("a", &a), ("b", &b)],
            &spec(&[("a", 1.0), ("b", 0.0)], Transform::Borda),
        )
        .unwrap();
        assert_eq!(proj.articles, rank_scores("1", &cands, &a).articles);
        let same = fuse(
            "1",
            &cands,
            &[("a", &a), ("b", &a)],
            &spec(&[("a", 0.3), ("b", 2.0)], Transform::MinmaxScore),
        )
        .unwrap();
        assert_eq!(same.articles, vec!["Y", "Z", "X"]);
    }

    #[test]
    fn fuse_missing_member() {
        let s = spec(&[("a", 1.0), ("b", 1.0)], Transform::ReciprocalRank);
        let a = [1.0];
        assert!(matches!(
            fuse("1", &["X"], &[("a", &a)], &s),
            Err(EnsembleError::MissingMember { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        let m = |n: &str, w: f64| Member {
            name: n.into(),
            weight: w,
        };
        assert!(matches!(
            FusionSpec::new(vec![], Transform::Borda),
            Err(EnsembleError::NoMembers)
        ));
        assert!(matches!(
            FusionSpec::new(vec![m("a", 0.0), m("b", 0.0)], Transform::Borda),
            Err(EnsembleError::ZeroWeights)
        ));
        assert!(matches!(
            FusionSpec::new(vec![m("a", -1.0)], Transform::Borda),
            Err(EnsembleError::BadWeight { .. })
        ));
        assert!(matches!(
            FusionSpec::new(vec![m("a", f64::NAN)], Transform::Borda),
            Err(EnsembleError::BadWeight { .. })
        ));
        assert!(matches!(
            FusionSpec::new(vec![m("a", 1.0), m("a", 2.0)], Transform::Borda),
            Err(EnsembleError::DuplicateMember(_))
        ));
    }

    #[test]
    fn members_string_round_trips() {
        let s = spec(&[("tfidf", 0.3), ("collab", 0.7)], Transform::Borda);
        let parsed = FusionSpec::parse_members(&s.members_string()).unwrap();
        assert_eq!(parsed, s.members());
        assert_eq!(FusionSpec::parse_members("a, b:2").unwrap()[0].weight, 1.0);
        assert!(FusionSpec::parse_members("a:x").is_err());
    }

    #[test]
    fn grid_enumeration() {
        assert_eq!(
            simplex_grid(2, 0.5).unwrap(),
            vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]
        );
        assert_eq!(simplex_grid(2, 0.1).unwrap().len(), 11);
        // C(10 + 2, 2) points for three members at step 0.1.
        assert_eq!(simplex_grid(3, 0.1).unwrap().len(), 66);
        assert!(simplex_grid(3, 0.1)
            .unwrap()
            .iter()
            .all(|w| (w.iter().sum::<f64>() - 1.0).abs() < 1e-12));
        assert_eq!(simplex_grid(3, 1.0).unwrap().len(), 3);
        for bad in [0.0, -0.1, 1.5, 0.3, f64::NAN] {
            assert!(simplex_grid(2, bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn transform_parse() {
        for t in Transform::ALL {
            assert_eq!(t.as_str().parse::<Transform>().unwrap(), t);
        }
        assert!("rrf".parse::<Transform>().is_err());
    }
}
