//! Base learners: each one scores every candidate of every impression.
//!
//! Content learners build a user profile from the click history and score
//! candidates by cosine similarity to it. External learners ingest scores
//! produced elsewhere (neural recommenders, other toolkits) from a TSV file:
//!
//! ```text
//! impression_id <TAB> article_id <TAB> score
//! ```
//!
//! Missing data never aborts a run: a candidate or history article without a
//! vector contributes nothing and is counted in the [`LearnerReport`].

use std::{
    collections::{HashMap, HashSet},
    fmt::{self, Write as _},
    fs,
    path::{Path, PathBuf},
    str::FromStr,
};

use rayon::prelude::*;
use thiserror::Error;

use crate::{
    dataset::{BehaviorSet, Catalog, DatasetError, Impression},
    text::{self, cosine_dense, cosine_sparse, EmbeddingTable, SparseVector, TextError, TfidfModel},
};

const MAX_LISTED_GAPS: usize = 10;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("{source_name}: duplicate score for impression {impression_id}, article {article_id} (line {line})")]
    Duplicate {
        source_name: String,
        line: usize,
        impression_id: String,
        article_id: String,
    },
    #[error("{source_name}: scores missing for {total} (impression, article) pairs, first: {}", format_pairs(.first))]
    Coverage {
        source_name: String,
        total: usize,
        first: Vec<(String, String)>,
    },
    #[error("{source_name}: {message}")]
    Invalid { source_name: String, message: String },
    #[error("learner {name}: {message}")]
    Spec { name: String, message: String },
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(i, a)| format!("{i}/{a}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T, E = LearnerError> = std::result::Result<T, E>;

/// Scores of one impression, aligned with its candidate order.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpressionScores {
    pub impression_id: String,
    pub article_ids: Vec<String>,
    pub scores: Vec<f64>,
}

/// One learner's scores over a behavior set, in behaviors-file order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    learner: String,
    rows: Vec<ImpressionScores>,
    index: HashMap<String, usize>,
}

impl ScoreTable {
    pub fn new(learner: impl Into<String>, rows: Vec<ImpressionScores>) -> Result<Self> {
        let learner = learner.into();
        let invalid = |message: String| LearnerError::Invalid {
            source_name: learner.clone(),
            message,
        };
        let mut index = HashMap::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.article_ids.len() != row.scores.len() {
                return Err(invalid(format!(
                    "impression {} has {} articles but {} scores",
                    row.impression_id,
                    row.article_ids.len(),
                    row.scores.len()
                )));
            }
            if let Some(pos) = row.scores.iter().position(|s| !s.is_finite()) {
                return Err(invalid(format!(
                    "non-finite score for impression {}, article {}",
                    row.impression_id, row.article_ids[pos]
                )));
            }
            if index.insert(row.impression_id.clone(), i).is_some() {
                return Err(invalid(format!("impression {} appears twice", row.impression_id)));
            }
        }
        Ok(Self { learner, rows, index })
    }

    pub fn learner(&self) -> &str {
        &self.learner
    }

    pub fn rows(&self) -> &[ImpressionScores] {
        &self.rows
    }

    pub fn get(&self, impression_id: &str) -> Option<&ImpressionScores> {
        self.index.get(impression_id).map(|&i| &self.rows[i])
    }

    /// Confirms the table holds exactly one score per (impression, candidate)
    /// of `behaviors`, aligned with candidate order.
    pub fn check_coverage(&self, behaviors: &BehaviorSet) -> Result<()> {
        let mut gaps = Vec::new();
        let mut total = 0;
        for imp in behaviors {
            let row = self.get(&imp.impression_id);
            for (pos, id) in imp.candidate_ids().enumerate() {
                let present = row.is_some_and(|r| r.article_ids.get(pos).map(String::as_str) == Some(id));
                if !present {
                    total += 1;
                    if gaps.len() < MAX_LISTED_GAPS {
                        gaps.push((imp.impression_id.clone(), id.to_owned()));
                    }
                }
            }
            if let Some(r) = row {
                if r.article_ids.len() != imp.candidates.len() {
                    return Err(LearnerError::Invalid {
                        source_name: self.learner.clone(),
                        message: format!(
                            "impression {} has {} scores for {} candidates",
                            imp.impression_id,
                            r.article_ids.len(),
                            imp.candidates.len()
                        ),
                    });
                }
            }
        }
        if total > 0 {
            return Err(LearnerError::Coverage {
                source_name: self.learner.clone(),
                total,
                first: gaps,
            });
        }
        if self.rows.len() != behaviors.len() {
            return Err(LearnerError::Invalid {
                source_name: self.learner.clone(),
                message: format!(
                    "{} impressions scored but the behavior set has {}",
                    self.rows.len(),
                    behaviors.len()
                ),
            });
        }
        Ok(())
    }

    /// Renders the table in the external score layout.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            for (id, s) in row.article_ids.iter().zip(&row.scores) {
                let _ = writeln!(out, "{}\t{}\t{}", row.impression_id, id, s);
            }
        }
        out
    }
}

pub fn load_external_scores(path: impl AsRef<Path>, learner: &str, behaviors: &BehaviorSet) -> Result<ScoreTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LearnerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_external_scores(&text, &path.display().to_string(), learner, behaviors)
}

pub fn parse_external_scores(
    text: &str,
    source_name: &str,
    learner: &str,
    behaviors: &BehaviorSet,
) -> Result<ScoreTable> {
    let parse_err = |line: usize, message: String| LearnerError::Parse {
        source_name: source_name.to_owned(),
        line,
        message,
    };
    let mut scores: HashMap<(&str, &str), f64> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [imp, article, score] = cols.as_slice() else {
            return Err(parse_err(
                lineno,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        };
        let value: f64 = score
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("invalid score {score:?}")))?;
        if !value.is_finite() {
            return Err(parse_err(lineno, format!("non-finite score {score:?}")));
        }
        if scores.insert((imp.trim(), article.trim()), value).is_some() {
            return Err(LearnerError::Duplicate {
                source_name: source_name.to_owned(),
                line: lineno,
                impression_id: imp.trim().to_owned(),
                article_id: article.trim().to_owned(),
            });
        }
    }

    let mut rows = Vec::with_capacity(behaviors.len());
    let mut gaps = Vec::new();
    let mut total_gaps = 0;
    let mut used = 0;
    for imp in behaviors {
        let mut row = ImpressionScores {
            impression_id: imp.impression_id.clone(),
            article_ids: Vec::with_capacity(imp.candidates.len()),
            scores: Vec::with_capacity(imp.candidates.len()),
        };
        for id in imp.candidate_ids() {
            match scores.get(&(imp.impression_id.as_str(), id)) {
                Some(&s) => {
                    used += 1;
                    row.article_ids.push(id.to_owned());
                    row.scores.push(s);
                }
                None => {
                    total_gaps += 1;
                    if gaps.len() < MAX_LISTED_GAPS {
                        gaps.push((imp.impression_id.clone(), id.to_owned()));
                    }
                }
            }
        }
        rows.push(row);
    }
    if total_gaps > 0 {
        return Err(LearnerError::Coverage {
            source_name: source_name.to_owned(),
            total: total_gaps,
            first: gaps,
        });
    }
    if used != scores.len() {
        return Err(LearnerError::Invalid {
            source_name: source_name.to_owned(),
            message: format!(
                "{} scored pairs do not belong to any impression candidate",
                scores.len() - used
            ),
        });
    }
    ScoreTable::new(learner, rows)
}

/// How a click history becomes a query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Aggregation {
    /// Cosine against the mean of the history vectors.
    #[default]
    Mean,
    /// Highest cosine against any single history vector.
    Max,
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            other => Err(format!("unknown aggregation {other:?} (expected mean or max)")),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Max => "max",
        })
    }
}

/// Scores for one impression plus counts of substituted lookups.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scored {
    pub scores: Vec<f64>,
    pub missing_candidates: usize,
    pub missing_history: usize,
}

pub trait Learner: Send + Sync {
    fn name(&self) -> &str;

    /// One finite score per candidate, in candidate order.
    fn score(&self, impression: &Impression) -> Scored;
}

pub fn score_tfidf(model: &TfidfModel, impression: &Impression, aggregation: Aggregation) -> Scored {
    let history: Vec<&SparseVector> = impression.history.iter().filter_map(|id| model.vector(id)).collect();
    let missing_history = impression.history.len() - history.len();
    let profile = match aggregation {
        Aggregation::Mean if !history.is_empty() => Some(
            SparseVector::sum(model.dim(), history.iter().copied())
                .expect("model vectors share one dimension")
                .normalized(),
        ),
        _ => None,
    };

    let mut out = Scored {
        missing_history,
        ..Default::default()
    };
    for id in impression.candidate_ids() {
        let Some(candidate) = model.vector(id) else {
            out.missing_candidates += 1;
            out.scores.push(0.0);
            continue;
        };
        let score = match (&profile, aggregation) {
            (Some(p), _) => cosine_sparse(p, candidate).expect("same dimension"),
            (None, Aggregation::Max) => history
                .iter()
                .map(|h| cosine_sparse(h, candidate).expect("same dimension"))
                .fold(None, |best: Option<f64>, s| Some(best.map_or(s, |b| b.max(s))))
                .unwrap_or(0.0),
            (None, Aggregation::Mean) => 0.0,
        };
        out.scores.push(score);
    }
    out
}

pub fn score_embedding(table: &EmbeddingTable, impression: &Impression, aggregation: Aggregation) -> Scored {
    let history: Vec<&[f64]> = impression.history.iter().filter_map(|id| table.get(id)).collect();
    let missing_history = impression.history.len() - history.len();
    let profile = (aggregation == Aggregation::Mean && !history.is_empty()).then(|| {
        let mut mean = vec![0.0; table.dim()];
        for h in &history {
            for (m, x) in mean.iter_mut().zip(*h) {
                *m += x;
            }
        }
        let n = history.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    });

    let mut out = Scored {
        missing_history,
        ..Default::default()
    };
    for id in impression.candidate_ids() {
        let Some(candidate) = table.get(id) else {
            out.missing_candidates += 1;
            out.scores.push(0.0);
            continue;
        };
        let score = match (&profile, aggregation) {
            (Some(p), _) => cosine_dense(p, candidate).expect("same dimension"),
            (None, Aggregation::Max) => history
                .iter()
                .map(|h| cosine_dense(h, candidate).expect("same dimension"))
                .fold(None, |best: Option<f64>, s| Some(best.map_or(s, |b| b.max(s))))
                .unwrap_or(0.0),
            (None, Aggregation::Mean) => 0.0,
        };
        out.scores.push(score);
    }
    out
}

pub struct TfidfLearner {
    name: String,
    model: TfidfModel,
    aggregation: Aggregation,
}

impl TfidfLearner {
    pub fn new(name: impl Into<String>, model: TfidfModel, aggregation: Aggregation) -> Self {
        Self {
            name: name.into(),
            model,
            aggregation,
        }
    }
}

impl Learner for TfidfLearner {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, impression: &Impression) -> Scored {
        score_tfidf(&self.model, impression, self.aggregation)
    }
}

pub struct EmbeddingLearner {
    name: String,
    table: EmbeddingTable,
    aggregation: Aggregation,
}

impl EmbeddingLearner {
    pub fn new(name: impl Into<String>, table: EmbeddingTable, aggregation: Aggregation) -> Self {
        Self {
            name: name.into(),
            table,
            aggregation,
        }
    }
}

impl Learner for EmbeddingLearner {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, impression: &Impression) -> Scored {
        score_embedding(&self.table, impression, self.aggregation)
    }
}

/// Replays a coverage-checked external score table.
pub struct ExternalLearner {
    table: ScoreTable,
}

impl ExternalLearner {
    pub fn new(table: ScoreTable) -> Self {
        Self { table }
    }
}

impl Learner for ExternalLearner {
    fn name(&self) -> &str {
        self.table.learner()
    }

    fn score(&self, impression: &Impression) -> Scored {
        let row = self.table.get(&impression.impression_id);
        let mut out = Scored::default();
        for id in impression.candidate_ids() {
            let score = row.and_then(|r| r.article_ids.iter().position(|a| a == id).map(|p| r.scores[p]));
            if score.is_none() {
                out.missing_candidates += 1;
            }
            out.scores.push(score.unwrap_or(0.0));
        }
        out
    }
}

/// Global click counts from a training behavior set.
pub struct PopularityLearner {
    name: String,
    clicks: HashMap<String, u64>,
}

impl PopularityLearner {
    pub fn from_behaviors(name: impl Into<String>, train: &BehaviorSet) -> Self {
        let mut clicks = HashMap::new();
        for imp in train {
            for c in imp.candidates.iter().filter(|c| c.label.is_clicked()) {
                *clicks.entry(c.article_id.clone()).or_insert(0) += 1;
            }
        }
        Self {
            name: name.into(),
            clicks,
        }
    }

    pub fn clicks(&self, article_id: &str) -> u64 {
        self.clicks.get(article_id).copied().unwrap_or(0)
    }
}

pub fn score_popularity(learner: &PopularityLearner, impression: &Impression) -> Scored {
    Scored {
        scores: impression.candidate_ids().map(|id| learner.clicks(id) as f64).collect(),
        ..Default::default()
    }
}

impl Learner for PopularityLearner {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, impression: &Impression) -> Scored {
        score_popularity(self, impression)
    }
}

/// Uniform noise in `[0, 1)`, a pure function of seed and (impression, article).
pub struct RandomLearner {
    name: String,
    seed: u64,
}

impl RandomLearner {
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        Self {
            name: name.into(),
            seed,
        }
    }
}

pub fn score_random(seed: u64, impression: &Impression) -> Scored {
    Scored {
        scores: impression
            .candidate_ids()
            .map(|id| unit_hash(seed, &impression.impression_id, id))
            .collect(),
        ..Default::default()
    }
}

impl Learner for RandomLearner {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, impression: &Impression) -> Scored {
        score_random(self.seed, impression)
    }
}

fn unit_hash(seed: u64, impression_id: &str, article_id: &str) -> f64 {
    // FNV-1a, then a splitmix64 finalizer keyed by the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in impression_id
        .bytes()
        .chain(std::iter::once(0xff))
        .chain(article_id.bytes())
    {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Substitution counts for one scoring run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LearnerReport {
    pub learner: String,
    pub impressions: usize,
    pub pairs: usize,
    pub missing_candidates: usize,
    pub missing_history: usize,
}

impl fmt::Display for LearnerReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "learner             {}", self.learner)?;
        writeln!(f, "impressions         {}", self.impressions)?;
        writeln!(f, "scored pairs        {}", self.pairs)?;
        writeln!(f, "missing candidates  {}", self.missing_candidates)?;
        writeln!(f, "missing history     {}", self.missing_history)
    }
}

/// Scores every impression, in parallel on the current rayon pool. Output
/// order follows `behaviors`.
pub fn score_behaviors(learner: &dyn Learner, behaviors: &BehaviorSet) -> Result<(ScoreTable, LearnerReport)> {
    let scored: Vec<Scored> = behaviors
        .impressions()
        .par_iter()
        .map(|imp| learner.score(imp))
        .collect();

    let mut report = LearnerReport {
        learner: learner.name().to_owned(),
        impressions: behaviors.len(),
        ..Default::default()
    };
    let mut rows = Vec::with_capacity(behaviors.len());
    for (imp, s) in behaviors.iter().zip(scored) {
        assert_eq!(
            s.scores.len(),
            imp.candidates.len(),
            "learner {} must score every candidate",
            learner.name()
        );
        report.pairs += s.scores.len();
        report.missing_candidates += s.missing_candidates;
        report.missing_history += s.missing_history;
        rows.push(ImpressionScores {
            impression_id: imp.impression_id.clone(),
            article_ids: imp.candidate_ids().map(str::to_owned).collect(),
            scores: s.scores,
        });
    }
    if report.missing_candidates + report.missing_history > 0 {
        log::warn!(
            "learner {}: {} candidate and {} history lookups substituted with zero",
            report.learner,
            report.missing_candidates,
            report.missing_history
        );
    }
    Ok((ScoreTable::new(learner.name(), rows)?, report))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LearnerKind {
    Tfidf {
        aggregation: Aggregation,
    },
    Embedding {
        path: PathBuf,
        aggregation: Aggregation,
    },
    External {
        path: PathBuf,
    },
    Popularity {
        train: PathBuf,
    },
    /// Falls back to the run seed when `seed` is unset.
    Random {
        seed: Option<u64>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LearnerSpec {
    pub name: String,
    pub kind: LearnerKind,
}

impl LearnerSpec {
    /// Parses `"<kind> key=value ..."`, e.g. `"embedding path=emb.txt aggregation=max"`.
    /// Relative paths are resolved against `base_dir`.
    pub fn parse(name: &str, definition: &str, base_dir: &Path) -> Result<Self> {
        let spec_err = |message: String| LearnerError::Spec {
            name: name.to_owned(),
            message,
        };
        let mut fields = definition.split_whitespace();
        let kind = fields
            .next()
            .ok_or_else(|| spec_err("empty learner definition".into()))?;
        let mut params: HashMap<&str, &str> = HashMap::new();
        for field in fields {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| spec_err(format!("expected key=value, found {field:?}")))?;
            if params.insert(k, v).is_some() {
                return Err(spec_err(format!("parameter {k} given twice")));
            }
        }
        let mut take = |key: &str| params.remove(key);
        let path = |value: Option<&str>, key: &str| -> Result<PathBuf> {
            let v = value.ok_or_else(|| spec_err(format!("{kind} learner needs {key}=<path>")))?;
            Ok(base_dir.join(v))
        };
        let aggregation = |value: Option<&str>| -> Result<Aggregation> {
            value.map_or(Ok(Aggregation::Mean), |v| v.parse().map_err(spec_err))
        };

        let kind = match kind {
            "tfidf" => LearnerKind::Tfidf {
                aggregation: aggregation(take("aggregation"))?,
            },
            "embedding" => LearnerKind::Embedding {
                path: path(take("path"), "path")?,
                aggregation: aggregation(take("aggregation"))?,
            },
            "external" => LearnerKind::External {
                path: path(take("path"), "path")?,
            },
            "popularity" => LearnerKind::Popularity {
                train: path(take("train"), "train")?,
            },
            "random" => LearnerKind::Random {
                seed: take("seed")
                    .map(|s| s.parse().map_err(|_| spec_err(format!("invalid seed {s:?}"))))
                    .transpose()?,
            },
            other => {
                return Err(spec_err(format!(
                    "unknown kind {other:?} (expected tfidf, embedding, external, popularity or random)"
                )))
            }
        };
        if let Some(extra) = params.keys().next() {
            return Err(spec_err(format!("unexpected parameter {extra}")));
        }
        Ok(Self {
            name: name.to_owned(),
            kind,
        })
    }

    /// Files this learner reads.
    pub fn paths(&self) -> Vec<&Path> {
        match &self.kind {
            LearnerKind::Embedding { path, .. } | LearnerKind::External { path } => vec![path],
            LearnerKind::Popularity { train } => vec![train],
            LearnerKind::Tfidf { .. } | LearnerKind::Random { .. } => Vec::new(),
        }
    }

    /// Instantiates the learner against the evaluation data.
    pub fn build(&self, catalog: &Catalog, behaviors: &BehaviorSet, run_seed: u64) -> Result<Box<dyn Learner>> {
        let name = self.name.clone();
        Ok(match &self.kind {
            LearnerKind::Tfidf { aggregation } => {
                Box::new(TfidfLearner::new(name, text::fit_tfidf(catalog)?, *aggregation))
            }
            LearnerKind::Embedding { path, aggregation } => {
                Box::new(EmbeddingLearner::new(name, text::load_embeddings(path)?, *aggregation))
            }
            LearnerKind::External { path } => {
                Box::new(ExternalLearner::new(load_external_scores(path, &name, behaviors)?))
            }
            LearnerKind::Popularity { train } => Box::new(PopularityLearner::from_behaviors(
                name,
                &crate::dataset::parse_behaviors(train)?,
            )),
            LearnerKind::Random { seed } => Box::new(RandomLearner::new(name, seed.unwrap_or(run_seed))),
        })
    }
}

/// Distinct names of a learner list, rejecting duplicates.
pub fn unique_names(specs: &[LearnerSpec]) -> Result<HashSet<&str>> {
    let mut names = HashSet::new();
    for s in specs {
        if !names.insert(s.name.as_str()) {
            return Err(LearnerError::Spec {
                name: s.name.clone(),
                message: "learner name used twice".into(),
            });
        }
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_behaviors_str, parse_news_str};
    use crate::text::TokenizedDoc;

    fn impression(history: &[&str], candidates: &[&str]) -> Impression {
        let cands = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c}-{}", u8::from(i == 0)))
            .collect::<Vec<_>>()
            .join(" ");
        let line = format!("1\tU1\t11/11/2019 9:05:58 AM\t{}\t{cands}", history.join(" "));
        parse_behaviors_str(&line, "t").unwrap().impressions()[0].clone()
    }

    fn behaviors(text: &str) -> BehaviorSet {
        parse_behaviors_str(text, "b").unwrap()
    }

    #[test]
    fn tfidf_self_similarity() {
        let model = TfidfModel::fit(&[
            TokenizedDoc::new("X", "royal queen crown"),
            TokenizedDoc::new("Y", "football goal match"),
        ])
        .unwrap();
        let s = score_tfidf(&model, &impression(&["X"], &["X", "Y"]), Aggregation::Mean);
        assert!((s.scores[0] - 1.0).abs() < 1e-12);
        assert_eq!(s.scores[1], 0.0);
        let cold = score_tfidf(&model, &impression(&[], &["X", "Y"]), Aggregation::Mean);
        assert_eq!(cold.scores, vec![0.0, 0.0]);
        let cold = score_tfidf(&model, &impression(&[], &["X", "Y"]), Aggregation::Max);
        assert_eq!(cold.scores, vec![0.0, 0.0]);
    }

    #[test]
    fn tfidf_missing_ids_are_counted() {
        let model = TfidfModel::fit(&[TokenizedDoc::new("X", "a b"), TokenizedDoc::new("Y", "c")]).unwrap();
        let s = score_tfidf(&model, &impression(&["X", "Gone"], &["Y", "Nope"]), Aggregation::Mean);
        assert_eq!(s.scores, vec![0.0, 0.0]);
        assert_eq!(s.missing_candidates, 1);
        assert_eq!(s.missing_history, 1);
    }

    #[test]
    fn embedding_scores() {
        let table = text::parse_embeddings("dim 2\nA 1 0\nB 0 1\nC 1 1\nZ 0 0\n", "e").unwrap();
        let s = score_embedding(&table, &impression(&["A"], &["A", "B", "C"]), Aggregation::Mean);
        assert_eq!(s.scores[0], 1.0);
        assert_eq!(s.scores[1], 0.0);
        assert!((s.scores[2] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);

        let zero = score_embedding(&table, &impression(&["Z", "Z"], &["A", "C"]), Aggregation::Mean);
        assert_eq!(zero.scores, vec![0.0, 0.0]);

        // Mean of A and B is (0.5, 0.5): parallel to C.
        let s = score_embedding(&table, &impression(&["A", "B"], &["C", "A"]), Aggregation::Mean);
        assert!((s.scores[0] - 1.0).abs() < 1e-12);
        assert!((s.scores[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let s = score_embedding(&table, &impression(&["A", "B"], &["C", "A"]), Aggregation::Max);
        assert!((s.scores[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(s.scores[1], 1.0);
    }

    #[test]
    fn external_scores_load() {
        let set = behaviors("1\tU1\tt\t\tN1-1 N2-0\n");
        let t = parse_external_scores("1\tN2\t0.25\n1\tN1\t0.5\n", "s", "ext", &set).unwrap();
        assert_eq!(t.rows()[0].article_ids, vec!["N1", "N2"]);
        assert_eq!(t.rows()[0].scores, vec![0.5, 0.25]);
        t.check_coverage(&set).unwrap();
    }

    #[test]
    fn external_scores_errors() {
        let set = behaviors("1\tU1\tt\t\tN1-1 N2-0\n");
        assert!(matches!(
            parse_external_scores("1\tN1\t0.5\n", "s", "ext", &set),
            Err(LearnerError::Coverage { total: 1, .. })
        ));
        assert!(matches!(
            parse_external_scores("1\tN1\t0.5\n1\tN1\t0.5\n1\tN2\t1\n", "s", "ext", &set),
            Err(LearnerError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(
            parse_external_scores("1\tN1\tNaN\n1\tN2\t1\n", "s", "ext", &set),
            Err(LearnerError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_external_scores("1\tN1\t1\n1\tN2\t1\n2\tN3\t1\n", "s", "ext", &set),
            Err(LearnerError::Invalid { .. })
        ));
        assert!(matches!(
            parse_external_scores("1\tN1\n", "s", "ext", &set),
            Err(LearnerError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn coverage_error_lists_at_most_ten_gaps() {
        let cands: Vec<String> = (0..15).map(|i| format!("N{i}-0")).collect();
        let set = behaviors(&format!("1\tU1\tt\t\t{}\n", cands.join(" ")));
        match parse_external_scores("", "s", "ext", &set) {
            Err(LearnerError::Coverage { total, first, .. }) => {
                assert_eq!(total, 15);
                assert_eq!(first.len(), 10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn popularity_counts() {
        let train = behaviors("1\tU1\tt\t\tA-1 B-1 C-0\n2\tU2\tt\t\tA-1 B-0\n3\tU3\tt\t\tA-1\n");
        let p = PopularityLearner::from_behaviors("pop", &train);
        let s = score_popularity(&p, &impression(&[], &["A", "B", "Unseen"]));
        assert_eq!(s.scores, vec![3.0, 1.0, 0.0]);
    }

    #[test]
    fn random_is_keyed_and_uniform() {
        let imp = impression(&[], &["A", "B", "C", "D", "E", "F"]);
        let a = score_random(7, &imp);
        assert_eq!(a, score_random(7, &imp));
        assert_ne!(a.scores, score_random(8, &imp).scores);
        assert!(a.scores.iter().all(|s| (0.0..1.0).contains(s)));
    }

    #[test]
    fn score_behaviors_is_ordered_and_total() {
        let catalog = parse_news_str("A\tc\ts\tqueen crown\t\nB\tc\ts\tfootball\t\n", "n").unwrap();
        let set = behaviors("2\tU1\tt\tA\tA-1 B-0\n1\tU2\tt\t\tB-1 A-0 Q-0\n");
        let learner = TfidfLearner::new("tfidf", text::fit_tfidf(&catalog).unwrap(), Aggregation::Mean);
        let (table, report) = score_behaviors(&learner, &set).unwrap();
        table.check_coverage(&set).unwrap();
        assert_eq!(table.rows()[0].impression_id, "2");
        assert_eq!(report.pairs, 5);
        assert_eq!(report.missing_candidates, 1);
        assert!(report.to_string().contains("missing candidates  1"));
    }

    #[test]
    fn learner_spec_parsing() {
        let base = Path::new("/data");
        let s = LearnerSpec::parse("bert", "embedding path=emb.txt aggregation=max", base).unwrap();
        assert_eq!(
            s.kind,
            LearnerKind::Embedding {
                path: PathBuf::from("/data/emb.txt"),
                aggregation: Aggregation::Max
            }
        );
        assert_eq!(
            LearnerSpec::parse("r", "random seed=3", base).unwrap().kind,
            LearnerKind::Random { seed: Some(3) }
        );
        assert!(LearnerSpec::parse("x", "external", base).is_err());
        assert!(LearnerSpec::parse("x", "tfidf aggregation=median", base).is_err());
        assert!(LearnerSpec::parse("x", "tfidf color=red", base).is_err());
        assert!(LearnerSpec::parse("x", "lstur", base).is_err());
    }
}
