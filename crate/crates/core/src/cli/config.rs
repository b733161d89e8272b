//! Plain-text run configuration.
//!
//! ```text
//! # experiment 1
//! news = data/news.tsv
//! behaviors = data/behaviors.tsv
//! out = runs/exp1
//! seed = 42
//! learner.tfidf = tfidf
//! learner.bert = embedding path=data/emb.txt
//! learner.lstur = external path=data/lstur_scores.tsv
//! fusion.members = tfidf:1,lstur:1
//! fusion.transform = reciprocal_rank
//! objective = auc
//! step = 0.1
//! ```
//!
//! Relative paths resolve against the config file's directory. Command-line
//! flags override these values.

use std::{
    fs,
    path::{Path, PathBuf},
};

use crate::{
    ensemble::{FusionSpec, Member, Transform},
    learners::{unique_names, LearnerSpec},
    metrics::Objective,
};

pub const DEFAULT_STEP: f64 = 0.1;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub news: Option<PathBuf>,
    pub behaviors: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub workers: Option<usize>,
    pub learners: Vec<LearnerSpec>,
    pub fusion_members: Vec<Member>,
    pub transform: Transform,
    pub objective: Objective,
    pub step: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            news: None,
            behaviors: None,
            out: PathBuf::from("."),
            seed: DEFAULT_SEED,
            workers: None,
            learners: Vec::new(),
            fusion_members: Vec::new(),
            transform: Transform::default(),
            objective: Objective::default(),
            step: DEFAULT_STEP,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut config = Self {
            out: base.to_path_buf(),
            ..Self::default()
        };
        config
            .apply(&text, base)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(config)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply(&mut self, text: &str, base: &Path) -> Result<(), String> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", idx + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let at = |e: String| format!("line {}: {e}", idx + 1);
            match key {
                "news" => self.news = Some(base.join(value)),
                "behaviors" => self.behaviors = Some(base.join(value)),
                "out" => self.out = base.join(value),
                "seed" => self.seed = value.parse().map_err(|_| at(format!("invalid seed {value:?}")))?,
                "workers" => {
                    self.workers = Some(parse_workers(value).map_err(at)?);
                }
                "fusion.members" => {
                    self.fusion_members = FusionSpec::parse_members(value).map_err(at)?;
                }
                "fusion.transform" => self.transform = value.parse().map_err(at)?,
                "objective" => self.objective = value.parse().map_err(at)?,
                "step" => self.step = value.parse().map_err(|_| at(format!("invalid step {value:?}")))?,
                _ => match key.strip_prefix("learner.") {
                    Some(name) if !name.is_empty() => {
                        let spec = LearnerSpec::parse(name, value, base).map_err(|e| at(e.to_string()))?;
                        self.learners.retain(|l| l.name != spec.name);
                        self.learners.push(spec);
                    }
                    _ => return Err(at(format!("unknown key {key:?}"))),
                },
            }
        }
        unique_names(&self.learners).map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn learner(&self, name: &str) -> Option<&LearnerSpec> {
        self.learners.iter().find(|l| l.name == name)
    }

    pub fn learner_names(&self) -> Vec<&str> {
        self.learners.iter().map(|l| l.name.as_str()).collect()
    }

    /// Every input file the config references that does not exist.
    pub fn missing_paths(&self) -> Vec<PathBuf> {
        self.news
            .iter()
            .chain(self.behaviors.iter())
            .map(PathBuf::as_path)
            .chain(self.learners.iter().flat_map(|l| l.paths()))
            .filter(|p| !p.exists())
            .map(Path::to_path_buf)
            .collect()
    }
}

pub fn parse_workers(value: &str) -> Result<usize, String> {
    value
        .parse::<usize>()
        .ok()
        .filter(|&w| w > 0)
        .ok_or_else(|| format!("workers must be a positive integer, got {value:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Aggregation, LearnerKind};

    #[test]
    fn parses_full_config() {
        let mut c = RunConfig::default();
        c.apply(
            "# comment\nnews = n.tsv\nbehaviors = b.tsv\nseed = 7\nout = run\n\
             learner.tfidf = tfidf aggregation=max\nlearner.collab = external path=s.tsv\n\
             fusion.members = tfidf:0.25, collab:0.75\nfusion.transform = borda\n\
             objective = ndcg10\nstep = 0.25\nworkers = 3\n",
            Path::new("/exp"),
        )
        .unwrap();
        assert_eq!(c.news.as_deref(), Some(Path::new("/exp/n.tsv")));
        assert_eq!(c.out, Path::new("/exp/run"));
        assert_eq!(c.seed, 7);
        assert_eq!(c.workers, Some(3));
        assert_eq!(c.learner_names(), vec!["tfidf", "collab"]);
        assert_eq!(
            c.learner("tfidf").unwrap().kind,
            LearnerKind::Tfidf {
                aggregation: Aggregation::Max
            }
        );
        assert_eq!(c.fusion_members[1].weight, 0.75);
        assert_eq!(c.transform, Transform::Borda);
        assert_eq!(c.objective, Objective::Ndcg10);
        assert_eq!(c.step, 0.25);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        for bad in [
            "color = red",
            "seed = x",
            "fusion.transform = rrf",
            "objective = ndcg7",
            "novalue",
            "workers = 0",
        ] {
            assert!(RunConfig::default().apply(bad, Path::new(".")).is_err(), "{bad}");
        }
    }

    #[test]
    fn missing_paths_are_listed() {
        let mut c = RunConfig::default();
        c.apply(
            "news = /definitely/not/here.tsv\nlearner.x = external path=/nope.tsv",
            Path::new("/"),
        )
        .unwrap();
        assert_eq!(c.missing_paths().len(), 2);
    }
}
