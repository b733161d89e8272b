//! Prediction files: one line per impression, ranks aligned with the
//! impression's candidate order.
//!
//! ```text
//! 1 [2,1,3]
//! 2 [1,2]
//! ```

use std::fmt::Write as _;

use crate::{dataset::BehaviorSet, ensemble::RankedList};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictionLine {
    pub impression_id: String,
    /// 1-based rank of each candidate, in behaviors-file candidate order.
    pub ranks: Vec<usize>,
}

/// Converts fused lists into rank lines aligned with `behaviors`.
pub fn from_ranked_lists(lists: &[RankedList], behaviors: &BehaviorSet) -> Result<Vec<PredictionLine>, String> {
    if lists.len() != behaviors.len() {
        return Err(format!(
            "{} ranked lists for {} impressions",
            lists.len(),
            behaviors.len()
        ));
    }
    lists
        .iter()
        .zip(behaviors)
        .map(|(list, imp)| {
            let ids: Vec<&str> = imp.candidate_ids().collect();
            let ranks = list
                .ranks_for(&ids)
                .filter(|_| list.impression_id == imp.impression_id)
                .ok_or_else(|| format!("ranked list {} does not match its impression", list.impression_id))?;
            Ok(PredictionLine {
                impression_id: imp.impression_id.clone(),
                ranks,
            })
        })
        .collect()
}

pub fn render(lines: &[PredictionLine]) -> String {
    let mut out = String::new();
    for line in lines {
        let ranks: Vec<String> = line.ranks.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{} [{}]", line.impression_id, ranks.join(","));
    }
    out
}

pub fn parse(text: &str) -> Result<Vec<PredictionLine>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, line)| {
            let err = |m: &str| format!("line {}: {m}", idx + 1);
            let (id, rest) = line
                .trim()
                .split_once(' ')
                .ok_or_else(|| err("expected \"<id> [ranks]\""))?;
            let inner = rest
                .trim()
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| err("ranks must be bracketed"))?;
            let ranks = inner
                .split(',')
                .map(|r| r.trim().parse::<usize>().map_err(|_| err("invalid rank")))
                .collect::<Result<Vec<_>, _>>()?;
            let mut seen = vec![false; ranks.len()];
            for &r in &ranks {
                if r == 0 || r > ranks.len() || std::mem::replace(&mut seen[r - 1], true) {
                    return Err(err("ranks are not a permutation of 1..n"));
                }
            }
            Ok(PredictionLine {
                impression_id: id.to_owned(),
                ranks,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render() {
        let lines = parse("1 [2,1,3]\n2 [1]\n").unwrap();
        assert_eq!(lines[0].ranks, vec![2, 1, 3]);
        assert_eq!(render(&lines), "1 [2,1,3]\n2 [1]\n");
    }

    #[test]
    fn rejects_non_permutations() {
        for bad in ["1 [1,1]", "1 [0,1]", "1 [1,3]", "1 1,2", "1", "1 [a]"] {
            assert!(parse(bad).is_err(), "{bad}");
        }
    }
}
