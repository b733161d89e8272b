//! MIND-format news catalog and behavior logs.
//!
//! Two tab-separated inputs:
//!
//! ```text
//! news.tsv       id  category  subcategory  title  abstract  [ignored...]
//! behaviors.tsv  impression_id  user_id  time  history  impressions
//! ```
//!
//! `history` is a space-separated list of article ids (possibly empty) and
//! `impressions` a space-separated list of `<article>-<label>` tokens where
//! `-1` marks a click and `-0` a skip. LF and CRLF line endings are accepted.

use std::{
    borrow::Cow,
    collections::HashSet,
    fmt::{self, Write as _},
    fs,
    path::Path,
};

use chrono::NaiveDateTime;
use indexmap::IndexMap;
use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Timestamp layout used by MIND, e.g. `11/11/2019 9:05:58 AM`.
pub const TIME_FORMAT: &str = "%m/%d/%Y %I:%M:%S %p";

const NEWS_COLUMNS: usize = 5;
const BEHAVIOR_COLUMNS: usize = 5;

#[derive(Debug, Error)]
pub enum DatasetError {
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
    #[error("{source_name}: {message}")]
    Validation { source_name: String, message: String },
    #[error("cannot draw {requested} impressions from a set of {available}")]
    SubsampleTooLarge { requested: usize, available: usize },
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// Click label of one candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    NotClicked,
    Clicked,
}

impl Label {
    pub fn is_clicked(self) -> bool {
        matches!(self, Label::Clicked)
    }

    fn suffix(self) -> &'static str {
        match self {
            Label::NotClicked => "0",
            Label::Clicked => "1",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NewsArticle {
    pub id: String,
    pub category: String,
    pub subcategory: String,
    pub title: String,
    pub abstract_text: String,
}

impl NewsArticle {
    /// Stand-in for an article referenced by a behavior log but absent from
    /// the catalog. It carries no text.
    pub fn placeholder(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            category: String::new(),
            subcategory: String::new(),
            title: String::new(),
            abstract_text: String::new(),
        }
    }

    /// Title and abstract joined by a space, the text content learners see.
    pub fn text(&self) -> String {
        format!("{} {}", self.title, self.abstract_text)
    }
}

/// Articles keyed by id, in file order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Catalog {
    articles: IndexMap<String, NewsArticle>,
}

impl Catalog {
    pub fn from_articles(articles: impl IntoIterator<Item = NewsArticle>) -> Result<Self> {
        let mut catalog = Catalog::default();
        for article in articles {
            if catalog.articles.contains_key(&article.id) {
                return Err(DatasetError::Validation {
                    source_name: "catalog".into(),
                    message: format!("duplicate article id {}", article.id),
                });
            }
            catalog.articles.insert(article.id.clone(), article);
        }
        Ok(catalog)
    }

    pub fn get(&self, id: &str) -> Option<&NewsArticle> {
        self.articles.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.articles.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NewsArticle> {
        self.articles.values()
    }

    /// Adds an empty placeholder for every id the behaviors reference but the
    /// catalog lacks. Returns how many were added.
    pub fn fill_placeholders(&mut self, behaviors: &BehaviorSet) -> usize {
        let mut added = 0;
        for impression in behaviors.iter() {
            for id in impression.referenced_ids() {
                if !self.articles.contains_key(id) {
                    self.articles.insert(id.to_owned(), NewsArticle::placeholder(id));
                    added += 1;
                }
            }
        }
        if added > 0 {
            warn!("synthesized {added} placeholder articles for ids missing from the catalog");
        }
        added
    }

    /// Renders the catalog in the five-column news layout.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for a in self.iter() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                a.id, a.category, a.subcategory, a.title, a.abstract_text
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub article_id: String,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Impression {
    pub impression_id: String,
    pub user_id: String,
    /// Time column exactly as it appeared in the file.
    pub time: String,
    /// Parsed `time`, `None` when it did not match [`TIME_FORMAT`].
    pub timestamp: Option<NaiveDateTime>,
    pub history: Vec<String>,
    pub candidates: Vec<Candidate>,
}

impl Impression {
    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.candidates.iter().map(|c| c.label)
    }

    pub fn clicks(&self) -> usize {
        self.labels().filter(|l| l.is_clicked()).count()
    }

    pub fn candidate_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.candidates.iter().map(|c| c.article_id.as_str())
    }

    /// History ids followed by candidate ids.
    pub fn referenced_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.history.iter().map(String::as_str).chain(self.candidate_ids())
    }

    fn write_tsv(&self, out: &mut String) {
        let candidates = self
            .candidates
            .iter()
            .map(|c| format!("{}-{}", c.article_id, c.label.suffix()))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            self.impression_id,
            self.user_id,
            self.time,
            self.history.join(" "),
            candidates
        );
    }
}

/// Impressions in file order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BehaviorSet {
    impressions: Vec<Impression>,
    source: String,
}

impl BehaviorSet {
    pub fn new(impressions: Vec<Impression>, source: impl Into<String>) -> Result<Self> {
        let source = source.into();
        let mut seen = HashSet::with_capacity(impressions.len());
        for imp in &impressions {
            if !seen.insert(imp.impression_id.as_str()) {
                return Err(DatasetError::Validation {
                    source_name: source,
                    message: format!("duplicate impression id {}", imp.impression_id),
                });
            }
            if imp.candidates.is_empty() {
                return Err(DatasetError::Validation {
                    source_name: source,
                    message: format!("impression {} has no candidates", imp.impression_id),
                });
            }
        }
        Ok(Self { impressions, source })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.impressions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.impressions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Impression> {
        self.impressions.iter()
    }

    pub fn impressions(&self) -> &[Impression] {
        &self.impressions
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for imp in &self.impressions {
            imp.write_tsv(&mut out);
        }
        out
    }
}

impl<'a> IntoIterator for &'a BehaviorSet {
    type Item = &'a Impression;
    type IntoIter = std::slice::Iter<'a, Impression>;

    fn into_iter(self) -> Self::IntoIter {
        self.impressions.iter()
    }
}

fn read_lossy(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(decode_lossy(&bytes, &path.display().to_string()))
}

fn decode_lossy(bytes: &[u8], source_name: &str) -> String {
    match String::from_utf8_lossy(bytes) {
        Cow::Borrowed(s) => s.to_owned(),
        Cow::Owned(s) => {
            warn!("{source_name}: invalid UTF-8 replaced with U+FFFD");
            s
        }
    }
}

fn parse_error(source_name: &str, line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        source_name: source_name.to_owned(),
        line,
        message: message.into(),
    }
}

pub fn parse_news(path: impl AsRef<Path>) -> Result<Catalog> {
    let path = path.as_ref();
    parse_news_str(&read_lossy(path)?, &path.display().to_string())
}

pub fn parse_news_bytes(bytes: &[u8], source_name: &str) -> Result<Catalog> {
    parse_news_str(&decode_lossy(bytes, source_name), source_name)
}

pub fn parse_news_str(text: &str, source_name: &str) -> Result<Catalog> {
    let mut catalog = Catalog::default();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < NEWS_COLUMNS {
            return Err(parse_error(
                source_name,
                lineno,
                format!(
                    "expected at least {NEWS_COLUMNS} tab-separated columns, found {}",
                    cols.len()
                ),
            ));
        }
        let id = cols[0].trim();
        if id.is_empty() {
            return Err(parse_error(source_name, lineno, "empty article id"));
        }
        if cols[3].trim().is_empty() {
            return Err(parse_error(
                source_name,
                lineno,
                format!("article {id} has an empty title"),
            ));
        }
        if catalog.contains(id) {
            return Err(DatasetError::Validation {
                source_name: source_name.to_owned(),
                message: format!("duplicate article id {id} at line {lineno}"),
            });
        }
        catalog.articles.insert(
            id.to_owned(),
            NewsArticle {
                id: id.to_owned(),
                category: cols[1].to_owned(),
                subcategory: cols[2].to_owned(),
                title: cols[3].to_owned(),
                abstract_text: cols[4].to_owned(),
            },
        );
    }
    Ok(catalog)
}

pub fn parse_behaviors(path: impl AsRef<Path>) -> Result<BehaviorSet> {
    let path = path.as_ref();
    parse_behaviors_str(&read_lossy(path)?, &path.display().to_string())
}

pub fn parse_behaviors_str(text: &str, source_name: &str) -> Result<BehaviorSet> {
    let mut impressions = Vec::new();
    let mut bad_times = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let imp = parse_behavior_line(line, source_name, lineno)?;
        if imp.timestamp.is_none() {
            bad_times += 1;
        }
        impressions.push(imp);
    }
    if bad_times > 0 {
        warn!("{source_name}: {bad_times} timestamps did not match {TIME_FORMAT:?}");
    }
    BehaviorSet::new(impressions, source_name)
}

fn parse_behavior_line(line: &str, source_name: &str, lineno: usize) -> Result<Impression> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != BEHAVIOR_COLUMNS {
        return Err(parse_error(
            source_name,
            lineno,
            format!(
                "expected {BEHAVIOR_COLUMNS} tab-separated columns, found {}",
                cols.len()
            ),
        ));
    }
    let impression_id = cols[0].trim();
    if impression_id.is_empty() || !impression_id.bytes().all(|b| b.is_ascii_digit()) {
        return Err(parse_error(
            source_name,
            lineno,
            format!("impression id {impression_id:?} is not an integer"),
        ));
    }
    let user_id = cols[1].trim();
    if user_id.is_empty() {
        return Err(parse_error(source_name, lineno, "empty user id"));
    }
    let time = cols[2].trim();
    let history: Vec<String> = cols[3].split_whitespace().map(str::to_owned).collect();

    let mut candidates = Vec::new();
    let mut seen = HashSet::new();
    for token in cols[4].split_whitespace() {
        let (article_id, label) = parse_candidate(token).ok_or_else(|| {
            parse_error(
                source_name,
                lineno,
                format!("candidate {token:?} lacks a -0/-1 click suffix"),
            )
        })?;
        if !seen.insert(article_id) {
            return Err(parse_error(
                source_name,
                lineno,
                format!("candidate {article_id} listed twice"),
            ));
        }
        candidates.push(Candidate {
            article_id: article_id.to_owned(),
            label,
        });
    }
    if candidates.is_empty() {
        return Err(DatasetError::Validation {
            source_name: source_name.to_owned(),
            message: format!("line {lineno}: impression {impression_id} has no candidates"),
        });
    }

    Ok(Impression {
        impression_id: impression_id.to_owned(),
        user_id: user_id.to_owned(),
        time: time.to_owned(),
        timestamp: NaiveDateTime::parse_from_str(time, TIME_FORMAT).ok(),
        history,
        candidates,
    })
}

fn parse_candidate(token: &str) -> Option<(&str, Label)> {
    let (id, suffix) = token.rsplit_once('-')?;
    let label = match suffix {
        "1" => Label::Clicked,
        "0" => Label::NotClicked,
        _ => return None,
    };
    (!id.is_empty()).then_some((id, label))
}

/// Outcome of cross-checking behaviors against a catalog.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Referenced ids absent from the catalog, first-seen order, deduplicated.
    pub missing_ids: Vec<String>,
    /// Impressions without any click; excluded from every rank metric.
    pub no_clicks: Vec<String>,
    /// Impressions whose candidates are all clicked; degenerate for AUC.
    pub all_clicked: Vec<String>,
    pub impressions: usize,
    pub candidates: usize,
    pub clicks: usize,
    pub articles: usize,
}

impl ValidationReport {
    pub fn issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        issues.extend(self.missing_ids.iter().map(|id| format!("missing article {id}")));
        issues.extend(self.no_clicks.iter().map(|id| format!("impression {id} has no clicks")));
        issues.extend(
            self.all_clicked
                .iter()
                .map(|id| format!("impression {id} is degenerate for AUC (all clicked)")),
        );
        issues
    }

    pub fn is_clean(&self) -> bool {
        self.missing_ids.is_empty() && self.no_clicks.is_empty() && self.all_clicked.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "articles {}  impressions {}  candidates {}  clicks {}",
            self.articles, self.impressions, self.candidates, self.clicks
        )?;
        writeln!(
            f,
            "missing ids {}  no-click impressions {}  all-clicked impressions {}",
            self.missing_ids.len(),
            self.no_clicks.len(),
            self.all_clicked.len()
        )
    }
}

pub fn validate(catalog: &Catalog, behaviors: &BehaviorSet) -> ValidationReport {
    let mut report = ValidationReport {
        impressions: behaviors.len(),
        articles: catalog.len(),
        ..Default::default()
    };
    let mut missing = HashSet::new();
    for imp in behaviors {
        for id in imp.referenced_ids() {
            if !catalog.contains(id) && missing.insert(id) {
                report.missing_ids.push(id.to_owned());
            }
        }
        let clicks = imp.clicks();
        report.candidates += imp.candidates.len();
        report.clicks += clicks;
        if clicks == 0 {
            report.no_clicks.push(imp.impression_id.clone());
        } else if clicks == imp.candidates.len() {
            report.all_clicked.push(imp.impression_id.clone());
        }
    }
    report
}

/// Draws `n` impressions without replacement, keeping file order.
pub fn subsample(behaviors: &BehaviorSet, n: usize, seed: u64) -> Result<BehaviorSet> {
    if n > behaviors.len() {
        return Err(DatasetError::SubsampleTooLarge {
            requested: n,
            available: behaviors.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, behaviors.len(), n).into_vec();
    picked.sort_unstable();
    Ok(BehaviorSet {
        impressions: picked.into_iter().map(|i| behaviors.impressions[i].clone()).collect(),
        source: behaviors.source.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE2_ROW: &str = "N55528\tlifestyle\tlifestyleroyals\tThe Brands Queen Eliz...\tShop the notebook...";

    fn fixture() -> BehaviorSet {
        parse_behaviors_str(
            "1\tU1\t11/11/2019 9:05:58 AM\tN1 N2\tN3-1 N4-0\n\
             2\tU2\t11/12/2019 6:11:30 PM\t\tN4-0 N5-1 N6-0\n\
             3\tU3\t11/14/2019 7:01:48 AM\tN1\tN3-1\n",
            "fixture",
        )
        .unwrap()
    }

    #[test]
    fn news_row() {
        let catalog = parse_news_str(TABLE2_ROW, "t").unwrap();
        let a = catalog.get("N55528").unwrap();
        assert_eq!(a.category, "lifestyle");
        assert_eq!(a.subcategory, "lifestyleroyals");
        assert_eq!(a.title, "The Brands Queen Eliz...");
        assert_eq!(a.abstract_text, "Shop the notebook...");
    }

    #[test]
    fn news_empty_file() {
        assert!(parse_news_str("", "t").unwrap().is_empty());
    }

    #[test]
    fn news_extra_columns_ignored() {
        let line = format!("{TABLE2_ROW}\thttps://example.com\t[]\t[]");
        assert_eq!(line.split('\t').count(), 8);
        let catalog = parse_news_str(&line, "t").unwrap();
        let a = catalog.get("N55528").unwrap();
        assert_eq!(a.abstract_text, "Shop the notebook...");
        assert_eq!(catalog.len(), 1);
    }

    #[test]
    fn news_empty_abstract() {
        let catalog = parse_news_str("N1\tnews\tnewsworld\tTitle\t", "t").unwrap();
        assert_eq!(catalog.get("N1").unwrap().abstract_text, "");
    }

    #[test]
    fn news_short_line_names_line() {
        let err = parse_news_str("N1\ta\tb\tT\tA\nN2\ta\tb\n", "news.tsv").unwrap_err();
        match err {
            DatasetError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn news_duplicate_id() {
        let err = parse_news_str("N1\ta\tb\tT\tA\nN1\ta\tb\tT\tA\n", "t").unwrap_err();
        assert!(matches!(err, DatasetError::Validation { .. }));
    }

    #[test]
    fn news_crlf_and_invalid_utf8() {
        let catalog = parse_news_bytes(b"N1\ta\tb\tT\xff\tA\r\nN2\ta\tb\tU\tB\r\n", "t").unwrap();
        assert_eq!(catalog.len(), 2);
        assert_eq!(catalog.get("N1").unwrap().title, "T\u{FFFD}");
        assert_eq!(catalog.get("N1").unwrap().abstract_text, "A");
    }

    #[test]
    fn behaviors_labels() {
        let set = parse_behaviors_str(
            "1\tU13740\t11/11/2019 9:05:58 AM\tN55189 N42782 N34694\tN55689-1 N35729-0",
            "t",
        )
        .unwrap();
        let imp = &set.impressions()[0];
        assert_eq!(imp.user_id, "U13740");
        assert_eq!(
            imp.candidates,
            vec![
                Candidate {
                    article_id: "N55689".into(),
                    label: Label::Clicked
                },
                Candidate {
                    article_id: "N35729".into(),
                    label: Label::NotClicked
                },
            ]
        );
        assert_eq!(imp.timestamp.unwrap().to_string(), "2019-11-11 09:05:58");
    }

    #[test]
    fn behaviors_empty_history() {
        let set = fixture();
        assert!(set.impressions()[1].history.is_empty());
    }

    #[test]
    fn behaviors_bad_suffix() {
        for bad in ["N1", "N1-2", "N1-", "-1"] {
            let text = format!("1\tU1\t11/11/2019 9:05:58 AM\t\t{bad}");
            let err = parse_behaviors_str(&text, "t").unwrap_err();
            assert!(matches!(err, DatasetError::Parse { line: 1, .. }), "{bad}");
        }
    }

    #[test]
    fn behaviors_empty_impressions() {
        let err = parse_behaviors_str("1\tU1\t11/11/2019 9:05:58 AM\tN1\t", "t").unwrap_err();
        assert!(matches!(err, DatasetError::Validation { .. }));
    }

    #[test]
    fn behaviors_bad_time_is_not_fatal() {
        let set = parse_behaviors_str("1\tU1\tyesterday\t\tN1-1", "t").unwrap();
        assert_eq!(set.impressions()[0].timestamp, None);
        assert_eq!(set.impressions()[0].time, "yesterday");
    }

    #[test]
    fn behaviors_duplicate_impression() {
        let text = "1\tU1\tt\t\tN1-1\n1\tU2\tt\t\tN2-1\n";
        assert!(matches!(
            parse_behaviors_str(text, "t"),
            Err(DatasetError::Validation { .. })
        ));
    }

    #[test]
    fn round_trip() {
        let set = fixture();
        let again = parse_behaviors_str(&set.to_tsv(), "fixture").unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn validate_clean() {
        let set = parse_behaviors_str("1\tU1\tt\tN1\tN2-1 N3-0", "t").unwrap();
        let catalog = parse_news_str("N1\ta\tb\tT\t\nN2\ta\tb\tT\t\nN3\ta\tb\tT\t\n", "n").unwrap();
        let report = validate(&catalog, &set);
        assert!(report.is_clean());
        assert!(report.issues().is_empty());
        assert_eq!(report.clicks, 1);
        assert_eq!(report.candidates, 2);
    }

    #[test]
    fn validate_flags_problems() {
        let catalog = parse_news_str("N1\ta\tb\tT\t\nN3\ta\tb\tT\t\n", "n").unwrap();
        let report = validate(&catalog, &fixture());
        assert_eq!(report.missing_ids, vec!["N2", "N4", "N5", "N6"]);
        assert_eq!(report.all_clicked, vec!["3"]);
        assert!(report.no_clicks.is_empty());
        assert!(report.issues().iter().any(|i| i.contains("degenerate for AUC")));
    }

    #[test]
    fn placeholders_resolve_every_reference() {
        let mut catalog = parse_news_str("N1\ta\tb\tT\t\n", "n").unwrap();
        let set = fixture();
        assert_eq!(catalog.fill_placeholders(&set), 5);
        assert!(validate(&catalog, &set).missing_ids.is_empty());
        assert_eq!(catalog.get("N6").unwrap().title, "");
    }

    #[test]
    fn subsample_identity_and_determinism() {
        let set = fixture();
        assert_eq!(subsample(&set, 3, 1).unwrap(), set);
        assert_eq!(subsample(&set, 2, 9).unwrap(), subsample(&set, 2, 9).unwrap());
        let one = subsample(&set, 1, 7).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one, subsample(&set, 1, 7).unwrap());
        assert!(matches!(
            subsample(&set, 4, 7),
            Err(DatasetError::SubsampleTooLarge { .. })
        ));
    }

    #[test]
    fn subsample_preserves_order() {
        let set = fixture();
        let picked = subsample(&set, 2, 3).unwrap();
        let ids: Vec<u32> = picked.iter().map(|i| i.impression_id.parse().unwrap()).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }
}
