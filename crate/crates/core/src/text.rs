//! Tokenization, TF-IDF document vectors, cosine similarity and precomputed
//! dense embeddings.
//!
//! Weights follow the classic definition
//!
//! ```text
//! tfidf(t, d, D) = tf(t, d) * idf(t, D)
//! tf(t, d)       = count(t in d) / |d|
//! idf(t, D)      = ln(N / df(t))
//! ```
//!
//! with no smoothing. Stored document vectors are L2-normalized so cosine
//! similarity reduces to a sparse dot product.

use std::{
    borrow::Cow,
    collections::{BTreeMap, HashMap, HashSet},
    fs,
    path::Path,
};

use indexmap::IndexMap;
use thiserror::Error;

use crate::dataset::Catalog;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot fit TF-IDF on an empty corpus")]
    EmptyCorpus,
    #[error("term {0:?} does not occur in the corpus")]
    UnknownTerm(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("sparse vector indices must be strictly increasing and below {dim}")]
    BadSparseVector { dim: usize },
    #[error("{source_name}:{line}: {message}")]
    Embedding {
        source_name: String,
        line: usize,
        message: String,
    },
}

pub type Result<T, E = TextError> = std::result::Result<T, E>;

/// Lowercased alphanumeric runs of `text`. Digits are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub article_id: String,
    pub tokens: Vec<String>,
}

impl TokenizedDoc {
    pub fn new(article_id: impl Into<String>, text: &str) -> Self {
        Self {
            article_id: article_id.into(),
            tokens: tokenize(text),
        }
    }
}

/// Share of `doc`'s tokens equal to `term`; zero for an empty document.
pub fn term_frequency(term: &str, doc: &TokenizedDoc) -> f64 {
    if doc.tokens.is_empty() {
        return 0.0;
    }
    let count = doc.tokens.iter().filter(|t| *t == term).count();
    count as f64 / doc.tokens.len() as f64
}

pub fn inverse_document_frequency(term: &str, corpus: &[TokenizedDoc]) -> Result<f64> {
    let df = corpus.iter().filter(|d| d.tokens.iter().any(|t| t == term)).count();
    if df == 0 {
        return Err(TextError::UnknownTerm(term.to_owned()));
    }
    Ok(idf(corpus.len(), df))
}

fn idf(n_docs: usize, df: usize) -> f64 {
    (n_docs as f64 / df as f64).ln()
}

/// Sparse vector with strictly increasing indices below `dim`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        let increasing = entries.windows(2).all(|w| w[0].0 < w[1].0);
        let in_range = entries.last().is_none_or(|&(i, _)| i < dim);
        let finite = entries.iter().all(|(_, w)| w.is_finite());
        if !(increasing && in_range && finite) {
            return Err(TextError::BadSparseVector { dim });
        }
        Ok(Self { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> Result<f64> {
        if self.dim != other.dim {
            return Err(TextError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut sum = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    sum += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        Ok(sum)
    }

    pub fn scaled(&self, factor: f64) -> SparseVector {
        SparseVector {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, w)| (i, w * factor)).collect(),
        }
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn normalized(&self) -> SparseVector {
        let norm = self.norm();
        if norm == 0.0 {
            return SparseVector::zeros(self.dim);
        }
        self.scaled(1.0 / norm)
    }

    /// Componentwise sum of `vectors`, all of dimension `dim`.
    pub fn sum<'a>(dim: usize, vectors: impl IntoIterator<Item = &'a SparseVector>) -> Result<Self> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for v in vectors {
            if v.dim != dim {
                return Err(TextError::DimensionMismatch {
                    left: dim,
                    right: v.dim,
                });
            }
            for &(i, w) in &v.entries {
                *acc.entry(i).or_insert(0.0) += w;
            }
        }
        Ok(SparseVector {
            dim,
            entries: acc.into_iter().filter(|&(_, w)| w != 0.0).collect(),
        })
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine_sparse(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    let dot = a.dot(b)?;
    let denom = a.norm() * b.norm();
    Ok(if denom == 0.0 { 0.0 } else { dot / denom })
}

/// Cosine similarity of dense vectors; 0 when either vector is zero.
pub fn cosine_dense(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(TextError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na * nb;
    Ok(if denom == 0.0 { 0.0 } else { dot / denom })
}

/// Fitted TF-IDF space over a document collection.
#[derive(Clone, Debug)]
pub struct TfidfModel {
    vocabulary: HashMap<String, usize>,
    terms: Vec<String>,
    idf: Vec<f64>,
    doc_count: usize,
    doc_vectors: IndexMap<String, SparseVector>,
    /// L2 norm of each document's vector before normalization.
    doc_norms: HashMap<String, f64>,
}

impl TfidfModel {
    /// Fits on `docs`. Article ids must be unique.
    pub fn fit(docs: &[TokenizedDoc]) -> Result<Self> {
        if docs.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in docs {
            let unique: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
            for t in unique {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        // Column order is lexicographic so fitting is independent of hashing.
        let terms: Vec<String> = df.keys().map(|t| (*t).to_owned()).collect();
        let vocabulary: HashMap<String, usize> = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let idf_values: Vec<f64> = df.values().map(|&d| idf(docs.len(), d)).collect();

        let mut doc_vectors = IndexMap::with_capacity(docs.len());
        let mut doc_norms = HashMap::with_capacity(docs.len());
        for doc in docs {
            let raw = raw_vector(doc, &vocabulary, &idf_values);
            doc_norms.insert(doc.article_id.clone(), raw.norm());
            doc_vectors.insert(doc.article_id.clone(), raw.normalized());
        }

        Ok(Self {
            vocabulary,
            terms,
            idf: idf_values,
            doc_count: docs.len(),
            doc_vectors,
            doc_norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).copied()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.term_index(term).map(|i| self.idf[i])
    }

    /// Unit-length TF-IDF vector of a fitted document.
    pub fn vector(&self, article_id: &str) -> Option<&SparseVector> {
        self.doc_vectors.get(article_id)
    }

    /// TF-IDF vector of a fitted document before L2 normalization.
    pub fn raw_vector(&self, article_id: &str) -> Option<SparseVector> {
        let v = self.doc_vectors.get(article_id)?;
        Some(v.scaled(self.doc_norms[article_id]))
    }

    /// Projects unseen text into the fitted space. Out-of-vocabulary terms
    /// are dropped; the result is unit length or zero.
    pub fn transform(&self, text: &str) -> SparseVector {
        let doc = TokenizedDoc::new("", text);
        raw_vector(&doc, &self.vocabulary, &self.idf).normalized()
    }
}

fn raw_vector(doc: &TokenizedDoc, vocabulary: &HashMap<String, usize>, idf: &[f64]) -> SparseVector {
    if doc.tokens.is_empty() {
        return SparseVector::zeros(idf.len());
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for t in &doc.tokens {
        if let Some(&i) = vocabulary.get(t) {
            *counts.entry(i).or_insert(0) += 1;
        }
    }
    let len = doc.tokens.len() as f64;
    let entries = counts
        .into_iter()
        .map(|(i, c)| (i, c as f64 / len * idf[i]))
        .filter(|&(_, w)| w != 0.0)
        .collect();
    SparseVector {
        dim: idf.len(),
        entries,
    }
}

/// Fits TF-IDF over the title and abstract of every catalog article.
pub fn fit_tfidf(catalog: &Catalog) -> Result<TfidfModel> {
    let docs: Vec<TokenizedDoc> = catalog
        .iter()
        .map(|a| TokenizedDoc::new(a.id.clone(), &a.text()))
        .collect();
    TfidfModel::fit(&docs)
}

/// Dense article vectors loaded from a text file:
///
/// ```text
/// dim 3
/// N1 0.1 0.2 0.3
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: IndexMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, article_id: &str) -> Option<&[f64]> {
        self.vectors.get(article_id).map(Vec::as_slice)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("dim {}\n", self.dim);
        for (id, v) in &self.vectors {
            out.push_str(id);
            for x in v {
                out.push(' ');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_vectors(dim: usize, vectors: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut table = EmbeddingTable {
            dim,
            vectors: IndexMap::new(),
        };
        for (n, (id, v)) in vectors.into_iter().enumerate() {
            table.insert(id, v).map_err(|message| TextError::Embedding {
                source_name: "embeddings".into(),
                line: n + 2,
                message,
            })?;
        }
        Ok(table)
    }

    fn insert(&mut self, id: String, values: Vec<f64>) -> std::result::Result<(), String> {
        if values.len() != self.dim {
            return Err(format!("expected {} components, found {}", self.dim, values.len()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err("non-finite component".into());
        }
        if self.vectors.contains_key(&id) {
            return Err(format!("duplicate article id {id}"));
        }
        self.vectors.insert(id, values);
        Ok(())
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TextError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let text = match String::from_utf8_lossy(&bytes) {
        Cow::Borrowed(s) => Cow::Borrowed(s),
        Cow::Owned(s) => {
            log::warn!("{}: invalid UTF-8 replaced with U+FFFD", path.display());
            Cow::Owned(s)
        }
    };
    parse_embeddings(&text, &path.display().to_string())
}

pub fn parse_embeddings(text: &str, source_name: &str) -> Result<EmbeddingTable> {
    let err = |line: usize, message: String| TextError::Embedding {
        source_name: source_name.to_owned(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (header_idx, header) = lines
        .next()
        .ok_or_else(|| err(1, "missing \"dim <k>\" header".into()))?;
    let dim = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["dim", k] => k
            .parse::<usize>()
            .ok()
            .filter(|&k| k > 0)
            .ok_or_else(|| err(header_idx + 1, format!("invalid dimension {k:?}")))?,
        _ => return Err(err(header_idx + 1, "expected \"dim <k>\" header".into())),
    };

    let mut table = EmbeddingTable {
        dim,
        vectors: IndexMap::new(),
    };
    for (idx, line) in lines {
        let lineno = idx + 1;
        let mut fields = line.split_whitespace();
        let id = fields.next().expect("non-blank line has a field");
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| err(lineno, format!("invalid number {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        table
            .insert(id.to_owned(), values)
            .map_err(|message| err(lineno, message))?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> TokenizedDoc {
        TokenizedDoc::new(id, text)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The Brands Queen"), ["the", "brands", "queen"]);
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("50 Worst Habits For Belly Fat"),
            ["50", "worst", "habits", "for", "belly", "fat"]
        );
        assert_eq!(tokenize("Trump's  aid—freeze..."), ["trump", "s", "aid", "freeze"]);
        assert_eq!(tokenize("Élan VITAL"), ["élan", "vital"]);
    }

    #[test]
    fn tf_examples() {
        let d = doc("d", "a t b c t d e f");
        assert_eq!(d.tokens.len(), 8);
        assert_eq!(term_frequency("t", &d), 0.25);
        assert_eq!(term_frequency("zzz", &d), 0.0);
        assert_eq!(term_frequency("a", &doc("d", "a a a")), 1.0);
        assert_eq!(term_frequency("a", &doc("d", "")), 0.0);
    }

    #[test]
    fn idf_examples() {
        let two = [doc("1", "x"), doc("2", "y")];
        assert!((inverse_document_frequency("x", &two).unwrap() - 2f64.ln()).abs() < 1e-12);
        let all = [doc("1", "x"), doc("2", "x y")];
        assert_eq!(inverse_document_frequency("x", &all).unwrap(), 0.0);
        let ten: Vec<_> = (0..10)
            .map(|i| doc(&i.to_string(), if i < 3 { "t" } else { "u" }))
            .collect();
        let v = inverse_document_frequency("t", &ten).unwrap();
        assert!((v - 1.2039728043259361).abs() < 1e-12);
        assert!(matches!(
            inverse_document_frequency("nope", &ten),
            Err(TextError::UnknownTerm(_))
        ));
    }

    #[test]
    fn fit_empty_is_error() {
        assert!(matches!(TfidfModel::fit(&[]), Err(TextError::EmptyCorpus)));
    }

    #[test]
    fn disjoint_and_identical_docs() {
        let m = TfidfModel::fit(&[
            doc("a", "queen crown"),
            doc("b", "football goal"),
            doc("c", "queen crown"),
        ])
        .unwrap();
        let (a, b, c) = (m.vector("a").unwrap(), m.vector("b").unwrap(), m.vector("c").unwrap());
        assert_eq!(cosine_sparse(a, b).unwrap(), 0.0);
        assert!((cosine_sparse(a, c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_doc_gets_zero_vector() {
        let m = TfidfModel::fit(&[doc("a", "x y"), doc("b", "")]).unwrap();
        let empty = m.vector("b").unwrap();
        assert!(empty.entries().is_empty());
        assert_eq!(cosine_sparse(empty, m.vector("a").unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn transform_drops_unknown_terms() {
        let m = TfidfModel::fit(&[doc("a", "x y"), doc("b", "y z")]).unwrap();
        assert!(m.transform("unseen words").entries().is_empty());
        let v = m.transform("x unseen");
        assert_eq!(v.entries().len(), 1);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_dense(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_dense(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let v = cosine_dense(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine_dense(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine_dense(&[1.0], &[1.0, 2.0]),
            Err(TextError::DimensionMismatch { .. })
        ));
        let a = SparseVector::new(3, vec![(0, 1.0)]).unwrap();
        let b = SparseVector::new(4, vec![(0, 1.0)]).unwrap();
        assert!(cosine_sparse(&a, &b).is_err());
    }

    #[test]
    fn sparse_vector_rejects_bad_indices() {
        assert!(SparseVector::new(3, vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::new(3, vec![(3, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(0, f64::NAN)]).is_err());
    }

    #[test]
    fn embeddings_parse() {
        let t = parse_embeddings("dim 2\nN1 1.0 0.0", "e").unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.get("N1"), Some(&[1.0, 0.0][..]));
        let again = parse_embeddings(&t.to_text(), "e").unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn embeddings_errors() {
        let cases = [
            ("dim 2\nN1 1 0\nN2 1 2 3\n", 3),
            ("dim 2\nN1 1 NaN\n", 2),
            ("dim 2\nN1 1 inf\n", 2),
            ("dim 2\nN1 1 0\nN1 0 1\n", 3),
            ("dim 2\nN1 1 x\n", 2),
            ("dims 2\n", 1),
            ("dim 0\n", 1),
        ];
        for (text, line) in cases {
            match parse_embeddings(text, "e") {
                Err(TextError::Embedding { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
