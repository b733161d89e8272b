//! Synthetic MIND-style datasets with two planted click signals.
//!
//! Every user has a preferred category (a content signal: clicked articles
//! share vocabulary with the history) and belongs to a cohort whose members
//! favor the same handful of articles regardless of topic (a collaborative
//! signal). Clicks go to the candidates with the highest latent utility
//!
//! ```text
//! utility = CONTENT_WEIGHT·[category = preferred] + COHORT_WEIGHT·[cohort favorite] + noise
//! ```
//!
//! The generator also emits a noisy view of cohort membership as an external
//! score file, standing in for a collaborative-filtering model, and dense
//! article vectors clustered by category, standing in for a sentence encoder.

use std::collections::HashSet;

use chrono::{Duration, NaiveDate};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, Normal};

use crate::{
    dataset::{BehaviorSet, Candidate, Catalog, Impression, Label, NewsArticle, TIME_FORMAT},
    learners::{ImpressionScores, ScoreTable},
    text::EmbeddingTable,
};

const CATEGORIES: [(&str, [&str; 2]); 6] = [
    ("sports", ["football", "tennis"]),
    ("finance", ["markets", "personalfinance"]),
    ("health", ["nutrition", "fitness"]),
    ("travel", ["destinations", "tips"]),
    ("music", ["concerts", "albums"]),
    ("science", ["space", "climate"]),
];
const COMMON_WORDS: [&str; 12] = [
    "the", "a", "of", "in", "to", "and", "for", "on", "with", "new", "how", "why",
];
const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "ra", "tu", "ne", "so", "vi", "de", "po", "qua", "zen", "bri", "mor", "tal", "fen", "gru", "shi",
    "wex", "dol",
];
const WORDS_PER_CATEGORY: usize = 40;
const COHORTS: usize = 6;
const EMBEDDING_DIM: usize = 16;

const CONTENT_WEIGHT: f64 = 1.0;
const COHORT_WEIGHT: f64 = 1.0;
const UTILITY_NOISE: f64 = 0.6;
const COLLAB_NOISE: f64 = 0.7;
const EMBEDDING_NOISE: f64 = 1.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixtureSizes {
    pub users: usize,
    pub articles: usize,
    pub impressions: usize,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub catalog: Catalog,
    pub behaviors: BehaviorSet,
    /// Noisy cohort-favorite scores for every (impression, candidate).
    pub collaborative: ScoreTable,
    pub embeddings: EmbeddingTable,
}

/// Name given to the planted collaborative score table.
pub const COLLAB_LEARNER: &str = "collab";

struct User {
    id: String,
    category: usize,
    cohort: usize,
}

/// Builds a fixture. The same seed always yields identical output.
///
/// Counts are exact when `impressions >= users`; otherwise only the first
/// `impressions` users appear. Sizes of zero are clamped to one.
pub fn generate(sizes: FixtureSizes, seed: u64) -> Fixture {
    let users_n = sizes.users.max(1);
    let articles_n = sizes.articles.max(1);
    let impressions_n = sizes.impressions.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let vocab = vocabulary(&mut rng);
    let mut article_category = Vec::with_capacity(articles_n);
    let mut articles = Vec::with_capacity(articles_n);
    for i in 0..articles_n {
        let cat = rng.random_range(0..CATEGORIES.len());
        let (name, subs) = CATEGORIES[cat];
        article_category.push(cat);
        articles.push(NewsArticle {
            id: format!("N{}", 10_001 + i),
            category: name.to_owned(),
            subcategory: subs[rng.random_range(0..subs.len())].to_owned(),
            title: sentence(&mut rng, &vocab, cat, 6, true),
            abstract_text: sentence(&mut rng, &vocab, cat, 14, false),
        });
    }

    let favorites_per_cohort = (articles_n / 5).max(1);
    let cohort_favorites: Vec<HashSet<usize>> = (0..COHORTS)
        .map(|_| {
            rand::seq::index::sample(&mut rng, articles_n, favorites_per_cohort)
                .into_iter()
                .collect()
        })
        .collect();

    let users: Vec<User> = (0..users_n)
        .map(|i| User {
            id: format!("U{}", 1_001 + i),
            category: rng.random_range(0..CATEGORIES.len()),
            cohort: rng.random_range(0..COHORTS),
        })
        .collect();

    let by_category: Vec<Vec<usize>> = (0..CATEGORIES.len())
        .map(|c| (0..articles_n).filter(|&a| article_category[a] == c).collect())
        .collect();

    let noise = Gumbel::new(0.0, UTILITY_NOISE).expect("valid scale");
    let collab_noise = Normal::new(0.0, COLLAB_NOISE).expect("valid sd");
    let start = NaiveDate::from_ymd_opt(2019, 11, 11)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date");

    let mut impressions = Vec::with_capacity(impressions_n);
    let mut collab_rows = Vec::with_capacity(impressions_n);
    for i in 0..impressions_n {
        let user = if i < users_n {
            &users[i]
        } else {
            &users[rng.random_range(0..users_n)]
        };

        let history_len = if rng.random_bool(0.05) {
            0
        } else {
            rng.random_range(1..=8)
        };
        let mut history: Vec<usize> = Vec::with_capacity(history_len);
        let mut used = HashSet::new();
        for _ in 0..history_len.min(articles_n.saturating_sub(1)) {
            let pool = &by_category[user.category];
            let pick = if rng.random_bool(0.8) && !pool.is_empty() {
                pool[rng.random_range(0..pool.len())]
            } else {
                rng.random_range(0..articles_n)
            };
            if used.insert(pick) {
                history.push(pick);
            }
        }

        let mut remaining: Vec<usize> = (0..articles_n).filter(|a| !used.contains(a)).collect();
        remaining.shuffle(&mut rng);
        let n_candidates = rng.random_range(5..=10).min(remaining.len());
        let candidates = &remaining[..n_candidates];

        let utility: Vec<f64> = candidates
            .iter()
            .map(|&a| {
                let content = CONTENT_WEIGHT * f64::from(u8::from(article_category[a] == user.category));
                let cohort = COHORT_WEIGHT * f64::from(u8::from(cohort_favorites[user.cohort].contains(&a)));
                content + cohort + noise.sample(&mut rng)
            })
            .collect();
        let mut order: Vec<usize> = (0..n_candidates).collect();
        order.sort_by(|&a, &b| utility[b].total_cmp(&utility[a]));
        let clicks = if n_candidates > 2 && rng.random_bool(0.3) { 2 } else { 1 };
        let clicked: HashSet<usize> = order.iter().take(clicks.min(n_candidates)).copied().collect();

        let impression_id = (i + 1).to_string();
        let time = (start + Duration::seconds(i as i64 * 97))
            .format("%-m/%-d/%Y %-I:%M:%S %p")
            .to_string();
        impressions.push(Impression {
            impression_id: impression_id.clone(),
            user_id: user.id.clone(),
            timestamp: chrono::NaiveDateTime::parse_from_str(&time, TIME_FORMAT).ok(),
            time,
            history: history.iter().map(|&a| articles[a].id.clone()).collect(),
            candidates: candidates
                .iter()
                .enumerate()
                .map(|(pos, &a)| Candidate {
                    article_id: articles[a].id.clone(),
                    label: if clicked.contains(&pos) {
                        Label::Clicked
                    } else {
                        Label::NotClicked
                    },
                })
                .collect(),
        });
        collab_rows.push(ImpressionScores {
            impression_id,
            article_ids: candidates.iter().map(|&a| articles[a].id.clone()).collect(),
            scores: candidates
                .iter()
                .map(|&a| {
                    let favorite = f64::from(u8::from(cohort_favorites[user.cohort].contains(&a)));
                    round6(favorite + collab_noise.sample(&mut rng))
                })
                .collect(),
        });
    }

    let unit = Normal::new(0.0, 1.0).expect("valid sd");
    let embed_noise = Normal::new(0.0, EMBEDDING_NOISE).expect("valid sd");
    let centroids: Vec<Vec<f64>> = (0..CATEGORIES.len())
        .map(|_| (0..EMBEDDING_DIM).map(|_| unit.sample(&mut rng)).collect())
        .collect();
    let vectors = articles.iter().zip(&article_category).map(|(a, &c)| {
        let v = centroids[c]
            .iter()
            .map(|x| round6(x + embed_noise.sample(&mut rng)))
            .collect();
        (a.id.clone(), v)
    });
    let embeddings = EmbeddingTable::from_vectors(EMBEDDING_DIM, vectors.collect::<Vec<_>>())
        .expect("generated vectors are finite and unique");

    Fixture {
        catalog: Catalog::from_articles(articles).expect("generated ids are unique"),
        behaviors: BehaviorSet::new(impressions, "fixture").expect("generated impressions are valid"),
        collaborative: ScoreTable::new(COLLAB_LEARNER, collab_rows).expect("generated scores are finite"),
        embeddings,
    }
}

/// Six decimals keep the written files short and exactly re-readable.
fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn vocabulary(rng: &mut ChaCha8Rng) -> Vec<Vec<String>> {
    let mut seen: HashSet<String> = COMMON_WORDS.iter().map(|w| w.to_string()).collect();
    (0..CATEGORIES.len())
        .map(|_| {
            let mut words = Vec::with_capacity(WORDS_PER_CATEGORY);
            while words.len() < WORDS_PER_CATEGORY {
                let syllables = rng.random_range(2..=3);
                let word: String = (0..syllables)
                    .map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())])
                    .collect();
                if seen.insert(word.clone()) {
                    words.push(word);
                }
            }
            words
        })
        .collect()
}

fn sentence(rng: &mut ChaCha8Rng, vocab: &[Vec<String>], category: usize, len: usize, title: bool) -> String {
    let words: Vec<String> = (0..len)
        .map(|_| {
            let roll: f64 = rng.random();
            if roll < 0.55 {
                vocab[category][rng.random_range(0..WORDS_PER_CATEGORY)].clone()
            } else if roll < 0.8 {
                COMMON_WORDS[rng.random_range(0..COMMON_WORDS.len())].to_owned()
            } else {
                let other = rng.random_range(0..vocab.len());
                vocab[other][rng.random_range(0..WORDS_PER_CATEGORY)].clone()
            }
        })
        .collect();
    let mut text = words.join(" ");
    if title {
        if let Some(first) = text.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
    } else {
        text.push('.');
    }
    text
}
