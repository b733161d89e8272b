//! Small worked examples whose expected values are derived by hand.

use mind_ensemble::{
    dataset::{self, Candidate, Catalog, Impression, Label, NewsArticle},
    learners::{self, Aggregation, ExternalLearner, RandomLearner},
    metrics,
    text::{self, EmbeddingTable, TokenizedDoc},
};

fn article(id: &str, title: &str) -> NewsArticle {
    NewsArticle {
        id: id.into(),
        category: "news".into(),
        subcategory: "world".into(),
        title: title.into(),
        abstract_text: String::new(),
    }
}

fn impression(history: &[&str], candidates: &[&str]) -> Impression {
    Impression {
        impression_id: "1".into(),
        user_id: "U1".into(),
        time: String::new(),
        timestamp: None,
        history: history.iter().map(|s| s.to_string()).collect(),
        candidates: candidates
            .iter()
            .map(|c| Candidate {
                article_id: c.to_string(),
                label: Label::NotClicked,
            })
            .collect(),
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn idf_of_term_in_three_of_ten_docs() {
    let docs: Vec<TokenizedDoc> = (0..10)
        .map(|i| TokenizedDoc::new(format!("N{i}"), if i < 3 { "storm warning" } else { "warning" }))
        .collect();
    let idf = text::inverse_document_frequency("storm", &docs).unwrap();
    assert!(close(idf, 1.2040, 5e-5), "{idf}");
    assert_eq!(text::inverse_document_frequency("warning", &docs).unwrap(), 0.0);
}

#[test]
fn tfidf_learner_on_two_doc_history() {
    // N = 5; queen/crown/palace appear twice (idf a = ln 2.5), the rest once (b = ln 5).
    // Profile = unit(H1) + unit(H2) = (queen sqrt2, crown 1/sqrt2, palace 1/sqrt2), norm sqrt3.
    let catalog = Catalog::from_articles([
        article("H1", "queen crown"),
        article("H2", "queen palace"),
        article("C1", "crown jewel"),
        article("C2", "palace garden"),
        article("C3", "football match"),
    ])
    .unwrap();
    let model = text::fit_tfidf(&catalog).unwrap();
    let imp = impression(&["H1", "H2"], &["C1", "C2", "C3"]);

    let a = 2.5f64.ln();
    let b = 5f64.ln();
    let share = a / (a * a + b * b).sqrt();
    let mean = learners::score_tfidf(&model, &imp, Aggregation::Mean);
    let expected_mean = [share / 6f64.sqrt(), share / 6f64.sqrt(), 0.0];
    for (got, want) in mean.scores.iter().zip(expected_mean) {
        assert!(close(*got, want, 1e-9), "{got} vs {want}");
    }

    let max = learners::score_tfidf(&model, &imp, Aggregation::Max);
    let expected_max = [share / 2f64.sqrt(), share / 2f64.sqrt(), 0.0];
    for (got, want) in max.scores.iter().zip(expected_max) {
        assert!(close(*got, want, 1e-9), "{got} vs {want}");
    }
    assert_eq!(mean.missing_candidates + mean.missing_history, 0);
}

#[test]
fn embedding_learner_on_2d_table() {
    let table = EmbeddingTable::from_vectors(
        2,
        [
            ("A".to_string(), vec![1.0, 0.0]),
            ("B".to_string(), vec![0.0, 1.0]),
            ("C".to_string(), vec![3.0, 4.0]),
        ],
    )
    .unwrap();
    let imp = impression(&["A", "C", "Z"], &["A", "B", "C", "Z"]);

    // Mean of A and C is (2, 2); Z is skipped in the profile and scores 0.
    let mean = learners::score_embedding(&table, &imp, Aggregation::Mean);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let expected = [h, h, 7.0 / (5.0 * 2f64.sqrt()), 0.0];
    for (got, want) in mean.scores.iter().zip(expected) {
        assert!(close(*got, want, 1e-12), "{got} vs {want}");
    }
    assert_eq!(mean.missing_candidates, 1);
    assert_eq!(mean.missing_history, 1);

    // Max over history: A -> max(1, 0.6); B -> max(0, 0.8); C -> max(0.6, 1).
    let max = learners::score_embedding(&table, &imp, Aggregation::Max);
    for (got, want) in max.scores.iter().zip([1.0, 0.8, 1.0, 0.0]) {
        assert!(close(*got, want, 1e-12), "{got} vs {want}");
    }
}

const HAND_BEHAVIORS: &str = "\
1\tU1\t11/11/2019 9:05:58 AM\t\tA-1 B-0 C-0
2\tU2\t11/11/2019 9:06:58 AM\t\tD-1 E-1 F-0 G-0
3\tU3\t11/11/2019 9:07:58 AM\t\tH-0 I-0
";

const HAND_SCORES: &str = "\
1\tA\t0.2
1\tB\t0.9
1\tC\t0.1
2\tD\t0.5
2\tE\t0.5
2\tF\t0.5
2\tG\t0.1
3\tH\t0.3
3\tI\t0.7
";

#[test]
fn evaluation_means_on_three_impressions() {
    // Impression 1 ranks B, A, C: AUC 1/2, RR 1/2, nDCG 1/log2(3).
    // Impression 2 ranks D, E, F, G (ties by id): AUC 3/4, RR 1, nDCG 1.
    // Impression 3 has no click and is excluded from every metric.
    let behaviors = dataset::parse_behaviors_str(HAND_BEHAVIORS, "hand").unwrap();
    let table = learners::parse_external_scores(HAND_SCORES, "hand scores", "hand", &behaviors).unwrap();
    let report = metrics::evaluate_scores(&table, &behaviors).unwrap();

    let ndcg1 = 1.0 / 3f64.log2();
    assert_eq!(report.impressions, 3);
    assert!(close(report.auc.mean.unwrap(), 0.625, 1e-9));
    assert!(close(report.mrr.mean.unwrap(), 0.75, 1e-9));
    assert!(close(report.ndcg5.mean.unwrap(), (ndcg1 + 1.0) / 2.0, 1e-9));
    assert!(close(report.ndcg10.mean.unwrap(), (ndcg1 + 1.0) / 2.0, 1e-9));
    for s in [report.auc, report.mrr, report.ndcg5, report.ndcg10] {
        assert_eq!(s.count, 2);
    }
    assert_eq!(report.per_impression[2].auc, None);
}

#[test]
fn external_learner_scores_pass_through() {
    let behaviors = dataset::parse_behaviors_str(HAND_BEHAVIORS, "hand").unwrap();
    let table = learners::parse_external_scores(HAND_SCORES, "hand scores", "hand", &behaviors).unwrap();
    let learner = ExternalLearner::new(table.clone());
    let (rescored, report) = learners::score_behaviors(&learner, &behaviors).unwrap();
    assert_eq!(rescored.to_tsv(), table.to_tsv());
    assert_eq!(report.pairs, 9);
}

#[test]
fn random_learner_averages_chance_auc() {
    let mut text = String::new();
    for i in 1..=1200 {
        let candidates: Vec<String> = (0..10).map(|c| format!("N{c}-{}", u8::from(c < 3))).collect();
        text.push_str(&format!("{i}\tU{}\t\t\t{}\n", i % 37, candidates.join(" ")));
    }
    let behaviors = dataset::parse_behaviors_str(&text, "synthetic").unwrap();
    for seed in [1, 99, 12_345] {
        let (table, _) = learners::score_behaviors(&RandomLearner::new("random", seed), &behaviors).unwrap();
        let auc = metrics::evaluate_scores(&table, &behaviors).unwrap().auc.mean.unwrap();
        assert!((auc - 0.5).abs() <= 0.02, "seed {seed}: {auc}");
    }
}
