//! Class-based TF-IDF keywords.
//!
//! Each topic's documents are concatenated into one class document. For term
//! `t` in class `c`:
//!
//! ```text
//! W(t, c) = tf(t, c) * ln(1 + A / f(t))
//! ```
//!
//! where `tf(t, c)` is the count of `t` in class `c`, `f(t)` its count over all
//! classes and `A` the average number of words per non-empty class. Terms are
//! lowercase whitespace-delimited words. Ties rank lexicographically.

use std::collections::{BTreeMap, HashMap};

use super::{Assignment, TopicModel};
use crate::corpus::Corpus;

/// Per-topic term weights. Topics without documents get an empty map.
pub fn ctfidf_weights(
    corpus: &Corpus,
    assignment: &Assignment,
    model: &TopicModel,
) -> Vec<BTreeMap<String, f64>> {
    let mut class_tf: Vec<HashMap<String, u64>> = vec![HashMap::new(); model.k];
    let mut total_tf: HashMap<String, u64> = HashMap::new();
    let mut total_words = 0u64;
    for doc in corpus.documents() {
        let Some(topic) = assignment.topic_of(doc.doc_id) else {
            continue;
        };
        for word in doc.text.to_lowercase().split_whitespace() {
            *class_tf[topic].entry(word.to_string()).or_default() += 1;
            *total_tf.entry(word.to_string()).or_default() += 1;
            total_words += 1;
        }
    }
    let classes = class_tf.iter().filter(|c| !c.is_empty()).count().max(1);
    let avg = total_words as f64 / classes as f64;
    class_tf
        .into_iter()
        .map(|tf| {
            tf.into_iter()
                .map(|(term, count)| {
                    let f = total_tf[&term] as f64;
                    let w = count as f64 * (1.0 + avg / f).ln();
                    (term, w)
                })
                .collect()
        })
        .collect()
}

/// Top `top_n` terms per topic by c-TF-IDF weight.
pub fn ctfidf_keywords(
    corpus: &Corpus,
    assignment: &Assignment,
    model: &TopicModel,
    top_n: usize,
) -> Vec<Vec<String>> {
    ctfidf_weights(corpus, assignment, model)
        .into_iter()
        .map(|weights| {
            let mut ranked: Vec<(String, f64)> = weights.into_iter().collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ranked.into_iter().take(top_n).map(|(t, _)| t).collect()
        })
        .collect()
}

/// Keyword table of the `rows` largest topics, sorted by size descending.
pub fn render_keyword_table(model: &TopicModel, rows: usize) -> String {
    let mut order: Vec<usize> = (0..model.k).collect();
    order.sort_by(|&a, &b| model.doc_counts[b].cmp(&model.doc_counts[a]).then(a.cmp(&b)));
    let mut out = String::from("Topic Rank | Topic | Docs | Topic Keywords\n");
    for (rank, &t) in order.iter().take(rows).enumerate() {
        let pruned = if model.retained[t] { "" } else { " (pruned)" };
        out.push_str(&format!(
            "{:>10} | {:>5} | {:>4} | {}{}\n",
            rank + 1,
            t,
            model.doc_counts[t],
            model.keywords_of(t).join(", "),
            pruned
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Split};

    fn model(k: usize) -> TopicModel {
        TopicModel {
            k,
            dim: 1,
            centroids: vec![0.0; k],
            doc_counts: vec![1; k],
            retained: vec![true; k],
            keywords: None,
            kmeans_seed: 0,
        }
    }

    #[test]
    fn frequency_dominance() {
        let c = Corpus::new(vec![Document::new(0, "x x y")], Split::Train).unwrap();
        let a = Assignment::from_labels(&c, &[0]).unwrap();
        assert_eq!(ctfidf_keywords(&c, &a, &model(1), 1), vec![vec!["x".to_string()]]);
    }

    #[test]
    fn hand_computed_weights() {
        // Class 0: "a a b", class 1: "b c". A = 5 / 2.
        let c = Corpus::new(
            vec![Document::new(0, "A a b"), Document::new(1, "b c")],
            Split::Train,
        )
        .unwrap();
        let a = Assignment::from_labels(&c, &[0, 1]).unwrap();
        let w = ctfidf_weights(&c, &a, &model(2));
        let avg: f64 = 2.5;
        assert!((w[0]["a"] - 2.0 * (1.0 + avg / 2.0).ln()).abs() < 1e-12);
        assert!((w[0]["b"] - (1.0 + avg / 2.0).ln()).abs() < 1e-12);
        assert!((w[1]["c"] - (1.0 + avg / 1.0).ln()).abs() < 1e-12);
        // b and a tie? No: a has weight 2x. b vs c in class 1: c wins.
        let kw = ctfidf_keywords(&c, &a, &model(2), 2);
        assert_eq!(kw[0], vec!["a", "b"]);
        assert_eq!(kw[1], vec!["c", "b"]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let c = Corpus::new(vec![Document::new(0, "zeta alpha mid")], Split::Train).unwrap();
        let a = Assignment::from_labels(&c, &[0]).unwrap();
        assert_eq!(ctfidf_keywords(&c, &a, &model(1), 3)[0], vec!["alpha", "mid", "zeta"]);
    }

    #[test]
    fn ranking_invariant_under_duplication() {
        let texts = ["red red blue", "blue green", "green green red yellow"];
        let labels = [0, 1, 1];
        let c1 = Corpus::new(
            texts.iter().enumerate().map(|(i, t)| Document::new(i as u64, *t)).collect(),
            Split::Train,
        )
        .unwrap();
        let a1 = Assignment::from_labels(&c1, &labels).unwrap();
        let mut docs = Vec::new();
        let mut lab = Vec::new();
        for rep in 0..3 {
            for (i, t) in texts.iter().enumerate() {
                docs.push(Document::new((rep * 10 + i) as u64, *t));
                lab.push(labels[i]);
            }
        }
        let c3 = Corpus::new(docs, Split::Train).unwrap();
        // Corpus::new sorts by id; ids were generated in sorted order.
        let a3 = Assignment::from_labels(&c3, &lab).unwrap();
        assert_eq!(
            ctfidf_keywords(&c1, &a1, &model(2), 10),
            ctfidf_keywords(&c3, &a3, &model(2), 10)
        );
    }

    #[test]
    fn table_shape() {
        let mut m = model(2);
        m.doc_counts = vec![3, 9];
        m.retained = vec![false, true];
        m.keywords = Some(vec![vec!["x".into()], vec!["art".into(), "museum".into()]]);
        let t = render_keyword_table(&m, 5);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[1].ends_with("art, museum"));
        assert!(lines[2].contains("(pruned)"));
    }
}
