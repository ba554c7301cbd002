//! Ranked top-words per topic.
//!
//! Two rankings are available. Class-based TF-IDF treats each topic as one
//! concatenated document and scores `tf(w, t) · ln(1 + A / f(w))`, where `A`
//! is the mean token count per topic and `f(w)` the corpus frequency of `w`.
//! The cosine ranking orders candidate words by the similarity of their
//! embedding to the topic centroid.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::embedding::cosine_similarity;

/// Number of top-words handed to the naming prompt by default.
pub const DEFAULT_NAMING_WORDS: usize = 500;

/// Minimum within-topic document frequency for cosine candidates.
pub const COSINE_MIN_DOCUMENT_FREQUENCY: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopwordsError {
    #[error("topic {0} has no documents")]
    EmptyTopic(usize),
    #[error("topic index {index} out of range for {topics} topics")]
    TopicOutOfRange { index: usize, topics: usize },
    #[error("partition does not cover the corpus exactly once: {0}")]
    InvalidPartition(String),
    #[error("no candidate words")]
    NoCandidates,
    #[error("candidate word {0:?} has no embedding")]
    MissingWordEmbedding(String),
    #[error("topic centroid is a zero vector")]
    ZeroCentroid,
    #[error("word embedding dimension {actual} differs from centroid dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopwordMethod {
    Tfidf,
    Cosine,
}

/// Words sorted by descending score, ties broken by the word itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopwordList {
    pub method: TopwordMethod,
    #[serde(rename = "words")]
    pub entries: Vec<(String, f64)>,
}

impl TopwordList {
    fn ranked(method: TopwordMethod, mut entries: Vec<(String, f64)>, count: usize) -> Self {
        entries.sort_by(rank);
        entries.truncate(count);
        TopwordList { method, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(w, _)| w.as_str())
    }

    /// The first `count` entries.
    pub fn prefix(&self, count: usize) -> TopwordList {
        TopwordList {
            method: self.method,
            entries: self.entries.iter().take(count).cloned().collect(),
        }
    }
}

fn rank(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

fn check_partition(corpus: &Corpus, topics: &[Vec<usize>]) -> Result<(), TopwordsError> {
    let mut seen = vec![false; corpus.len()];
    for (t, docs) in topics.iter().enumerate() {
        for &d in docs {
            match seen.get_mut(d) {
                None => {
                    return Err(TopwordsError::InvalidPartition(format!(
                        "topic {t} references document {d} of {}",
                        corpus.len()
                    )))
                }
                Some(true) => {
                    return Err(TopwordsError::InvalidPartition(format!(
                        "document {d} appears twice"
                    )))
                }
                Some(s) => *s = true,
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(d) => Err(TopwordsError::InvalidPartition(format!(
            "document {d} is unassigned"
        ))),
        None => Ok(()),
    }
}

fn mean_tokens_per_topic(corpus: &Corpus, topics: &[Vec<usize>]) -> f64 {
    corpus.total_tokens() as f64 / topics.len() as f64
}

fn topic_counts<'a>(corpus: &'a Corpus, docs: &[usize]) -> (HashMap<&'a str, usize>, usize) {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut total = 0;
    for &d in docs {
        for tok in &corpus.documents()[d].tokens {
            *counts.entry(tok.as_str()).or_default() += 1;
            total += 1;
        }
    }
    (counts, total)
}

fn score_topic(corpus: &Corpus, docs: &[usize], a: f64, count: usize) -> TopwordList {
    let (counts, total) = topic_counts(corpus, docs);
    let vocab = corpus.vocabulary();
    let entries = counts
        .into_iter()
        .map(|(w, c)| {
            let tf = c as f64 / total as f64;
            let f = vocab.corpus_frequency(w) as f64;
            (w.to_string(), tf * (1.0 + a / f).ln())
        })
        .collect();
    TopwordList::ranked(TopwordMethod::Tfidf, entries, count)
}

/// Class-based TF-IDF top-words of one topic. `topics` must partition the
/// corpus. Only words that occur in the topic are returned, so a topic whose
/// documents contain no tokens yields an empty list.
pub fn ctfidf_topwords(
    corpus: &Corpus,
    topics: &[Vec<usize>],
    topic_index: usize,
    count: usize,
) -> Result<TopwordList, TopwordsError> {
    let docs = topics
        .get(topic_index)
        .ok_or(TopwordsError::TopicOutOfRange {
            index: topic_index,
            topics: topics.len(),
        })?;
    if docs.is_empty() {
        return Err(TopwordsError::EmptyTopic(topic_index));
    }
    check_partition(corpus, topics)?;
    let a = mean_tokens_per_topic(corpus, topics);
    Ok(score_topic(corpus, docs, a, count))
}

/// [`ctfidf_topwords`] for every topic at once.
pub fn ctfidf_all(
    corpus: &Corpus,
    topics: &[Vec<usize>],
    count: usize,
) -> Result<Vec<TopwordList>, TopwordsError> {
    if let Some(t) = topics.iter().position(Vec::is_empty) {
        return Err(TopwordsError::EmptyTopic(t));
    }
    check_partition(corpus, topics)?;
    let a = mean_tokens_per_topic(corpus, topics);
    Ok(topics
        .iter()
        .map(|docs| score_topic(corpus, docs, a, count))
        .collect())
}

/// Words appearing in at least [`COSINE_MIN_DOCUMENT_FREQUENCY`] documents of
/// the topic.
pub fn cosine_candidates(corpus: &Corpus, docs: &[usize]) -> BTreeSet<String> {
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for &d in docs {
        let unique: BTreeSet<&str> = corpus.documents()[d]
            .tokens
            .iter()
            .map(String::as_str)
            .collect();
        for w in unique {
            *df.entry(w).or_default() += 1;
        }
    }
    df.into_iter()
        .filter(|&(_, n)| n >= COSINE_MIN_DOCUMENT_FREQUENCY)
        .map(|(w, _)| w.to_string())
        .collect()
}

/// Ranks `candidates` by cosine similarity between their embedding and the
/// full-space topic centroid.
pub fn cosine_topwords(
    vocab_embeddings: &BTreeMap<String, Vec<f64>>,
    centroid: &[f64],
    candidates: &BTreeSet<String>,
    count: usize,
) -> Result<TopwordList, TopwordsError> {
    if candidates.is_empty() {
        return Err(TopwordsError::NoCandidates);
    }
    if centroid.iter().all(|&x| x == 0.0) {
        return Err(TopwordsError::ZeroCentroid);
    }
    let mut entries = Vec::with_capacity(candidates.len());
    for w in candidates {
        let v = vocab_embeddings
            .get(w)
            .ok_or_else(|| TopwordsError::MissingWordEmbedding(w.clone()))?;
        if v.len() != centroid.len() {
            return Err(TopwordsError::DimensionMismatch {
                expected: centroid.len(),
                actual: v.len(),
            });
        }
        // A zero word vector cannot be ranked; it sits at similarity 0.
        let s = cosine_similarity(v, centroid).unwrap_or(0.0);
        entries.push((w.clone(), s));
    }
    Ok(TopwordList::ranked(TopwordMethod::Cosine, entries, count))
}

/// The stored TF-IDF list cut to `min(count, available)` entries.
pub fn topwords_for_naming(tfidf: &TopwordList, count: usize) -> TopwordList {
    tfidf.prefix(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest_corpus, TokenizerConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raw(texts: &[&str]) -> Corpus {
        ingest_corpus(texts, TokenizerConfig::new(1, BTreeSet::new())).unwrap()
    }

    /// Straight from the definition, over whitespace-split text.
    fn brute(texts: &[&str], topics: &[Vec<usize>], t: usize) -> Vec<(String, f64)> {
        let all: Vec<&str> = texts.iter().flat_map(|s| s.split_whitespace()).collect();
        let a = all.len() as f64 / topics.len() as f64;
        let mine: Vec<&str> = topics[t]
            .iter()
            .flat_map(|&d| texts[d].split_whitespace())
            .collect();
        let words: BTreeSet<&str> = mine.iter().copied().collect();
        let mut out: Vec<(String, f64)> = words
            .into_iter()
            .map(|w| {
                let tf = mine.iter().filter(|&&x| x == w).count() as f64 / mine.len() as f64;
                let f = all.iter().filter(|&&x| x == w).count() as f64;
                (w.to_string(), tf * (1.0 + a / f).ln())
            })
            .collect();
        out.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
        out
    }

    #[test]
    fn two_topic_example() {
        let texts = ["x x y", "y z"];
        let c = raw(&texts);
        let topics = vec![vec![0], vec![1]];
        let l = ctfidf_topwords(&c, &topics, 0, 10).unwrap();
        // (2/3)·ln(1 + 2.5/2)
        assert!((l.entries[0].1 - 0.5406201441442191).abs() < 1e-12);
        assert_eq!(l.words().collect::<Vec<_>>(), vec!["x", "y"]);
        assert!(l.entries[0].1 > l.entries[1].1);
        assert_eq!(l.entries, brute(&texts, &topics, 0));
    }

    #[test]
    fn single_topic_ranks_by_tf() {
        let texts = ["a b b c", "c c d", "a c"];
        let c = raw(&texts);
        let l = ctfidf_topwords(&c, &[vec![0, 1, 2]], 0, 10).unwrap();
        assert_eq!(l.words().collect::<Vec<_>>(), vec!["c", "a", "b", "d"]);
        let expect: Vec<String> = brute(&texts, &[vec![0, 1, 2]], 0)
            .into_iter()
            .map(|e| e.0)
            .collect();
        assert_eq!(l.words().collect::<Vec<_>>(), expect);
    }

    #[test]
    fn count_saturates_at_topic_vocabulary() {
        let c = raw(&["a b c", "d e"]);
        let l = ctfidf_topwords(&c, &[vec![0], vec![1]], 0, 1000).unwrap();
        assert_eq!(l.len(), 3);
    }

    #[test]
    fn errors() {
        let c = raw(&["a b", "c"]);
        assert_eq!(
            ctfidf_topwords(&c, &[vec![0, 1], vec![]], 1, 5),
            Err(TopwordsError::EmptyTopic(1))
        );
        assert!(matches!(
            ctfidf_topwords(&c, &[vec![0]], 0, 5),
            Err(TopwordsError::InvalidPartition(_))
        ));
        assert!(matches!(
            ctfidf_topwords(&c, &[vec![0]], 3, 5),
            Err(TopwordsError::TopicOutOfRange { .. })
        ));
        assert_eq!(
            cosine_topwords(&BTreeMap::new(), &[1.0], &BTreeSet::new(), 3),
            Err(TopwordsError::NoCandidates)
        );
    }

    #[test]
    fn json_shape() {
        let l = TopwordList {
            method: TopwordMethod::Tfidf,
            entries: vec![("x".into(), 0.5)],
        };
        let v = serde_json::to_value(&l).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"method": "tfidf", "words": [["x", 0.5]]})
        );
        let back: TopwordList = serde_json::from_value(v).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn naming_words_default_and_prefix() {
        let words: Vec<String> = (0..600).map(|i| format!("w{i:04}")).collect();
        let doc = words.join(" ");
        let c = raw(&[doc.as_str()]);
        let l = ctfidf_topwords(&c, &[vec![0]], 0, 1000).unwrap();
        let n = topwords_for_naming(&l, DEFAULT_NAMING_WORDS);
        assert_eq!(n.len(), 500);
        assert_eq!(topwords_for_naming(&l, 10).entries, n.entries[..10]);
        let small = raw(&["a b c d e f g h i j k l"]);
        let l = ctfidf_topwords(&small, &[vec![0]], 0, 1000).unwrap();
        assert_eq!(topwords_for_naming(&l, DEFAULT_NAMING_WORDS).len(), 12);
    }

    #[test]
    fn cosine_candidates_need_two_documents() {
        let c = raw(&["apple pear", "apple fig", "pear kiwi", "kiwi"]);
        let cand = cosine_candidates(&c, &[0, 1, 2]);
        assert_eq!(
            cand.into_iter().collect::<Vec<_>>(),
            vec!["apple".to_string(), "pear".to_string()]
        );
    }

    #[test]
    fn cosine_single_and_self() {
        let mut emb = BTreeMap::new();
        emb.insert("a".to_string(), vec![1.0, 0.0]);
        emb.insert("b".to_string(), vec![1.0, 1.0]);
        let one: BTreeSet<String> = ["b".to_string()].into();
        let l = cosine_topwords(&emb, &[1.0, 0.0], &one, 5).unwrap();
        assert_eq!(l.entries, vec![("b".to_string(), 1.0 / 2f64.sqrt())]);
        let both: BTreeSet<String> = emb.keys().cloned().collect();
        let l = cosine_topwords(&emb, &[2.0, 0.0], &both, 5).unwrap();
        assert_eq!(l.entries[0], ("a".to_string(), 1.0));
    }

    #[test]
    fn cosine_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let emb: BTreeMap<String, Vec<f64>> = (0..50)
            .map(|i| {
                (
                    format!("w{i}"),
                    (0..8).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let centroid: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cand: BTreeSet<String> = emb.keys().cloned().collect();
        let l = cosine_topwords(&emb, &centroid, &cand, 10).unwrap();
        let cn = centroid.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut all: Vec<(String, f64)> = emb
            .iter()
            .map(|(w, v)| {
                let d: f64 = v.iter().zip(&centroid).map(|(a, b)| a * b).sum();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                (w.clone(), d / (n * cn))
            })
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let expect: Vec<&str> = all[..10].iter().map(|e| e.0.as_str()).collect();
        assert_eq!(l.words().collect::<Vec<_>>(), expect);
        for ((_, s), (_, e)) in l.entries.iter().zip(&all) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    fn arb_corpus() -> impl Strategy<Value = (Vec<String>, Vec<Vec<usize>>)> {
        (2usize..12, 1usize..4, any::<u64>()).prop_map(|(n, k, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let texts: Vec<String> = (0..n)
                .map(|_| {
                    let len = rng.random_range(1..8);
                    (0..len)
                        .map(|_| ["a", "b", "c", "d", "e", "f", "g"][rng.random_range(0..7)])
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            let k = k.min(n);
            let mut topics = vec![Vec::new(); k];
            for d in 0..n {
                topics[if d < k { d } else { rng.random_range(0..k) }].push(d);
            }
            (texts, topics)
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force((texts, topics) in arb_corpus()) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let c = raw(&refs);
            let all = ctfidf_all(&c, &topics, 100).unwrap();
            for (t, list) in all.iter().enumerate() {
                let expect = brute(&refs, &topics, t);
                prop_assert_eq!(list.len(), expect.len());
                for ((w, s), (ew, es)) in list.entries.iter().zip(&expect) {
                    prop_assert_eq!(w, ew);
                    prop_assert!((s - es).abs() < 1e-12);
                    prop_assert!(*s > 0.0 && s.is_finite());
                }
                prop_assert_eq!(list, &ctfidf_topwords(&c, &topics, t, 100).unwrap());
            }
        }

        #[test]
        fn prefix_stable((texts, topics) in arb_corpus(), k in 1usize..5) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let c = raw(&refs);
            let long = ctfidf_topwords(&c, &topics, 0, 100).unwrap();
            let short = ctfidf_topwords(&c, &topics, 0, k).unwrap();
            prop_assert_eq!(short, long.prefix(k));
        }

        #[test]
        fn adding_single_word_doc_raises_its_tf((texts, topics) in arb_corpus(), w in 0usize..3) {
            let word = ["a", "b", "c"][w];
            let mut refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let before = brute(&refs, &topics, 0);
            refs.push(word);
            let mut grown = topics.clone();
            grown[0].push(refs.len() - 1);
            let c = raw(&refs);
            let after = ctfidf_topwords(&c, &grown, 0, 100).unwrap();
            // tf(word) / tf(other) grows for every other word of the topic
            let tf = |texts: &[&str], docs: &[usize], x: &str| {
                docs.iter().flat_map(|&d| texts[d].split_whitespace()).filter(|&y| y == x).count() as f64
            };
            let old_refs = &refs[..refs.len() - 1];
            for (other, _) in &before {
                if other == word { continue; }
                let r0 = tf(old_refs, &topics[0], word) / tf(old_refs, &topics[0], other);
                let r1 = tf(&refs, &grown[0], word) / tf(&refs, &grown[0], other);
                prop_assert!(r1 > r0);
            }
            prop_assert!(after.words().any(|x| x == word));
        }
    }
}
