//! Seeded synthetic corpora with known topic labels, for demos and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYLLABLES: [&str; 10] = ["ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pu"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub groups: usize,
    pub docs_per_group: usize,
    pub vocab_per_group: usize,
    pub words_per_doc: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            groups: 3,
            docs_per_group: 200,
            vocab_per_group: 40,
            words_per_doc: 12,
            seed: 7,
        }
    }
}

/// Word `j` of group `g`. Words of different groups never coincide.
pub fn group_word(g: usize, j: usize) -> String {
    assert!(
        g < 100 && j < 100,
        "synthetic vocabularies are limited to 100x100"
    );
    [g / 10, g % 10, j / 10, j % 10]
        .iter()
        .map(|&d| SYLLABLES[d])
        .collect()
}

/// Documents drawn from token-disjoint group vocabularies with a Zipf-like
/// word distribution. Document `i` belongs to group `i % groups`. Returns the
/// texts and their generating group labels.
pub fn grouped_corpus(spec: &SyntheticSpec) -> (Vec<String>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights: Vec<f64> = (1..=spec.vocab_per_group).map(|r| 1.0 / r as f64).collect();
    let total: f64 = weights.iter().sum();
    let n = spec.groups * spec.docs_per_group;
    let mut texts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let g = i % spec.groups;
        let words: Vec<String> = (0..spec.words_per_doc)
            .map(|_| {
                let mut target = rng.random::<f64>() * total;
                let mut j = 0;
                while j + 1 < weights.len() && target >= weights[j] {
                    target -= weights[j];
                    j += 1;
                }
                group_word(g, j)
            })
            .collect();
        texts.push(words.join(" "));
        labels.push(g);
    }
    (texts, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn groups_are_token_disjoint() {
        let spec = SyntheticSpec {
            groups: 4,
            docs_per_group: 20,
            ..Default::default()
        };
        let (texts, labels) = grouped_corpus(&spec);
        assert_eq!(texts.len(), 80);
        let vocab = |g: usize| -> BTreeSet<&str> {
            texts
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == g)
                .flat_map(|(t, _)| t.split(' '))
                .collect()
        };
        for a in 0..4 {
            for b in a + 1..4 {
                assert!(vocab(a).is_disjoint(&vocab(b)));
            }
        }
        assert_eq!(grouped_corpus(&spec), (texts, labels));
    }

    #[test]
    fn words_are_tokenizable() {
        assert_eq!(group_word(0, 0), "kakakaka");
        assert_eq!(group_word(12, 34), "lomineru");
    }
}
