//! Corpus naturalness and diversity indices over annotated passages.
//!
//! The indices approximate sentence-level cohesion measures at the same
//! granularity as the tooling they stand in for; reports label them as
//! reconstructions. POS tags come from generation metadata (or from the
//! corpus file for external data) — there is no built-in tagger, which keeps
//! the values reproducible.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::PosTag;
use crate::realize::{slice_chars, RealizedPassage, Span};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusToken {
    #[serde(rename = "range")]
    pub span: Span,
    pub pos: PosTag,
    pub lemma: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusPassage {
    pub text: String,
    pub sentences: Vec<Span>,
    pub tokens: Vec<CorpusToken>,
}

impl From<&RealizedPassage> for CorpusPassage {
    fn from(p: &RealizedPassage) -> CorpusPassage {
        CorpusPassage {
            text: p.text.clone(),
            sentences: p.sentences.iter().map(|s| s.span).collect(),
            tokens: p
                .tokens
                .iter()
                .map(|t| CorpusToken {
                    span: t.span,
                    pos: t.pos,
                    lemma: t.lemma.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedCorpus {
    pub passages: Vec<CorpusPassage>,
}

impl AnnotatedCorpus {
    pub fn validate(&self) -> Result<()> {
        if self.passages.is_empty() {
            return Err(Error::UndefinedMetric("corpus has no passages".into()));
        }
        for (i, p) in self.passages.iter().enumerate() {
            if p.sentences.len() < 2 {
                return Err(Error::Config(format!(
                    "passage {i} has fewer than 2 sentences; adjacent-pair indices need pairs"
                )));
            }
            let n = p.text.chars().count();
            for s in p.sentences.iter().chain(p.tokens.iter().map(|t| &t.span)) {
                if s.end > n || s.start >= s.end {
                    return Err(Error::Config(format!("passage {i} has invalid spans")));
                }
            }
        }
        Ok(())
    }

    /// Tokens grouped by the sentence containing them.
    fn sentence_tokens<'a>(&self, p: &'a CorpusPassage) -> Vec<Vec<&'a CorpusToken>> {
        p.sentences
            .iter()
            .map(|s| {
                p.tokens
                    .iter()
                    .filter(|t| t.span.start >= s.start && t.span.end <= s.end)
                    .collect()
            })
            .collect()
    }
}

fn is_content(pos: PosTag) -> bool {
    matches!(
        pos,
        PosTag::Noun | PosTag::Verb | PosTag::Adj | PosTag::Adv | PosTag::Propn
    )
}

fn content_vector<'a>(toks: &[&'a CorpusToken]) -> BTreeMap<&'a str, f64> {
    let mut m: BTreeMap<&str, f64> = BTreeMap::new();
    for t in toks.iter().filter(|t| is_content(t.pos)) {
        *m.entry(t.lemma.as_str()).or_insert(0.0) += 1.0;
    }
    m
}

fn verb_set<'a>(toks: &[&'a CorpusToken]) -> BTreeSet<&'a str> {
    toks.iter()
        .filter(|t| t.pos == PosTag::Verb)
        .map(|t| t.lemma.as_str())
        .collect()
}

fn cosine(a: &BTreeMap<&str, f64>, b: &BTreeMap<&str, f64>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let dot: f64 = a
        .iter()
        .filter_map(|(k, va)| b.get(k).map(|vb| va * vb))
        .sum();
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// m1: mean cosine similarity between content-word lemma count vectors of
/// adjacent sentences. A pair with an empty content set contributes 0.
pub fn adjacent_sentence_similarity(corpus: &AnnotatedCorpus) -> Result<f64> {
    corpus.validate()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for p in &corpus.passages {
        let sentences = corpus.sentence_tokens(p);
        for w in sentences.windows(2) {
            total += cosine(&content_vector(&w[0]), &content_vector(&w[1]));
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::UndefinedMetric("no adjacent sentence pairs".into()));
    }
    Ok(total / pairs as f64)
}

/// m2: mean over passages of (distinct lowercased tokens / total tokens).
pub fn type_token_ratio(corpus: &AnnotatedCorpus) -> Result<f64> {
    corpus.validate()?;
    let mut total = 0.0;
    let mut counted = 0usize;
    for p in &corpus.passages {
        if p.tokens.is_empty() {
            return Err(Error::UndefinedMetric("passage without tokens".into()));
        }
        let mut types: BTreeSet<String> = BTreeSet::new();
        for t in &p.tokens {
            types.insert(slice_chars(&p.text, t.span).to_lowercase());
        }
        total += types.len() as f64 / p.tokens.len() as f64;
        counted += 1;
    }
    Ok(total / counted as f64)
}

/// m3: mean over adjacent sentence pairs of |shared verb lemmas| / |verb
/// lemmas in the second sentence|; pairs whose second sentence has no verbs
/// contribute 0.
pub fn adjacent_verb_overlap(corpus: &AnnotatedCorpus) -> Result<f64> {
    corpus.validate()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for p in &corpus.passages {
        let sentences = corpus.sentence_tokens(p);
        for w in sentences.windows(2) {
            let first = verb_set(&w[0]);
            let second = verb_set(&w[1]);
            if !second.is_empty() {
                total += first.intersection(&second).count() as f64 / second.len() as f64;
            }
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::UndefinedMetric("no adjacent sentence pairs".into()));
    }
    Ok(total / pairs as f64)
}

/// m4: corpus-wide count(PRONOUN) / count(NOUN or PROPN).
pub fn pronoun_noun_ratio(corpus: &AnnotatedCorpus) -> Result<f64> {
    corpus.validate()?;
    let mut pronouns = 0usize;
    let mut nouns = 0usize;
    for p in &corpus.passages {
        for t in &p.tokens {
            match t.pos {
                PosTag::Pronoun => pronouns += 1,
                PosTag::Noun | PosTag::Propn => nouns += 1,
                _ => {}
            }
        }
    }
    if nouns == 0 {
        return Err(Error::UndefinedMetric("corpus has no nouns".into()));
    }
    Ok(pronouns as f64 / nouns as f64)
}

/// Optional subsampling for the O(n^2) pairwise Jaccard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JaccardSampling {
    pub max_pairs: usize,
    pub seed: u64,
}

/// Mean pairwise Jaccard similarity of passage token-type sets; lower means
/// more lexical diversity.
pub fn jaccard_diversity(
    corpus: &AnnotatedCorpus,
    sampling: Option<JaccardSampling>,
) -> Result<f64> {
    corpus.validate()?;
    let n = corpus.passages.len();
    if n < 2 {
        return Err(Error::UndefinedMetric(
            "pairwise diversity needs at least 2 passages".into(),
        ));
    }

    // Intern token types so pair comparison is integer merging.
    let mut interner: HashMap<String, u32> = HashMap::new();
    let mut sets: Vec<Vec<u32>> = Vec::with_capacity(n);
    for p in &corpus.passages {
        let mut set: BTreeSet<u32> = BTreeSet::new();
        for t in &p.tokens {
            let ty = slice_chars(&p.text, t.span).to_lowercase();
            let next = interner.len() as u32;
            let id = *interner.entry(ty).or_insert(next);
            set.insert(id);
        }
        sets.push(set.into_iter().collect());
    }

    let jaccard = |a: &[u32], b: &[u32]| -> f64 {
        let mut i = 0;
        let mut j = 0;
        let mut inter = 0usize;
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    inter += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        let union = a.len() + b.len() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    };

    if let Some(s) = sampling {
        if s.max_pairs == 0 {
            return Err(Error::Config("jaccard sample size must be positive".into()));
        }
    }
    let total_pairs = n * (n - 1) / 2;
    match sampling {
        Some(s) if s.max_pairs < total_pairs => {
            let mut rng = seed::rng(s.seed);
            let mut picked: BTreeSet<(usize, usize)> = BTreeSet::new();
            while picked.len() < s.max_pairs {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a < b {
                    picked.insert((a, b));
                } else if b < a {
                    picked.insert((b, a));
                }
            }
            let sum: f64 = picked.iter().map(|(a, b)| jaccard(&sets[*a], &sets[*b])).sum();
            Ok(sum / s.max_pairs as f64)
        }
        _ => {
            let mut sum = 0.0;
            for a in 0..n {
                for b in (a + 1)..n {
                    sum += jaccard(&sets[a], &sets[b]);
                }
            }
            Ok(sum / total_pairs as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityMetadata {
    /// The indices are reconstructions of sentence-level cohesion measures,
    /// not the original tool's formulas.
    pub definitions: String,
    pub lexical_diversity: String,
    /// Sample size when the pairwise Jaccard was subsampled.
    pub jaccard_sample_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub m1_adjacent_sentence_similarity: f64,
    pub m2_type_token_ratio: f64,
    pub m3_adjacent_verb_overlap: f64,
    pub m4_pronoun_noun_ratio: f64,
    pub lexical_diversity_jaccard: f64,
    pub passage_count: usize,
    pub metadata: QualityMetadata,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityOptions {
    pub jaccard_sampling: Option<JaccardSampling>,
}

pub fn quality_report(corpus: &AnnotatedCorpus, opts: &QualityOptions) -> Result<QualityReport> {
    let sample_size = match opts.jaccard_sampling {
        Some(s) => {
            let n = corpus.passages.len();
            Some(s.max_pairs.min(n * n.saturating_sub(1) / 2))
        }
        None => None,
    };
    Ok(QualityReport {
        m1_adjacent_sentence_similarity: adjacent_sentence_similarity(corpus)?,
        m2_type_token_ratio: type_token_ratio(corpus)?,
        m3_adjacent_verb_overlap: adjacent_verb_overlap(corpus)?,
        m4_pronoun_noun_ratio: pronoun_noun_ratio(corpus)?,
        lexical_diversity_jaccard: jaccard_diversity(corpus, opts.jaccard_sampling)?,
        passage_count: corpus.passages.len(),
        metadata: QualityMetadata {
            definitions: "reconstructed sentence-level cohesion indices".to_string(),
            lexical_diversity: "mean pairwise Jaccard similarity of passage token-type sets"
                .to_string(),
            jaccard_sample_size: sample_size,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Build a passage from sentences given as (word, pos, lemma) token
    /// lists.
    fn passage(sentences: Vec<Vec<(&str, PosTag, &str)>>) -> CorpusPassage {
        let mut text = String::new();
        let mut spans = Vec::new();
        let mut tokens = Vec::new();
        for sent in sentences {
            if !text.is_empty() {
                text.push(' ');
            }
            let start = text.chars().count();
            for (i, (w, pos, lemma)) in sent.iter().enumerate() {
                if i > 0 {
                    text.push(' ');
                }
                let s = text.chars().count();
                text.push_str(w);
                tokens.push(CorpusToken {
                    span: Span::new(s, text.chars().count()),
                    pos: *pos,
                    lemma: lemma.to_string(),
                });
            }
            text.push('.');
            spans.push(Span::new(start, text.chars().count()));
        }
        CorpusPassage {
            text,
            sentences: spans,
            tokens,
        }
    }

    #[test]
    fn identical_sentences_have_similarity_one() {
        let p = passage(vec![
            vec![("kick", PosTag::Verb, "kick"), ("goal", PosTag::Noun, "goal")],
            vec![("kick", PosTag::Verb, "kick"), ("goal", PosTag::Noun, "goal")],
        ]);
        let c = AnnotatedCorpus { passages: vec![p] };
        assert!((adjacent_sentence_similarity(&c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_content_has_similarity_zero() {
        let p = passage(vec![
            vec![("kick", PosTag::Verb, "kick")],
            vec![("throw", PosTag::Verb, "throw")],
        ]);
        let c = AnnotatedCorpus { passages: vec![p] };
        assert_eq!(adjacent_sentence_similarity(&c).unwrap(), 0.0);
    }

    #[test]
    fn half_overlapping_content_cosine() {
        // {kick, goal} vs {kick, pass}: cosine of (1,1,0) and (1,0,1) = 0.5.
        let p = passage(vec![
            vec![("kick", PosTag::Verb, "kick"), ("goal", PosTag::Noun, "goal")],
            vec![("kick", PosTag::Verb, "kick"), ("pass", PosTag::Noun, "pass")],
        ]);
        let c = AnnotatedCorpus { passages: vec![p] };
        assert!((adjacent_sentence_similarity(&c).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn type_token_ratio_counts_distinct_tokens() {
        let p = passage(vec![
            vec![("a", PosTag::Det, "a"), ("b", PosTag::Noun, "b")],
            vec![("a", PosTag::Det, "a"), ("c", PosTag::Noun, "c")],
        ]);
        let c = AnnotatedCorpus { passages: vec![p] };
        assert!((type_token_ratio(&c).unwrap() - 0.75).abs() < 1e-12);

        // All-distinct tokens hit the upper bound.
        let distinct = passage(vec![
            vec![("a", PosTag::Noun, "a"), ("b", PosTag::Noun, "b")],
            vec![("c", PosTag::Noun, "c")],
        ]);
        let c = AnnotatedCorpus { passages: vec![distinct] };
        assert_eq!(type_token_ratio(&c).unwrap(), 1.0);

        // One token repeated n times gives 1/n.
        for n in [2usize, 4, 8] {
            let half = n / 2;
            let rep = passage(vec![
                vec![("x", PosTag::Noun, "x"); half],
                vec![("x", PosTag::Noun, "x"); n - half],
            ]);
            let c = AnnotatedCorpus { passages: vec![rep] };
            assert!((type_token_ratio(&c).unwrap() - 1.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn verb_overlap_examples() {
        let full = passage(vec![
            vec![("kicked", PosTag::Verb, "kick")],
            vec![("kicks", PosTag::Verb, "kick")],
        ]);
        let c = AnnotatedCorpus { passages: vec![full] };
        assert_eq!(adjacent_verb_overlap(&c).unwrap(), 1.0);

        let disjoint = passage(vec![
            vec![("kicked", PosTag::Verb, "kick")],
            vec![("threw", PosTag::Verb, "throw")],
        ]);
        let c = AnnotatedCorpus { passages: vec![disjoint] };
        assert_eq!(adjacent_verb_overlap(&c).unwrap(), 0.0);

        // S1 {kick, score}, S2 {score, throw}: 1 shared of 2 in the second.
        let half = passage(vec![
            vec![
                ("kicked", PosTag::Verb, "kick"),
                ("scored", PosTag::Verb, "score"),
            ],
            vec![
                ("scored", PosTag::Verb, "score"),
                ("threw", PosTag::Verb, "throw"),
            ],
        ]);
        let c = AnnotatedCorpus { passages: vec![half] };
        assert!((adjacent_verb_overlap(&c).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pronoun_noun_ratio_examples() {
        let mut toks = Vec::new();
        for _ in 0..7 {
            toks.push(("he", PosTag::Pronoun, "he"));
        }
        for _ in 0..50 {
            toks.push(("goal", PosTag::Noun, "goal"));
        }
        let second: Vec<(&str, PosTag, &str)> =
            (0..50).map(|_| ("field", PosTag::Noun, "field")).collect();
        let p = passage(vec![toks, second]);
        let c = AnnotatedCorpus { passages: vec![p] };
        assert!((pronoun_noun_ratio(&c).unwrap() - 0.07).abs() < 1e-12);

        let no_pronouns = passage(vec![
            vec![("goal", PosTag::Noun, "goal")],
            vec![("field", PosTag::Noun, "field")],
        ]);
        let c = AnnotatedCorpus {
            passages: vec![no_pronouns],
        };
        assert_eq!(pronoun_noun_ratio(&c).unwrap(), 0.0);

        // Equal counts give exactly 1.
        let equal = passage(vec![
            vec![("he", PosTag::Pronoun, "he"), ("goal", PosTag::Noun, "goal")],
            vec![("she", PosTag::Pronoun, "she"), ("field", PosTag::Noun, "field")],
        ]);
        let c = AnnotatedCorpus { passages: vec![equal] };
        assert_eq!(pronoun_noun_ratio(&c).unwrap(), 1.0);
    }

    #[test]
    fn jaccard_examples() {
        let p1 = passage(vec![
            vec![("a", PosTag::Noun, "a")],
            vec![("b", PosTag::Noun, "b")],
        ]);
        let p2 = passage(vec![
            vec![("b", PosTag::Noun, "b")],
            vec![("c", PosTag::Noun, "c")],
        ]);
        let c = AnnotatedCorpus {
            passages: vec![p1.clone(), p2.clone()],
        };
        assert!((jaccard_diversity(&c, None).unwrap() - 1.0 / 3.0).abs() < 1e-12);

        // Identical passages: exactly 1.
        let c = AnnotatedCorpus {
            passages: vec![p1.clone(), p1.clone(), p1.clone()],
        };
        assert_eq!(jaccard_diversity(&c, None).unwrap(), 1.0);

        // Three passages: mean of the three pairwise values.
        let p3 = passage(vec![
            vec![("c", PosTag::Noun, "c")],
            vec![("d", PosTag::Noun, "d")],
        ]);
        let c = AnnotatedCorpus {
            passages: vec![p1, p2, p3],
        };
        let expected = (1.0 / 3.0 + 0.0 + 1.0 / 3.0) / 3.0;
        assert!((jaccard_diversity(&c, None).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn sampled_jaccard_is_deterministic_and_rejects_zero() {
        let passages: Vec<CorpusPassage> = (0..12)
            .map(|i| {
                passage(vec![
                    vec![("a", PosTag::Noun, "a")],
                    vec![(["b", "c", "d"][i % 3], PosTag::Noun, "x")],
                ])
            })
            .collect();
        let c = AnnotatedCorpus { passages };
        let s1 = jaccard_diversity(&c, Some(JaccardSampling { max_pairs: 10, seed: 4 })).unwrap();
        let s2 = jaccard_diversity(&c, Some(JaccardSampling { max_pairs: 10, seed: 4 })).unwrap();
        assert_eq!(s1.to_bits(), s2.to_bits());
        // A sample covering everything equals the exact value.
        let exact = jaccard_diversity(&c, None).unwrap();
        let full = jaccard_diversity(&c, Some(JaccardSampling { max_pairs: 1000, seed: 4 })).unwrap();
        assert_eq!(exact.to_bits(), full.to_bits());
        assert!(jaccard_diversity(&c, Some(JaccardSampling { max_pairs: 0, seed: 4 })).is_err());
    }

    #[test]
    fn undefined_guards() {
        let empty = AnnotatedCorpus { passages: vec![] };
        assert!(matches!(
            adjacent_sentence_similarity(&empty),
            Err(Error::UndefinedMetric(_))
        ));
        let one = AnnotatedCorpus {
            passages: vec![passage(vec![
                vec![("a", PosTag::Noun, "a")],
                vec![("b", PosTag::Noun, "b")],
            ])],
        };
        assert!(matches!(
            jaccard_diversity(&one, None),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn indices_are_permutation_invariant() {
        let p1 = passage(vec![
            vec![("a", PosTag::Noun, "a"), ("he", PosTag::Pronoun, "he")],
            vec![("b", PosTag::Noun, "b")],
        ]);
        let p2 = passage(vec![
            vec![("c", PosTag::Noun, "c")],
            vec![("d", PosTag::Verb, "d")],
        ]);
        let p3 = passage(vec![
            vec![("e", PosTag::Noun, "e")],
            vec![("a", PosTag::Noun, "a")],
        ]);
        let fwd = AnnotatedCorpus {
            passages: vec![p1.clone(), p2.clone(), p3.clone()],
        };
        let rev = AnnotatedCorpus {
            passages: vec![p3, p2, p1],
        };
        let a = quality_report(&fwd, &QualityOptions::default()).unwrap();
        let b = quality_report(&rev, &QualityOptions::default()).unwrap();
        assert_eq!(a.m1_adjacent_sentence_similarity, b.m1_adjacent_sentence_similarity);
        assert_eq!(a.m2_type_token_ratio, b.m2_type_token_ratio);
        assert_eq!(a.m4_pronoun_noun_ratio, b.m4_pronoun_noun_ratio);
        assert_eq!(a.lexical_diversity_jaccard, b.lexical_diversity_jaccard);
    }
}
