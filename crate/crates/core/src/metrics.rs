//! Scoring: answer normalization, exact match, token F1, accuracy on the
//! baseline/intervention subsets, consistency, DICE, and normal-approximation
//! confidence intervals.
//!
//! Consistency is the fraction of pairs answered correctly in both variants;
//! DICE restricts the denominator to pairs whose baseline was answered
//! correctly, which discounts plain distribution-shift errors and isolates
//! the effect of the modification.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::modify::AlignedPair;

/// Lowercase, strip punctuation, drop the articles a/an/the as whole tokens,
/// and collapse whitespace. Idempotent.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1 iff the normalized prediction equals some normalized gold answer.
pub fn exact_match(pred: &str, golds: &[String]) -> bool {
    let p = normalize_answer(pred);
    golds.iter().any(|g| normalize_answer(g) == p)
}

fn f1_against(pred_tokens: &[&str], gold_tokens: &[&str]) -> f64 {
    if pred_tokens.is_empty() && gold_tokens.is_empty() {
        return 1.0;
    }
    if pred_tokens.is_empty() || gold_tokens.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in gold_tokens {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut common = 0i64;
    for t in pred_tokens {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred_tokens.len() as f64;
    let recall = common as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Max over golds of the harmonic mean of token precision/recall on
/// normalized token multisets.
pub fn token_f1(pred: &str, golds: &[String]) -> f64 {
    let p_norm = normalize_answer(pred);
    let p_tokens: Vec<&str> = p_norm.split_whitespace().collect();
    golds
        .iter()
        .map(|g| {
            let g_norm = normalize_answer(g);
            let g_tokens: Vec<&str> = g_norm.split_whitespace().collect();
            f1_against(&p_tokens, &g_tokens)
        })
        .fold(0.0, f64::max)
}

/// Rule deciding membership in the correct sets B+ and I+.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "threshold")]
pub enum CorrectnessRule {
    #[default]
    ExactMatch,
    /// Correct iff token F1 >= threshold.
    F1Threshold(f64),
}

impl CorrectnessRule {
    pub fn is_correct(&self, pred: &str, golds: &[String]) -> bool {
        match self {
            CorrectnessRule::ExactMatch => exact_match(pred, golds),
            CorrectnessRule::F1Threshold(t) => token_f1(pred, golds) >= *t,
        }
    }
}

/// An evaluated model's answers keyed by instance id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub answers: BTreeMap<String, String>,
    /// Free-form label: model name and configuration.
    pub provenance: String,
}

impl PredictionSet {
    pub fn new(answers: BTreeMap<String, String>, provenance: impl Into<String>) -> Self {
        PredictionSet {
            answers,
            provenance: provenance.into(),
        }
    }
}

/// Gold answers for one instance, as scoring sees them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldInstance {
    pub instance_id: String,
    pub answers: Vec<String>,
}

/// A pair reduced to what scoring needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldPair {
    pub pair_id: String,
    pub baseline: GoldInstance,
    pub intervention: GoldInstance,
    pub spm: Option<GoldInstance>,
}

impl From<&AlignedPair> for GoldPair {
    fn from(p: &AlignedPair) -> GoldPair {
        let g = |i: &crate::modify::Instance| GoldInstance {
            instance_id: i.instance_id.clone(),
            answers: i.answers.iter().map(|a| a.text.clone()).collect(),
        };
        GoldPair {
            pair_id: p.pair_id.clone(),
            baseline: g(&p.baseline),
            intervention: g(&p.intervention),
            spm: p.spm.as_ref().map(g),
        }
    }
}

/// Truncate a predicted answer to its first `limit` whitespace tokens.
fn truncate_tokens(s: &str, limit: usize) -> String {
    let tokens: Vec<&str> = s.split_whitespace().collect();
    if tokens.len() <= limit {
        s.to_string()
    } else {
        tokens[..limit].join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub rule: CorrectnessRule,
    /// Significance level for the confidence half-widths.
    pub alpha: f64,
    /// Predictions longer than this many tokens are truncated before
    /// scoring; challenge-set answers are short.
    pub answer_token_limit: Option<usize>,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            rule: CorrectnessRule::ExactMatch,
            alpha: 0.05,
            answer_token_limit: Some(10),
        }
    }
}

/// z(1 - alpha/2) * sqrt(p (1 - p) / n).
pub fn binomial_ci_halfwidth(p: f64, n: usize, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::UndefinedMetric(
            "confidence interval needs n >= 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("fraction {p} outside [0, 1]")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z = normal.inverse_cdf(1.0 - alpha / 2.0);
    Ok(z * (p * (1.0 - p) / n as f64).sqrt())
}

fn lookup<'a>(
    preds: &'a PredictionSet,
    id: &str,
    missing: &mut Vec<String>,
) -> Option<&'a String> {
    let found = preds.answers.get(id);
    if found.is_none() {
        missing.push(id.to_string());
    }
    found
}

/// Fraction of pairs whose baseline AND intervention predictions are both
/// correct. Missing predictions count as incorrect.
pub fn consistency(
    pairs: &[GoldPair],
    preds: &PredictionSet,
    rule: CorrectnessRule,
) -> Result<f64> {
    let c = counts(pairs, preds, rule, None)?;
    Ok(c.joint as f64 / c.n as f64)
}

/// Consistency restricted to pairs whose baseline was answered correctly.
/// Explicitly undefined when no baseline is correct.
pub fn dice(pairs: &[GoldPair], preds: &PredictionSet, rule: CorrectnessRule) -> Result<f64> {
    let c = counts(pairs, preds, rule, None)?;
    if c.baseline_correct == 0 {
        return Err(Error::UndefinedMetric(
            "DICE undefined: no baseline instance answered correctly".into(),
        ));
    }
    Ok(c.joint as f64 / c.baseline_correct as f64)
}

struct PairCounts {
    n: usize,
    baseline_correct: usize,
    intervention_correct: usize,
    joint: usize,
    missing: Vec<String>,
}

fn counts(
    pairs: &[GoldPair],
    preds: &PredictionSet,
    rule: CorrectnessRule,
    token_limit: Option<usize>,
) -> Result<PairCounts> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("empty pair list".into()));
    }
    let prep = |s: &String| match token_limit {
        Some(l) => truncate_tokens(s, l),
        None => s.clone(),
    };
    let mut c = PairCounts {
        n: pairs.len(),
        baseline_correct: 0,
        intervention_correct: 0,
        joint: 0,
        missing: Vec::new(),
    };
    for pair in pairs {
        let b_ok = lookup(preds, &pair.baseline.instance_id, &mut c.missing)
            .map(|p| rule.is_correct(&prep(p), &pair.baseline.answers))
            .unwrap_or(false);
        let i_ok = lookup(preds, &pair.intervention.instance_id, &mut c.missing)
            .map(|p| rule.is_correct(&prep(p), &pair.intervention.answers))
            .unwrap_or(false);
        c.baseline_correct += b_ok as usize;
        c.intervention_correct += i_ok as usize;
        c.joint += (b_ok && i_ok) as usize;
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiHalfwidths {
    pub acc_baseline: f64,
    pub acc_intervention: f64,
    pub consistency: f64,
    pub dice: Option<f64>,
    pub em: f64,
}

/// Scores for one prediction set over a challenge set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n_pairs: usize,
    pub acc_baseline: f64,
    pub acc_intervention: f64,
    /// Consistency C = |B+ n I+| / |N|.
    pub joint: f64,
    /// DICE = |B+ n I+| / |B+|; None when |B+| = 0.
    pub dice: Option<f64>,
    /// Mean exact match over baseline and intervention instances.
    pub em: f64,
    /// Mean token F1 over baseline and intervention instances.
    pub f1: f64,
    pub ci_halfwidths: CiHalfwidths,
    pub alpha: f64,
    pub rule: CorrectnessRule,
    /// Accuracy on SPM instances, when the set carries any.
    pub acc_spm: Option<f64>,
    pub n_spm: usize,
    /// Instance ids that had no prediction; counted incorrect.
    pub missing: Vec<String>,
    pub provenance: String,
    /// Rounded percentage strings for quick reading ("92 ± 1").
    pub display: BTreeMap<String, String>,
}

fn display_pct(p: f64, hw: f64) -> String {
    format!("{:.0} ± {:.0}", p * 100.0, (hw * 100.0).max(0.0))
}

/// Single-pass scoring of a prediction set against aligned pairs.
pub fn score_pairs(
    pairs: &[GoldPair],
    preds: &PredictionSet,
    opts: &ScoreOptions,
) -> Result<ScoreReport> {
    let c = counts(pairs, preds, opts.rule, opts.answer_token_limit)?;
    let n = c.n as f64;

    let prep = |s: &String| match opts.answer_token_limit {
        Some(l) => truncate_tokens(s, l),
        None => s.clone(),
    };

    // EM and mean F1 accumulate in fixed pair order, baseline then
    // intervention, so reruns are bit-identical.
    let mut em_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut spm_total = 0usize;
    let mut spm_correct = 0usize;
    let mut spm_missing = Vec::new();
    for pair in pairs {
        for inst in [&pair.baseline, &pair.intervention] {
            if let Some(p) = preds.answers.get(&inst.instance_id) {
                let p = prep(p);
                em_sum += exact_match(&p, &inst.answers) as u32 as f64;
                f1_sum += token_f1(&p, &inst.answers);
            }
        }
        if let Some(spm) = &pair.spm {
            spm_total += 1;
            let ok = lookup(preds, &spm.instance_id, &mut spm_missing)
                .map(|p| opts.rule.is_correct(&prep(p), &spm.answers))
                .unwrap_or(false);
            spm_correct += ok as usize;
        }
    }
    let em = em_sum / (2.0 * n);
    let f1 = f1_sum / (2.0 * n);

    let acc_baseline = c.baseline_correct as f64 / n;
    let acc_intervention = c.intervention_correct as f64 / n;
    let joint = c.joint as f64 / n;
    let dice = if c.baseline_correct > 0 {
        Some(c.joint as f64 / c.baseline_correct as f64)
    } else {
        None
    };
    let acc_spm = if spm_total > 0 {
        Some(spm_correct as f64 / spm_total as f64)
    } else {
        None
    };

    let ci = CiHalfwidths {
        acc_baseline: binomial_ci_halfwidth(acc_baseline, c.n, opts.alpha)?,
        acc_intervention: binomial_ci_halfwidth(acc_intervention, c.n, opts.alpha)?,
        consistency: binomial_ci_halfwidth(joint, c.n, opts.alpha)?,
        dice: match dice {
            Some(d) => Some(binomial_ci_halfwidth(d, c.baseline_correct, opts.alpha)?),
            None => None,
        },
        em: binomial_ci_halfwidth(em, 2 * c.n, opts.alpha)?,
    };

    let mut display = BTreeMap::new();
    display.insert(
        "acc_baseline".to_string(),
        display_pct(acc_baseline, ci.acc_baseline),
    );
    display.insert(
        "acc_intervention".to_string(),
        display_pct(acc_intervention, ci.acc_intervention),
    );
    display.insert("consistency".to_string(), display_pct(joint, ci.consistency));
    if let (Some(d), Some(hw)) = (dice, ci.dice) {
        display.insert("dice".to_string(), display_pct(d, hw));
    }

    let mut missing = c.missing;
    missing.extend(spm_missing);
    missing.sort();
    missing.dedup();

    Ok(ScoreReport {
        n_pairs: c.n,
        acc_baseline,
        acc_intervention,
        joint,
        dice,
        em,
        f1,
        ci_halfwidths: ci,
        alpha: opts.alpha,
        rule: opts.rule,
        acc_spm,
        n_spm: spm_total,
        missing,
        provenance: preds.provenance.clone(),
        display,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(i: usize, b: &str, iv: &str) -> GoldPair {
        GoldPair {
            pair_id: format!("p{i}"),
            baseline: GoldInstance {
                instance_id: format!("p{i}-baseline"),
                answers: vec![b.to_string()],
            },
            intervention: GoldInstance {
                instance_id: format!("p{i}-intervention"),
                answers: vec![iv.to_string()],
            },
            spm: None,
        }
    }

    fn preds(entries: &[(&str, &str)]) -> PredictionSet {
        PredictionSet::new(
            entries
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            "test",
        )
    }

    #[test]
    fn normalization_matches_extractive_qa_conventions() {
        assert_eq!(normalize_answer("The Patriots!"), "patriots");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("  An  odd   SPACING "), "odd spacing");
    }

    #[test]
    fn exact_match_examples() {
        assert!(exact_match("25 metres", &["25 metres".into()]));
        assert!(exact_match("the 25 metres", &["25 Metres".into()]));
        assert!(!exact_match("25", &["25 metres".into()]));
    }

    #[test]
    fn token_f1_examples() {
        let f = token_f1("25", &["25 metres".into()]);
        assert!((f - 2.0 / 3.0).abs() < 1e-4, "{f}");
        assert_eq!(token_f1("25 metres", &["25 metres".into()]), 1.0);
        assert_eq!(token_f1("", &["".into()]), 1.0);
        assert_eq!(token_f1("", &["x".into()]), 0.0);
        assert_eq!(token_f1("x", &["".into()]), 0.0);
    }

    #[test]
    fn consistency_and_dice_counting() {
        // baseline-correct {1,2,3}, intervention-correct {2,3,4} over 4 pairs.
        let pairs: Vec<GoldPair> = (1..=4).map(|i| pair(i, "b", "i")).collect();
        let p = preds(&[
            ("p1-baseline", "b"),
            ("p1-intervention", "wrong"),
            ("p2-baseline", "b"),
            ("p2-intervention", "i"),
            ("p3-baseline", "b"),
            ("p3-intervention", "i"),
            ("p4-baseline", "wrong"),
            ("p4-intervention", "i"),
        ]);
        let c = consistency(&pairs, &p, CorrectnessRule::ExactMatch).unwrap();
        assert_eq!(c, 0.5);
        let d = dice(&pairs, &p, CorrectnessRule::ExactMatch).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn consistency_bounds() {
        let pairs: Vec<GoldPair> = (1..=3).map(|i| pair(i, "b", "i")).collect();
        let all_right = preds(&[
            ("p1-baseline", "b"),
            ("p1-intervention", "i"),
            ("p2-baseline", "b"),
            ("p2-intervention", "i"),
            ("p3-baseline", "b"),
            ("p3-intervention", "i"),
        ]);
        assert_eq!(
            consistency(&pairs, &all_right, CorrectnessRule::ExactMatch).unwrap(),
            1.0
        );
        let baselines_only = preds(&[
            ("p1-baseline", "b"),
            ("p2-baseline", "b"),
            ("p3-baseline", "b"),
        ]);
        assert_eq!(
            consistency(&pairs, &baselines_only, CorrectnessRule::ExactMatch).unwrap(),
            0.0
        );
    }

    #[test]
    fn sam_blind_predictor_has_zero_dice() {
        // Answering every variant with the baseline label: baseline accuracy
        // one, intersection empty.
        let pairs: Vec<GoldPair> = (1..=5).map(|i| pair(i, "base", "shifted")).collect();
        let blind = preds(&[
            ("p1-baseline", "base"),
            ("p1-intervention", "base"),
            ("p2-baseline", "base"),
            ("p2-intervention", "base"),
            ("p3-baseline", "base"),
            ("p3-intervention", "base"),
            ("p4-baseline", "base"),
            ("p4-intervention", "base"),
            ("p5-baseline", "base"),
            ("p5-intervention", "base"),
        ]);
        let report = score_pairs(&pairs, &blind, &ScoreOptions::default()).unwrap();
        assert_eq!(report.acc_baseline, 1.0);
        assert_eq!(report.dice, Some(0.0));
    }

    #[test]
    fn dice_undefined_without_correct_baselines() {
        let pairs: Vec<GoldPair> = (1..=2).map(|i| pair(i, "b", "i")).collect();
        let p = preds(&[("p1-baseline", "x"), ("p2-baseline", "y")]);
        assert!(matches!(
            dice(&pairs, &p, CorrectnessRule::ExactMatch),
            Err(Error::UndefinedMetric(_))
        ));
        let report = score_pairs(&pairs, &p, &ScoreOptions::default()).unwrap();
        assert_eq!(report.dice, None);
        assert!(report.missing.contains(&"p1-intervention".to_string()));
    }

    #[test]
    fn empty_pair_list_is_undefined() {
        let p = preds(&[]);
        assert!(matches!(
            consistency(&[], &p, CorrectnessRule::ExactMatch),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn ci_halfwidth_examples() {
        let hw = binomial_ci_halfwidth(0.5, 100, 0.05).unwrap();
        assert!((hw - 0.0980).abs() < 1e-4, "{hw}");
        let hw = binomial_ci_halfwidth(0.92, 4200, 0.05).unwrap();
        assert!((hw - 0.0082).abs() < 1e-4, "{hw}");
        assert_eq!(binomial_ci_halfwidth(0.0, 50, 0.05).unwrap(), 0.0);
        assert!(binomial_ci_halfwidth(0.5, 0, 0.05).is_err());
    }

    #[test]
    fn long_predictions_are_truncated_before_scoring() {
        let pairs = vec![pair(1, "b", "i")];
        let long = format!("b {}", "filler ".repeat(20));
        let p = preds(&[("p1-baseline", long.as_str()), ("p1-intervention", "i")]);
        let opts = ScoreOptions {
            rule: CorrectnessRule::F1Threshold(0.05),
            alpha: 0.05,
            answer_token_limit: Some(10),
        };
        let report = score_pairs(&pairs, &p, &opts).unwrap();
        assert_eq!(report.acc_baseline, 1.0);
        // With no limit the extra tokens dilute F1 below a stricter bar.
        let opts = ScoreOptions {
            rule: CorrectnessRule::F1Threshold(0.5),
            alpha: 0.05,
            answer_token_limit: None,
        };
        let report = score_pairs(&pairs, &p, &opts).unwrap();
        assert_eq!(report.acc_baseline, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn normalization_is_idempotent(s in ".{0,60}") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(&once), once);
        }

        #[test]
        fn f1_dominates_exact_match(p in "[a-c ]{0,10}", g in "[a-c ]{0,10}") {
            let golds = vec![g];
            let em = exact_match(&p, &golds) as u32 as f64;
            prop_assert!(token_f1(&p, &golds) >= em - 1e-12);
        }
    }
}
