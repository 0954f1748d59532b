//! Scripted reference predictors.
//!
//! `perfect` answers every instance from its label and pins the upper bound
//! (consistency = DICE = 1). `sam-blind` answers every variant with the
//! pair's baseline label: baseline accuracy is 1 while the intersection
//! |B+ n I+| is empty, so DICE = 0. Together they bracket the range real
//! models land in.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::formats::RecordPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorMode {
    Perfect,
    SamBlind,
}

impl PredictorMode {
    pub fn key(self) -> &'static str {
        match self {
            PredictorMode::Perfect => "perfect",
            PredictorMode::SamBlind => "sam-blind",
        }
    }

    pub fn parse(s: &str) -> Result<PredictorMode> {
        match s {
            "perfect" => Ok(PredictorMode::Perfect),
            "sam-blind" => Ok(PredictorMode::SamBlind),
            _ => Err(Error::Config(format!(
                "unknown predictor mode '{s}' (expected perfect|sam-blind)"
            ))),
        }
    }
}

/// Produce predictions for every instance of every pair.
pub fn run_predictor(pairs: &[RecordPair], mode: PredictorMode) -> BTreeMap<String, String> {
    let mut preds = BTreeMap::new();
    for pair in pairs {
        for record in pair.records() {
            let answer = match mode {
                PredictorMode::Perfect => record.answers[0].text.clone(),
                PredictorMode::SamBlind => pair.baseline.answers[0].text.clone(),
            };
            preds.insert(record.instance_id.clone(), answer);
        }
    }
    preds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{score_pairs, PredictionSet, ScoreOptions};

    fn sample_pairs() -> Vec<RecordPair> {
        use crate::formats::{group_records, records_from_pairs};
        use crate::grammar::Grammar;
        use crate::pipeline::{generate_challenge_set, GenerationConfig};
        let grammar = Grammar::builtin();
        let cfg = GenerationConfig {
            master_seed: 77,
            n_pairs: 12,
            ..GenerationConfig::default()
        };
        let pairs = generate_challenge_set(&grammar, &cfg).unwrap();
        group_records(records_from_pairs(&pairs)).unwrap()
    }

    #[test]
    fn perfect_mode_scores_one_everywhere() {
        let pairs = sample_pairs();
        let preds = PredictionSet::new(run_predictor(&pairs, PredictorMode::Perfect), "perfect");
        let gold: Vec<_> = pairs.iter().map(|p| p.to_gold()).collect();
        let report = score_pairs(&gold, &preds, &ScoreOptions::default()).unwrap();
        assert_eq!(report.joint, 1.0);
        assert_eq!(report.dice, Some(1.0));
        assert_eq!(report.em, 1.0);
    }

    #[test]
    fn sam_blind_mode_has_perfect_baselines_and_zero_dice() {
        let pairs = sample_pairs();
        let preds = PredictionSet::new(run_predictor(&pairs, PredictorMode::SamBlind), "blind");
        let gold: Vec<_> = pairs.iter().map(|p| p.to_gold()).collect();
        let report = score_pairs(&gold, &preds, &ScoreOptions::default()).unwrap();
        assert_eq!(report.acc_baseline, 1.0);
        assert_eq!(report.dice, Some(0.0));
        // SPM instances share the baseline label, so the blind predictor
        // answers them correctly.
        assert_eq!(report.acc_spm, Some(1.0));
    }
}
