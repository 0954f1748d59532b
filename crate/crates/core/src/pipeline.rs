//! End-to-end dataset builds: deterministic batch generation, holdout
//! splits, and augmentation mixing.
//!
//! Pair `i` of a run is built from `seed::derive(master_seed, i)`, so output
//! is identical across runs and across any parallel execution plan, and
//! extending `n_pairs` preserves the prefix.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{RecordPair, SquadArticle, SquadFile, SquadParagraph, SquadQa};
use crate::grammar::{Grammar, Partition};
use crate::modify::{
    build_aligned_pair, AlignedPair, BuildOptions, PairRequest, SamCategory, TracedPair, Variant,
};
use crate::quality::AnnotatedCorpus;
use crate::seed;
use crate::world::{QType, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub master_seed: u64,
    pub n_pairs: usize,
    /// Weights over the number of SAMs per intervention passage.
    pub num_sam_weights: BTreeMap<u32, f64>,
    pub categories: Vec<SamCategory>,
    pub qtypes: Vec<QType>,
    /// Which template partition feeds this build.
    pub partition: Partition,
    pub spm_enabled: bool,
    pub sim: SimConfig,
    pub pronoun_prob: f64,
    pub filler_prob: f64,
    pub max_attempts: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        let defaults = BuildOptions::default();
        GenerationConfig {
            master_seed: 0,
            n_pairs: 0,
            num_sam_weights: [(1, 1.0), (2, 1.0), (3, 1.0)].into_iter().collect(),
            categories: SamCategory::ALL.to_vec(),
            qtypes: QType::ALL.to_vec(),
            partition: Partition::Challenge,
            spm_enabled: true,
            sim: defaults.sim,
            pronoun_prob: defaults.pronoun_prob,
            filler_prob: defaults.filler_prob,
            max_attempts: defaults.max_attempts,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_sam_weights.is_empty() {
            return Err(Error::Config("num_sam weight map is empty".into()));
        }
        if self.num_sam_weights.values().any(|w| *w < 0.0)
            || self.num_sam_weights.values().all(|w| *w == 0.0)
        {
            return Err(Error::Config(
                "num_sam weights must be nonnegative and not all zero".into(),
            ));
        }
        for k in self.num_sam_weights.keys() {
            if *k == 0 || *k >= self.sim.event_count.1 {
                return Err(Error::Config(format!(
                    "num_sam {k} outside the satisfiable range for the event count"
                )));
            }
        }
        if self.categories.is_empty() {
            return Err(Error::Config("category set is empty".into()));
        }
        if self.qtypes.is_empty() {
            return Err(Error::Config("question type set is empty".into()));
        }
        self.sim.validate()?;
        Ok(())
    }

    fn build_options(&self) -> BuildOptions {
        BuildOptions {
            sim: self.sim.clone(),
            pronoun_prob: self.pronoun_prob,
            filler_prob: self.filler_prob,
            max_attempts: self.max_attempts,
        }
    }

    /// Per-pair plan: question type and SAM count drawn from the enabled
    /// sets with the pair's own derived stream.
    fn plan_pair(&self, index: usize) -> (PairRequest, u64, String) {
        let pair_seed = seed::derive(self.master_seed, index as u64);
        let mut rng = seed::rng(seed::derive(pair_seed, 0));
        let qtype = self.qtypes[rng.random_range(0..self.qtypes.len())];
        let total: f64 = self.num_sam_weights.values().sum();
        let mut draw = rng.random_range(0.0..total);
        let mut num_sam = *self.num_sam_weights.keys().next().expect("non-empty");
        for (k, w) in &self.num_sam_weights {
            num_sam = *k;
            if draw < *w {
                break;
            }
            draw -= w;
        }
        let request = PairRequest {
            qtype,
            num_sam,
            categories: self.categories.clone(),
            partition: self.partition,
            spm_enabled: self.spm_enabled,
        };
        (request, pair_seed, format!("p{index:06}"))
    }
}

/// Generate the challenge set with full ground-truth traces.
pub fn generate_challenge_set_traced(
    grammar: &Grammar,
    config: &GenerationConfig,
) -> Result<Vec<TracedPair>> {
    config.validate()?;
    let opts = config.build_options();
    (0..config.n_pairs)
        .into_par_iter()
        .map(|i| {
            let (request, pair_seed, pair_id) = config.plan_pair(i);
            build_aligned_pair(grammar, &opts, &request, &pair_id, pair_seed)
        })
        .collect()
}

/// Generate exactly `config.n_pairs` aligned pairs.
pub fn generate_challenge_set(
    grammar: &Grammar,
    config: &GenerationConfig,
) -> Result<Vec<AlignedPair>> {
    Ok(generate_challenge_set_traced(grammar, config)?
        .into_iter()
        .map(|t| t.pair)
        .collect())
}

/// Collect one variant's passages as an annotated corpus.
pub fn corpus_from_pairs(pairs: &[AlignedPair], variant: Variant) -> AnnotatedCorpus {
    let passages = pairs
        .iter()
        .filter_map(|p| match variant {
            Variant::Baseline => Some(&p.baseline),
            Variant::Intervention => Some(&p.intervention),
            Variant::Spm => p.spm.as_ref(),
        })
        .map(|inst| (&inst.passage).into())
        .collect();
    AnnotatedCorpus { passages }
}

// ---------------------------------------------------------------------------
// Holdout splits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitAxis {
    QtypeHoldout,
    SamCategoryHoldout,
    NumSamHoldout,
}

impl SplitAxis {
    pub fn parse(s: &str) -> Result<SplitAxis> {
        match s {
            "qtype" => Ok(SplitAxis::QtypeHoldout),
            "sam" => Ok(SplitAxis::SamCategoryHoldout),
            "num-sam" => Ok(SplitAxis::NumSamHoldout),
            _ => Err(Error::Config(format!(
                "unknown split axis '{s}' (expected qtype|sam|num-sam)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub axis: SplitAxis,
    pub train_side: Vec<String>,
    pub eval_side: Vec<String>,
}

impl SplitPolicy {
    /// Overlapping sides are rejected at construction.
    pub fn new(axis: SplitAxis, train_side: Vec<String>, eval_side: Vec<String>) -> Result<Self> {
        for v in &train_side {
            if eval_side.contains(v) {
                return Err(Error::Split(format!(
                    "value '{v}' appears on both sides of the split"
                )));
            }
        }
        if train_side.is_empty() || eval_side.is_empty() {
            return Err(Error::Split("both split sides must be non-empty".into()));
        }
        Ok(SplitPolicy {
            axis,
            train_side,
            eval_side,
        })
    }
}

fn axis_values(pair: &RecordPair, axis: SplitAxis) -> Vec<String> {
    match axis {
        SplitAxis::QtypeHoldout => vec![pair.intervention.qtype.key().to_string()],
        SplitAxis::SamCategoryHoldout => {
            let mut v: Vec<String> = pair
                .intervention
                .sam_categories
                .iter()
                .map(|c| c.key().to_string())
                .collect();
            v.sort();
            v.dedup();
            v
        }
        SplitAxis::NumSamHoldout => vec![pair.intervention.num_sam.to_string()],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub augmentation: Vec<RecordPair>,
    pub evaluation: Vec<RecordPair>,
    /// Pairs whose axis values straddle the two sides (possible for
    /// multi-SAM category splits); they belong to neither.
    pub dropped: usize,
}

/// Partition pairs by the policy: a pair lands on a side iff all of its axis
/// values belong to that side.
pub fn make_holdout_split(pairs: &[RecordPair], policy: &SplitPolicy) -> Result<SplitOutcome> {
    let mut present: Vec<String> = pairs
        .iter()
        .flat_map(|p| axis_values(p, policy.axis))
        .collect();
    present.sort();
    present.dedup();
    for v in policy.train_side.iter().chain(&policy.eval_side) {
        if !present.contains(v) {
            return Err(Error::Split(format!(
                "policy names value '{v}' which is absent from the data"
            )));
        }
    }

    let mut augmentation = Vec::new();
    let mut evaluation = Vec::new();
    let mut dropped = 0usize;
    for pair in pairs {
        let values = axis_values(pair, policy.axis);
        if values.iter().all(|v| policy.train_side.contains(v)) {
            augmentation.push(pair.clone());
        } else if values.iter().all(|v| policy.eval_side.contains(v)) {
            evaluation.push(pair.clone());
        } else {
            dropped += 1;
        }
    }
    if augmentation.is_empty() {
        return Err(Error::Split("augmentation side is empty after filtering".into()));
    }
    if evaluation.is_empty() {
        return Err(Error::Split("evaluation side is empty after filtering".into()));
    }
    Ok(SplitOutcome {
        augmentation,
        evaluation,
        dropped,
    })
}

// ---------------------------------------------------------------------------
// Augmentation mixing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixFractions {
    pub baseline: f64,
    pub intervention: f64,
}

impl MixFractions {
    pub fn validate(&self) -> Result<()> {
        if self.baseline < 0.0 || self.intervention < 0.0 {
            return Err(Error::Config("mix fractions must be nonnegative".into()));
        }
        if (self.baseline + self.intervention - 1.0).abs() > 1e-9 {
            return Err(Error::Config("mix fractions must sum to 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixManifestEntry {
    pub pair_id: String,
    pub variant: Variant,
    pub instance_id: String,
    /// Final article index in the merged file.
    pub inserted_at: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixOutcome {
    pub merged: SquadFile,
    pub manifest: Vec<MixManifestEntry>,
}

fn sample_pair_indices<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Sample `take` challenge instances per the variant mix and insert them at
/// seed-determined article positions in the base training file. Base
/// records are never modified; the manifest records every mixed-in
/// instance and its position.
pub fn mix_augmentation(
    base: &SquadFile,
    pairs: &[RecordPair],
    take: usize,
    mix: MixFractions,
    seed_value: u64,
) -> Result<MixOutcome> {
    mix.validate()?;
    let n_baseline = (take as f64 * mix.baseline).round() as usize;
    let n_intervention = take - n_baseline;
    if n_baseline > pairs.len() || n_intervention > pairs.len() {
        return Err(Error::Config(format!(
            "take {take} exceeds the {} available pairs",
            pairs.len()
        )));
    }

    let mut rng = seed::rng(seed_value);
    let mut selections: Vec<(&RecordPair, Variant)> = Vec::with_capacity(take);
    for idx in sample_pair_indices(&mut rng, pairs.len(), n_baseline) {
        selections.push((&pairs[idx], Variant::Baseline));
    }
    for idx in sample_pair_indices(&mut rng, pairs.len(), n_intervention) {
        selections.push((&pairs[idx], Variant::Intervention));
    }

    let mut merged = base.clone();
    let mut manifest = Vec::with_capacity(take);
    for (pair, variant) in selections {
        let record = match variant {
            Variant::Baseline => &pair.baseline,
            Variant::Intervention => &pair.intervention,
            Variant::Spm => unreachable!("mixing never selects SPM"),
        };
        record.check_offsets()?;
        let article = SquadArticle {
            title: record.instance_id.clone(),
            paragraphs: vec![SquadParagraph {
                context: record.passage.clone(),
                qas: vec![SquadQa {
                    id: record.instance_id.clone(),
                    question: record.question.clone(),
                    answers: record.answers.clone(),
                }],
            }],
        };
        let position = rng.random_range(0..=merged.data.len());
        merged.data.insert(position, article);
        manifest.push(MixManifestEntry {
            pair_id: pair.pair_id.clone(),
            variant,
            instance_id: record.instance_id.clone(),
            inserted_at: position,
        });
    }
    // Later insertions shift earlier ones; rewrite positions to the final
    // indices so the manifest can be used directly.
    for entry in &mut manifest {
        entry.inserted_at = merged
            .data
            .iter()
            .position(|a| a.title == entry.instance_id)
            .expect("mixed-in article present");
    }
    Ok(MixOutcome { merged, manifest })
}
