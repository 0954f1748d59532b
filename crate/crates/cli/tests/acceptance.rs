//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Run with:
//!
//! ```text
//! cargo test -p samforge-cli --test acceptance -- --nocapture
//! ```
//!
//! Criteria 1 and 5 drive the installed `samforge` binary; the rest exercise
//! the library directly. Fine-tuned-model numbers (dev-set EM/F1, DICE
//! learning curves, inoculation percentages) require GPU training and stay
//! out of scope; criterion 9 instead checks the split and mixing machinery
//! that produces the training files those experiments consume.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use samforge_core::formats::{group_records, records_from_pairs, write_aligned_jsonl};
use samforge_core::grammar::Grammar;
use samforge_core::metrics::{
    binomial_ci_halfwidth, consistency, dice, CorrectnessRule, GoldInstance, GoldPair,
    PredictionSet,
};
use samforge_core::modify::Variant;
use samforge_core::pipeline::{
    corpus_from_pairs, generate_challenge_set, generate_challenge_set_traced, mix_augmentation,
    make_holdout_split, GenerationConfig, MixFractions, SplitAxis, SplitPolicy,
};
use samforge_core::quality::{quality_report, QualityOptions};
use samforge_core::verify::{replay_answer, validate_pair, verify_traced};
use samforge_core::world::{QType, Question, QuestionFocus};

fn samforge() -> Command {
    Command::new(env!("CARGO_BIN_EXE_samforge"))
}

fn run(cmd: &mut Command) {
    let output = cmd.output().expect("spawn samforge");
    assert!(
        output.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn default_config(n: usize, seed: u64) -> GenerationConfig {
    GenerationConfig {
        master_seed: seed,
        n_pairs: n,
        ..GenerationConfig::default()
    }
}

/// Criterion 1: 4200 pairs generate in under 60 seconds through the CLI and
/// every pair passes the alignment invariants.
#[test]
fn criterion_1_scale_and_validity() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmp(&dir, "eval.jsonl");
    let started = Instant::now();
    run(samforge()
        .arg("generate")
        .args(["--seed", "1", "--pairs", "4200"])
        .arg("--out")
        .arg(&out));
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "generation took {elapsed:?}, above the 60 s budget"
    );

    // The CLI output must equal the library's export for the same config...
    let grammar = Grammar::builtin();
    let pairs = generate_challenge_set(&grammar, &default_config(4200, 1)).unwrap();
    let expected = write_aligned_jsonl(&records_from_pairs(&pairs)).unwrap();
    let written = std::fs::read_to_string(&out).unwrap();
    assert_eq!(written, expected, "CLI and library outputs diverge");

    // ...and every pair must satisfy the alignment invariants: identical
    // questions, insertion-confined diffs, changed answers, valid offsets.
    assert_eq!(pairs.len(), 4200);
    for p in &pairs {
        validate_pair(p).unwrap();
        assert_ne!(p.baseline.answers[0].text, p.intervention.answers[0].text);
    }
    println!(
        "ACCEPTANCE criterion 1: PASS — 4200 pairs in {:.1} s, 100% of alignment invariants hold",
        elapsed.as_secs_f64()
    );
}

/// Criterion 2: an independent replay oracle recomputes every label from
/// the event stream with zero mismatches over at least 10,000 instances.
#[test]
fn criterion_2_oracle_equivalence() {
    let grammar = Grammar::builtin();
    let traced = generate_challenge_set_traced(&grammar, &default_config(5000, 2)).unwrap();
    let mut instances = 0usize;
    let mut mismatches = 0usize;
    for t in &traced {
        // Label-by-label replay, not just the bundled verifier.
        let baseline = replay_answer(&t.baseline_world, &t.question).unwrap();
        if baseline != t.pair.baseline.answers[0].text {
            mismatches += 1;
        }
        instances += 1;
        let intervention = replay_answer(&t.intervention_world, &t.question).unwrap();
        if intervention != t.pair.intervention.answers[0].text {
            mismatches += 1;
        }
        instances += 1;
        if let Some(spm) = &t.pair.spm {
            let replayed = replay_answer(&t.baseline_world, &t.question).unwrap();
            if replayed != spm.answers[0].text {
                mismatches += 1;
            }
            instances += 1;
        }
        verify_traced(t).unwrap();
    }
    assert!(
        instances >= 10_000,
        "only {instances} instances generated; criterion needs 10,000"
    );
    assert_eq!(mismatches, 0);
    println!(
        "ACCEPTANCE criterion 2: PASS — {instances} instances replayed with 0 mismatches"
    );
}

/// Criterion 3: every SPM label equals its baseline label.
#[test]
fn criterion_3_spm_neutrality() {
    let grammar = Grammar::builtin();
    let traced = generate_challenge_set_traced(&grammar, &default_config(2000, 3)).unwrap();
    let mut spm_count = 0usize;
    for t in &traced {
        if let Some(spm) = &t.pair.spm {
            spm_count += 1;
            assert_eq!(
                spm.answers[0].text, t.pair.baseline.answers[0].text,
                "{}: SPM label drifted",
                t.pair.pair_id
            );
        }
    }
    assert!(spm_count > 0, "no SPM instances were generated");
    println!(
        "ACCEPTANCE criterion 3: PASS — {spm_count}/{} pairs carry an SPM instance, 100% label-neutral",
        traced.len()
    );
}

fn synthetic_pairs(n: usize) -> Vec<GoldPair> {
    (0..n)
        .map(|i| GoldPair {
            pair_id: format!("p{i:04}"),
            baseline: GoldInstance {
                instance_id: format!("p{i:04}-baseline"),
                answers: vec![format!("base {i}")],
            },
            intervention: GoldInstance {
                instance_id: format!("p{i:04}-intervention"),
                answers: vec![format!("shift {i}")],
            },
            spm: None,
        })
        .collect()
}

/// Cheap standalone generator so the counting oracle shares no randomness
/// machinery with the crate under test.
struct Lcg(u64);

impl Lcg {
    fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Criterion 4: consistency and DICE equal a naive counting oracle on 1000
/// randomized prediction sets, including the undefined-DICE guard and the
/// dice*|B+| = joint*|N| identity.
#[test]
fn criterion_4_metric_correctness() {
    let pairs = synthetic_pairs(41);
    let n = pairs.len();
    let mut undefined_seen = 0usize;
    for trial in 0..1000u64 {
        let mut rng = Lcg(trial.wrapping_mul(2654435761).wrapping_add(17));
        // Some trials get everything wrong so the undefined guard fires.
        let b_prob = if trial % 97 == 0 { 0.0 } else { 0.1 + 0.8 * rng.next_f64() };
        let i_prob = 0.1 + 0.8 * rng.next_f64();
        let mut answers = std::collections::BTreeMap::new();
        let mut b_count = 0usize;
        let mut i_count = 0usize;
        let mut joint_count = 0usize;
        for p in &pairs {
            let b_ok = rng.next_f64() < b_prob;
            let i_ok = rng.next_f64() < i_prob;
            b_count += b_ok as usize;
            i_count += i_ok as usize;
            joint_count += (b_ok && i_ok) as usize;
            answers.insert(
                p.baseline.instance_id.clone(),
                if b_ok { p.baseline.answers[0].clone() } else { "no".into() },
            );
            answers.insert(
                p.intervention.instance_id.clone(),
                if i_ok { p.intervention.answers[0].clone() } else { "no".into() },
            );
        }
        let preds = PredictionSet::new(answers, "synthetic");

        let c = consistency(&pairs, &preds, CorrectnessRule::ExactMatch).unwrap();
        assert_eq!(c, joint_count as f64 / n as f64, "trial {trial}");
        let _ = i_count;

        match dice(&pairs, &preds, CorrectnessRule::ExactMatch) {
            Ok(d) => {
                assert!(b_count > 0, "trial {trial}: dice defined with |B+| = 0");
                assert_eq!(d, joint_count as f64 / b_count as f64, "trial {trial}");
                // Integer count identity, exact.
                assert_eq!((d * b_count as f64).round() as usize, joint_count);
                assert_eq!((c * n as f64).round() as usize, joint_count);
            }
            Err(_) => {
                assert_eq!(b_count, 0, "trial {trial}: undefined with |B+| > 0");
                undefined_seen += 1;
            }
        }
    }
    assert!(undefined_seen > 0, "the undefined-DICE guard never fired");
    println!(
        "ACCEPTANCE criterion 4: PASS — 1000 prediction sets match the counting oracle exactly ({undefined_seen} undefined-DICE cases)"
    );
}

fn score_via_cli(dir: &tempfile::TempDir, pairs: &Path, mode: &str) -> serde_json::Value {
    let preds = tmp(dir, &format!("{mode}.preds.json"));
    let report = tmp(dir, &format!("{mode}.report.json"));
    run(samforge()
        .arg("oracle-run")
        .arg("--pairs")
        .arg(pairs)
        .args(["--mode", mode])
        .arg("--out")
        .arg(&preds));
    run(samforge()
        .arg("score")
        .arg("--pairs")
        .arg(pairs)
        .arg("--preds")
        .arg(&preds)
        .args(["--alpha", "0.05"])
        .arg("--out")
        .arg(&report));
    serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap()
}

/// Criterion 5: the perfect predictor scores consistency = DICE = 1 and the
/// SAM-blind predictor scores acc_baseline = 1 with DICE = 0.
#[test]
fn criterion_5_reference_predictors() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = tmp(&dir, "set.jsonl");
    run(samforge()
        .arg("generate")
        .args(["--seed", "5", "--pairs", "300"])
        .arg("--out")
        .arg(&pairs));

    let perfect = score_via_cli(&dir, &pairs, "perfect");
    assert_eq!(perfect["joint"], 1.0);
    assert_eq!(perfect["dice"], 1.0);

    let blind = score_via_cli(&dir, &pairs, "sam-blind");
    assert_eq!(blind["acc_baseline"], 1.0);
    assert_eq!(blind["dice"], 0.0);
    println!(
        "ACCEPTANCE criterion 5: PASS — perfect: consistency = DICE = 1.0; sam-blind: acc_baseline = 1.0, DICE = 0.0"
    );
}

/// Criterion 6: the normal-approximation half-width reproduces the reported
/// one-point margin at 0.92 over 4200 pairs.
#[test]
fn criterion_6_confidence_interval() {
    let hw = binomial_ci_halfwidth(0.92, 4200, 0.05).unwrap();
    assert!(
        (hw - 0.0082).abs() <= 1e-4,
        "halfwidth {hw} not within 1e-4 of 0.0082"
    );
    println!(
        "ACCEPTANCE criterion 6: PASS — ci_halfwidth(0.92, 4200, 0.05) = {hw:.6} (0.0082 ± 1e-4)"
    );
}

/// Criterion 7: quality indices on a generated 1000-passage corpus fall in
/// the documented ranges, rerun bit-identically, and survive the external
/// corpus format round trip unchanged.
#[test]
fn criterion_7_quality_indices() {
    let grammar = Grammar::builtin();
    let pairs = generate_challenge_set(&grammar, &default_config(1000, 7)).unwrap();
    let corpus = corpus_from_pairs(&pairs, Variant::Baseline);
    assert_eq!(corpus.passages.len(), 1000);
    let report = quality_report(&corpus, &QualityOptions::default()).unwrap();

    assert!(
        (0.52..=0.92).contains(&report.m2_type_token_ratio),
        "m2 = {}",
        report.m2_type_token_ratio
    );
    assert!(
        (0.05..=0.45).contains(&report.lexical_diversity_jaccard),
        "jaccard = {}",
        report.lexical_diversity_jaccard
    );
    assert!(
        (0.0..=0.2).contains(&report.m4_pronoun_noun_ratio),
        "m4 = {}",
        report.m4_pronoun_noun_ratio
    );

    // Bit-identical across a full regeneration with the same seed.
    let pairs2 = generate_challenge_set(&grammar, &default_config(1000, 7)).unwrap();
    let report2 =
        quality_report(&corpus_from_pairs(&pairs2, Variant::Baseline), &QualityOptions::default())
            .unwrap();
    for (a, b) in [
        (report.m1_adjacent_sentence_similarity, report2.m1_adjacent_sentence_similarity),
        (report.m2_type_token_ratio, report2.m2_type_token_ratio),
        (report.m3_adjacent_verb_overlap, report2.m3_adjacent_verb_overlap),
        (report.m4_pronoun_noun_ratio, report2.m4_pronoun_noun_ratio),
        (report.lexical_diversity_jaccard, report2.lexical_diversity_jaccard),
    ] {
        assert_eq!(a.to_bits(), b.to_bits(), "index not bit-identical across reruns");
    }

    // External-corpus comparison path: round-trip through the file format
    // and recompute identical indices.
    let serialized = samforge_core::formats::write_corpus_jsonl(&corpus).unwrap();
    let reread = samforge_core::formats::read_corpus_jsonl(&serialized, "mem").unwrap();
    let report3 = quality_report(&reread, &QualityOptions::default()).unwrap();
    assert_eq!(
        report.m2_type_token_ratio.to_bits(),
        report3.m2_type_token_ratio.to_bits()
    );
    assert_eq!(
        report.lexical_diversity_jaccard.to_bits(),
        report3.lexical_diversity_jaccard.to_bits()
    );
    println!(
        "ACCEPTANCE criterion 7: PASS — m2 = {:.4} in [0.52, 0.92], jaccard = {:.4} in [0.05, 0.45], m4 = {:.4} in [0.0, 0.2]; bit-identical reruns and format round trip",
        report.m2_type_token_ratio, report.lexical_diversity_jaccard, report.m4_pronoun_noun_ratio
    );
}

/// Criterion 8: byte-identical regeneration and prefix stability under a
/// grown pair count.
#[test]
fn criterion_8_determinism_and_seed_isolation() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = tmp(&dir, "a.jsonl");
    let out_b = tmp(&dir, "b.jsonl");
    for out in [&out_a, &out_b] {
        run(samforge()
            .arg("generate")
            .args(["--seed", "11", "--pairs", "120"])
            .arg("--out")
            .arg(out));
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b, "same seed produced different files");

    let grammar = Grammar::builtin();
    let short = generate_challenge_set(&grammar, &default_config(120, 11)).unwrap();
    let long = generate_challenge_set(&grammar, &default_config(180, 11)).unwrap();
    assert_eq!(short[..], long[..120], "growing n_pairs disturbed the prefix");
    println!(
        "ACCEPTANCE criterion 8: PASS — byte-identical regeneration; first 120 of 180 pairs identical"
    );
}

/// Criterion 9: the fine-tuned-model numbers are not reproducible at desk
/// scale; the artifact instead produces the exact training files those
/// experiments need. Split soundness and mixing manifests are checked here.
#[test]
fn criterion_9_training_file_machinery() {
    let grammar = Grammar::builtin();
    let pairs = generate_challenge_set(&grammar, &default_config(400, 9)).unwrap();
    let grouped = group_records(records_from_pairs(&pairs)).unwrap();

    // #-sam split: one SAM for augmentation, two and three for evaluation.
    let policy = SplitPolicy::new(
        SplitAxis::NumSamHoldout,
        vec!["1".into()],
        vec!["2".into(), "3".into()],
    )
    .unwrap();
    let outcome = make_holdout_split(&grouped, &policy).unwrap();
    assert!(outcome.augmentation.iter().all(|p| p.intervention.num_sam == 1));
    assert!(outcome
        .evaluation
        .iter()
        .all(|p| [2, 3].contains(&p.intervention.num_sam)));
    assert_eq!(outcome.dropped, 0);

    // Mixing: the intervention-only condition with a complete manifest and
    // an untouched base file.
    let mut base = samforge_core::formats::SquadFile::empty();
    base.data.push(samforge_core::formats::SquadArticle {
        title: "base-0".into(),
        paragraphs: vec![samforge_core::formats::SquadParagraph {
            context: "Base context.".into(),
            qas: vec![],
        }],
    });
    let take = 100;
    let mixed = mix_augmentation(
        &base,
        &outcome.augmentation,
        take,
        MixFractions { baseline: 0.0, intervention: 1.0 },
        13,
    )
    .unwrap();
    assert_eq!(mixed.merged.data.len(), base.data.len() + take);
    assert_eq!(mixed.manifest.len(), take);
    assert!(mixed.manifest.iter().all(|m| m.variant == Variant::Intervention));
    for entry in &mixed.manifest {
        assert_eq!(mixed.merged.data[entry.inserted_at].title, entry.instance_id);
        assert!(outcome.augmentation.iter().any(|p| p.pair_id == entry.pair_id));
    }
    assert!(mixed.merged.data.iter().any(|a| a.title == "base-0"));

    // The +B+I condition: half baseline, half intervention.
    let both = mix_augmentation(
        &base,
        &outcome.augmentation,
        60,
        MixFractions { baseline: 0.5, intervention: 0.5 },
        13,
    )
    .unwrap();
    let baselines = both
        .manifest
        .iter()
        .filter(|m| m.variant == Variant::Baseline)
        .count();
    assert_eq!(baselines, 30);

    println!(
        "ACCEPTANCE criterion 9: PASS — fine-tuned-model scores are out of desk scope; split soundness and mixing manifests verified on the substitute machinery"
    );
}

/// The replay oracle itself is exercised against a hand-built stream, so the
/// acceptance suite does not rely solely on generated data.
#[test]
fn replay_oracle_spot_check() {
    use samforge_core::modify::Modification;
    use samforge_core::world::{
        Event, EventId, EventKind, MatchWorld, Player, PlayerId, Pronoun, Quantity, Unit,
    };
    let _ = Modification::spm("almost");
    let world = MatchWorld {
        match_id: "m".into(),
        teams: ["A".into(), "B".into()],
        players: vec![
            Player { name: "Smith".into(), team: 0, pronoun: Pronoun::He },
            Player { name: "Jones".into(), team: 1, pronoun: Pronoun::She },
        ],
        events: vec![
            Event {
                id: EventId(0),
                kind: EventKind::FieldGoal,
                agent: PlayerId(0),
                quantity: Some(Quantity { value: 25, unit: Unit::Yards }),
                minute: 5,
                polarity: true,
                applied_modifications: vec![],
            },
            Event {
                id: EventId(1),
                kind: EventKind::FieldGoal,
                agent: PlayerId(1),
                quantity: Some(Quantity { value: 40, unit: Unit::Yards }),
                minute: 30,
                polarity: true,
                applied_modifications: vec![],
            },
        ],
    };
    let q = Question {
        instance_id: String::new(),
        qtype: QType::ArgmaxDistance,
        focus: QuestionFocus::Kind { kind: EventKind::FieldGoal },
    };
    assert_eq!(replay_answer(&world, &q).unwrap(), "Jones");
    let mut negated = world.clone();
    negated.events[1].polarity = false;
    assert_eq!(replay_answer(&negated, &q).unwrap(), "Smith");
}
