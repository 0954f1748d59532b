//! Independent verification of generated pairs.
//!
//! `replay_answer` recomputes expected answers from the event stream with
//! plain scans, sharing no code with the generation-side oracle, so label
//! verification does not trust the path that produced the labels.
//! `validate_pair` checks the alignment invariants of a finished pair, and
//! `verify_traced` replays a pair's modifications against its recorded
//! worlds.

use crate::error::{Error, Result};
use crate::modify::{AlignedPair, Instance, SamCategory, TracedPair, Variant};
use crate::realize::slice_chars;
use crate::world::{MatchWorld, QType, Question, QuestionFocus};

/// Brute-force recomputation of the expected answer text from the event
/// stream. Returns `None` when no successful event matches.
pub fn replay_answer(world: &MatchWorld, question: &Question) -> Option<String> {
    match (&question.qtype, &question.focus) {
        (QType::ArgmaxDistance, QuestionFocus::Kind { kind }) => {
            let mut best: Option<(u32, &str)> = None;
            for e in &world.events {
                if !e.polarity || e.kind != *kind {
                    continue;
                }
                if let Some(q) = e.quantity {
                    let name = world.player(e.agent).name.as_str();
                    best = match best {
                        Some((v, _)) if v >= q.value => best,
                        _ => Some((q.value, name)),
                    };
                }
            }
            best.map(|(_, name)| name.to_string())
        }
        (QType::ArgminDistance, QuestionFocus::Kind { kind }) => {
            let mut best: Option<(u32, &str)> = None;
            for e in &world.events {
                if !e.polarity || e.kind != *kind {
                    continue;
                }
                if let Some(q) = e.quantity {
                    let name = world.player(e.agent).name.as_str();
                    best = match best {
                        Some((v, _)) if v <= q.value => best,
                        _ => Some((q.value, name)),
                    };
                }
            }
            best.map(|(_, name)| name.to_string())
        }
        (QType::FirstScorer, QuestionFocus::Match) => {
            let mut best: Option<(u32, &str)> = None;
            for e in &world.events {
                if e.polarity && e.kind.is_scoring() {
                    let name = world.player(e.agent).name.as_str();
                    best = match best {
                        Some((m, _)) if m <= e.minute => best,
                        _ => Some((e.minute, name)),
                    };
                }
            }
            best.map(|(_, name)| name.to_string())
        }
        (QType::LastScorer, QuestionFocus::Match) => {
            let mut best: Option<(u32, &str)> = None;
            for e in &world.events {
                if e.polarity && e.kind.is_scoring() {
                    let name = world.player(e.agent).name.as_str();
                    best = match best {
                        Some((m, _)) if m >= e.minute => best,
                        _ => Some((e.minute, name)),
                    };
                }
            }
            best.map(|(_, name)| name.to_string())
        }
        (QType::DistanceOfNamedEvent, QuestionFocus::PlayerKind { player, kind, .. }) => {
            for e in &world.events {
                if e.polarity && e.kind == *kind && world.player(e.agent).name == *player {
                    return e.quantity.map(|q| format!("{} {}", q.value, q.unit.plural()));
                }
            }
            None
        }
        (QType::AgentOfOrdinalEvent, QuestionFocus::OrdinalKind { ordinal, kind }) => {
            let mut seen = 0u32;
            for e in &world.events {
                if e.polarity && e.kind == *kind {
                    seen += 1;
                    if seen == *ordinal {
                        return Some(world.player(e.agent).name.clone());
                    }
                }
            }
            None
        }
        _ => None,
    }
}

fn check_instance_offsets(inst: &Instance) -> Result<()> {
    for a in &inst.answers {
        let span = crate::realize::Span::new(a.start, a.start + a.text.chars().count());
        let got = slice_chars(&inst.passage.text, span);
        if got != a.text {
            return Err(Error::Consistency(format!(
                "{}: answer '{}' not at offset {} (found '{got}')",
                inst.instance_id, a.text, a.start
            )));
        }
    }
    Ok(())
}

fn sentence_words(inst: &Instance, idx: usize) -> Vec<String> {
    let span = inst.passage.sentences[idx].span;
    slice_chars(&inst.passage.text, span)
        .split_whitespace()
        .map(|w| w.to_string())
        .collect()
}

/// Is `a` a subsequence of `b`? Insertion-only diffs satisfy this.
fn is_subsequence(a: &[String], b: &[String]) -> bool {
    let mut it = b.iter();
    a.iter().all(|x| it.any(|y| y == x))
}

/// Tokens of `a` minus the longest common prefix and suffix against `b`.
fn diff_core_len(a: &[String], b: &[String]) -> usize {
    let mut prefix = 0;
    while prefix < a.len() && prefix < b.len() && a[prefix] == b[prefix] {
        prefix += 1;
    }
    let mut suffix = 0;
    while suffix < a.len() - prefix && suffix < b.len() - prefix
        && a[a.len() - 1 - suffix] == b[b.len() - 1 - suffix]
    {
        suffix += 1;
    }
    a.len() - prefix - suffix
}

/// Check every alignment invariant of a finished pair: shared question,
/// valid answer offsets, changed intervention answer, modification-confined
/// diffs, and SPM neutrality.
pub fn validate_pair(pair: &AlignedPair) -> Result<()> {
    let b = &pair.baseline;
    let i = &pair.intervention;

    if b.question_text != i.question_text {
        return Err(Error::Consistency(format!(
            "{}: baseline and intervention questions differ",
            pair.pair_id
        )));
    }
    if let Some(spm) = &pair.spm {
        if spm.question_text != b.question_text {
            return Err(Error::Consistency(format!(
                "{}: SPM question differs",
                pair.pair_id
            )));
        }
    }

    if b.meta.variant != Variant::Baseline || b.meta.num_sam != 0 || !b.meta.applied_sams.is_empty()
    {
        return Err(Error::Consistency(format!(
            "{}: baseline metadata carries modifications",
            pair.pair_id
        )));
    }

    for inst in pair.instances() {
        check_instance_offsets(inst)?;
        inst.passage.validate()?;
    }

    if b.answers[0].text == i.answers[0].text {
        return Err(Error::Consistency(format!(
            "{}: intervention answer equals the baseline answer",
            pair.pair_id
        )));
    }

    // Diff confinement: unmodified sentences are byte-identical; modified
    // sentences differ by pure insertion for adverbial modifiers and
    // `never`, and only within the verb region otherwise.
    if b.passage.sentences.len() != i.passage.sentences.len() {
        return Err(Error::Consistency(format!(
            "{}: sentence counts differ",
            pair.pair_id
        )));
    }
    let modified: Vec<_> = i.meta.applied_sams.iter().map(|a| a.event).collect();
    if modified.len() != i.meta.num_sam as usize {
        return Err(Error::Consistency(format!(
            "{}: num_sam does not match the applied list",
            pair.pair_id
        )));
    }
    let mut differing = 0usize;
    for idx in 0..b.passage.sentences.len() {
        let event = b.passage.sentences[idx].event;
        let bw = sentence_words(b, idx);
        let iw = sentence_words(i, idx);
        let is_modified = event.map(|e| modified.contains(&e)).unwrap_or(false);
        if !is_modified {
            if bw != iw {
                return Err(Error::Consistency(format!(
                    "{}: unmodified sentence {idx} changed",
                    pair.pair_id
                )));
            }
            continue;
        }
        if bw != iw {
            differing += 1;
        }
        let record = i
            .meta
            .applied_sams
            .iter()
            .find(|a| Some(a.event) == event)
            .expect("is_modified implies a record");
        let insertion_only = matches!(record.category, SamCategory::AdverbialModifier)
            || record.lexeme == "never";
        if insertion_only {
            if !is_subsequence(&bw, &iw) {
                return Err(Error::Consistency(format!(
                    "{}: sentence {idx} diff is not insertion-only",
                    pair.pair_id
                )));
            }
        } else if diff_core_len(&bw, &iw) > 1 {
            return Err(Error::Consistency(format!(
                "{}: sentence {idx} rewrites more than the verb region",
                pair.pair_id
            )));
        }
    }
    if differing != i.meta.num_sam as usize {
        return Err(Error::Consistency(format!(
            "{}: {} sentences differ but num_sam = {}",
            pair.pair_id, differing, i.meta.num_sam
        )));
    }

    // SPM: same label as baseline, insertion-only diff against the baseline
    // passage.
    if let Some(spm) = &pair.spm {
        if spm.answers[0].text != b.answers[0].text {
            return Err(Error::Consistency(format!(
                "{}: SPM label differs from the baseline label",
                pair.pair_id
            )));
        }
        if spm.passage.sentences.len() != b.passage.sentences.len() {
            return Err(Error::Consistency(format!(
                "{}: SPM sentence count differs",
                pair.pair_id
            )));
        }
        let mut spm_differing = 0usize;
        for idx in 0..b.passage.sentences.len() {
            let bw = sentence_words(b, idx);
            let sw = sentence_words(spm, idx);
            if bw != sw {
                spm_differing += 1;
                if !is_subsequence(&bw, &sw) {
                    return Err(Error::Consistency(format!(
                        "{}: SPM sentence {idx} diff is not insertion-only",
                        pair.pair_id
                    )));
                }
            }
        }
        if spm_differing != 1 {
            return Err(Error::Consistency(format!(
                "{}: SPM modifies {spm_differing} sentences",
                pair.pair_id
            )));
        }
    }

    Ok(())
}

/// Replay a traced pair against its recorded worlds: labels must match the
/// brute-force recomputation, the recorded SAM applications must explain
/// exactly the polarity flips, and undoing the answer-critical SAM must
/// restore the baseline answer.
pub fn verify_traced(traced: &TracedPair) -> Result<()> {
    validate_pair(&traced.pair)?;
    let q = &traced.question;

    let baseline_label = &traced.pair.baseline.answers[0].text;
    let replayed = replay_answer(&traced.baseline_world, q)
        .ok_or_else(|| Error::Consistency("baseline unanswerable on replay".into()))?;
    if replayed != *baseline_label {
        return Err(Error::Consistency(format!(
            "{}: baseline label '{baseline_label}' but replay found '{replayed}'",
            traced.pair.pair_id
        )));
    }

    let intervention_label = &traced.pair.intervention.answers[0].text;
    let replayed = replay_answer(&traced.intervention_world, q)
        .ok_or_else(|| Error::Consistency("intervention unanswerable on replay".into()))?;
    if replayed != *intervention_label {
        return Err(Error::Consistency(format!(
            "{}: intervention label '{intervention_label}' but replay found '{replayed}'",
            traced.pair.pair_id
        )));
    }

    if let Some(spm) = &traced.pair.spm {
        // SPM instances never touch the world; their label must replay on
        // the unmodified event stream.
        let replayed = replay_answer(&traced.baseline_world, q)
            .ok_or_else(|| Error::Consistency("SPM unanswerable on replay".into()))?;
        if replayed != spm.answers[0].text {
            return Err(Error::Consistency(format!(
                "{}: SPM label fails replay",
                traced.pair.pair_id
            )));
        }
    }

    // Flips recorded in metadata are exactly the flips in the world.
    let flipped: Vec<_> = traced
        .intervention_world
        .events
        .iter()
        .filter(|e| !e.polarity)
        .map(|e| e.id)
        .collect();
    let mut recorded: Vec<_> = traced
        .pair
        .intervention
        .meta
        .applied_sams
        .iter()
        .map(|a| a.event)
        .collect();
    recorded.sort();
    if flipped != recorded {
        return Err(Error::Consistency(format!(
            "{}: polarity flips do not match the applied records",
            traced.pair.pair_id
        )));
    }
    if !recorded.contains(&traced.critical_event) {
        return Err(Error::Consistency(format!(
            "{}: the critical event was never modified",
            traced.pair.pair_id
        )));
    }

    // SAM necessity: restoring the critical event's polarity brings the
    // baseline answer back.
    let mut undone = traced.intervention_world.clone();
    undone.event_mut(traced.critical_event).polarity = true;
    let restored = replay_answer(&undone, q)
        .ok_or_else(|| Error::Consistency("undo left the question unanswerable".into()))?;
    if restored != *baseline_label {
        return Err(Error::Consistency(format!(
            "{}: undoing the critical SAM gives '{restored}', not the baseline '{baseline_label}'",
            traced.pair.pair_id
        )));
    }

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Grammar;
    use crate::pipeline::{generate_challenge_set_traced, GenerationConfig};

    #[test]
    fn generated_pairs_survive_replay_verification() {
        let grammar = Grammar::builtin();
        let cfg = GenerationConfig {
            master_seed: 41,
            n_pairs: 25,
            ..GenerationConfig::default()
        };
        let traced = generate_challenge_set_traced(&grammar, &cfg).unwrap();
        for t in &traced {
            verify_traced(t).unwrap();
        }
    }

    #[test]
    fn tampered_labels_fail_replay() {
        let grammar = Grammar::builtin();
        let cfg = GenerationConfig {
            master_seed: 43,
            n_pairs: 1,
            ..GenerationConfig::default()
        };
        let mut traced = generate_challenge_set_traced(&grammar, &cfg).unwrap();
        let t = &mut traced[0];
        t.pair.baseline.answers[0].text = "Nobody".into();
        t.pair.baseline.answers[0].start = 0;
        assert!(verify_traced(t).is_err());
    }
}
