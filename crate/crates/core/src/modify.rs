//! Semantics-altering (SAM) and semantics-preserving (SPM) modifications,
//! and the assembly of aligned baseline/intervention instance pairs.
//!
//! A SAM attaches in front of the verb phrase and negates it: the event's
//! polarity flips, the oracle stops seeing it, and the expected answer
//! changes. The same lexeme attached in front of a numeral instead scopes
//! over the quantity and leaves the answer untouched; that is the SPM
//! control condition.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{Grammar, Lexicon, Partition, PosTag, SlotKind};
use crate::realize::{
    locate_answer, realize_passage, realize_question, RealizeOptions, RealizedPassage, Span,
};
use crate::seed;
use crate::world::{
    oracle_answer, simulate_match, Answer, EventId, EventKind, MatchWorld, QType, Question,
    QuestionFocus, SimConfig, Unit, WorldRequirement,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamCategory {
    AdverbialModifier,
    ExplicitNegation,
    ImplicitNegationVerb,
    ModalIntent,
}

impl SamCategory {
    pub const ALL: [SamCategory; 4] = [
        SamCategory::AdverbialModifier,
        SamCategory::ExplicitNegation,
        SamCategory::ImplicitNegationVerb,
        SamCategory::ModalIntent,
    ];

    pub fn key(self) -> &'static str {
        match self {
            SamCategory::AdverbialModifier => "adverbial-modifier",
            SamCategory::ExplicitNegation => "explicit-negation",
            SamCategory::ImplicitNegationVerb => "implicit-negation-verb",
            SamCategory::ModalIntent => "modal-intent",
        }
    }

    pub fn parse(s: &str) -> Result<SamCategory> {
        SamCategory::ALL
            .into_iter()
            .find(|c| c.key() == s)
            .ok_or_else(|| Error::Config(format!("unknown SAM category '{s}'")))
    }

    /// Lexicon classes whose entries realize this category. The class suffix
    /// encodes how the verb phrase is rewritten.
    fn classes(self) -> &'static [&'static str] {
        match self {
            SamCategory::AdverbialModifier => &["sam-adverbial"],
            SamCategory::ExplicitNegation => {
                &["sam-explicit-negation-base", "sam-explicit-negation-past"]
            }
            SamCategory::ImplicitNegationVerb => {
                &["sam-implicit-negation-replace", "sam-implicit-negation-base"]
            }
            SamCategory::ModalIntent => &["sam-modal-intent-base"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attachment {
    PreVerb,
    PreNumeral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModSemantics {
    Altering,
    Preserving,
}

/// One concrete modification. Pre-verb attachment always alters (the
/// modifier scopes over the verb phrase); pre-numeral attachment always
/// preserves and is restricted to adverbial modifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modification {
    pub category: SamCategory,
    pub lexeme: String,
    pub attachment: Attachment,
    pub semantics: ModSemantics,
}

impl Modification {
    pub fn sam(category: SamCategory, lexeme: impl Into<String>) -> Modification {
        Modification {
            category,
            lexeme: lexeme.into(),
            attachment: Attachment::PreVerb,
            semantics: ModSemantics::Altering,
        }
    }

    pub fn spm(lexeme: impl Into<String>) -> Modification {
        Modification {
            category: SamCategory::AdverbialModifier,
            lexeme: lexeme.into(),
            attachment: Attachment::PreNumeral,
            semantics: ModSemantics::Preserving,
        }
    }
}

/// How the verb region is rewritten for one lexeme.
enum VerbRewrite {
    /// `lexeme verb` — pure insertion in front of the inflected verb.
    InsertBeforePast,
    /// `lexeme base` — lexeme followed by the verb's base form.
    WithBaseForm,
    /// `lexeme` — the lexeme replaces the verb outright.
    Replace,
}

fn rewrite_for_class(class: &str) -> VerbRewrite {
    if class.ends_with("-replace") {
        VerbRewrite::Replace
    } else if class.ends_with("-base") {
        VerbRewrite::WithBaseForm
    } else {
        VerbRewrite::InsertBeforePast
    }
}

/// Tag the words of a (possibly multi-word) lexeme from the lexicon.
fn lexeme_tokens(
    lexicon: &Lexicon,
    lexeme: &str,
    event: EventId,
) -> Result<Vec<(String, PosTag, String)>> {
    lexeme
        .split_whitespace()
        .map(|w| {
            let e = lexicon.lookup(w).ok_or_else(|| {
                Error::Config(format!(
                    "lexeme word '{w}' missing from lexicon (event {event})"
                ))
            })?;
            Ok((w.to_string(), e.pos, e.lemma.clone()))
        })
        .collect()
}

fn splice_words(
    passage: &mut RealizedPassage,
    at: Span,
    words: Vec<(String, PosTag, String)>,
    event: EventId,
) -> Result<()> {
    let mut text = String::new();
    let mut tokens = Vec::new();
    let mut cursor = 0usize;
    for (surface, pos, lemma) in words {
        if !text.is_empty() {
            text.push(' ');
            cursor += 1;
        }
        let start = cursor;
        cursor += surface.chars().count();
        text.push_str(&surface);
        tokens.push((Span::new(start, cursor), pos, lemma, Some(event)));
    }
    passage.splice(at, &text, tokens)
}

/// Apply one semantics-altering modification to `target_event`. Returns the
/// modified world (polarity flipped, modification recorded) and the modified
/// passage with every downstream span shifted consistently.
pub fn apply_sam(
    world: &MatchWorld,
    passage: &RealizedPassage,
    target_event: EventId,
    category: SamCategory,
    lexicon: &Lexicon,
    seed: u64,
) -> Result<(MatchWorld, RealizedPassage)> {
    let event = world.event(target_event);
    if !event.polarity || !event.applied_modifications.is_empty() {
        return Err(Error::DoubleModification(target_event.0));
    }

    let mut candidates: Vec<(&str, String, &str)> = Vec::new();
    for class in category.classes() {
        for entry in lexicon.class(class) {
            candidates.push((class, entry.surface.clone(), entry.lemma.as_str()));
        }
    }
    if candidates.is_empty() {
        return Err(Error::Config(format!(
            "no lexicon entries for SAM category {}",
            category.key()
        )));
    }
    let mut rng = seed::rng(seed);
    let (class, lexeme, _) = candidates[rng.random_range(0..candidates.len())].clone();

    let verb_span = passage
        .slot_span(target_event, SlotKind::Verb)
        .ok_or_else(|| {
            Error::Consistency(format!("event {target_event} has no verb slot in the passage"))
        })?;
    let verb_token = passage
        .tokens
        .iter()
        .find(|t| t.span == verb_span && t.pos == PosTag::Verb)
        .ok_or_else(|| Error::Consistency("verb slot does not align with a token".into()))?;
    let verb_surface = passage.slice(verb_span).to_string();
    let verb_base = verb_token.lemma.clone();

    let mut words = lexeme_tokens(lexicon, &lexeme, target_event)?;
    match rewrite_for_class(class) {
        VerbRewrite::InsertBeforePast => {
            words.push((verb_surface, PosTag::Verb, verb_base));
        }
        VerbRewrite::WithBaseForm => {
            words.push((verb_base.clone(), PosTag::Verb, verb_base));
        }
        VerbRewrite::Replace => {}
    }

    let mut new_passage = passage.clone();
    splice_words(&mut new_passage, verb_span, words, target_event)?;
    new_passage.validate()?;

    let mut new_world = world.clone();
    {
        let e = new_world.event_mut(target_event);
        e.polarity = false;
        e.applied_modifications
            .push(Modification::sam(category, lexeme));
    }
    Ok((new_world, new_passage))
}

/// Insert `lexeme` immediately before the numeral of the target sentence's
/// quantity slot. The world is untouched, so the oracle answer provably
/// cannot change.
pub fn apply_spm(
    passage: &RealizedPassage,
    target_event: EventId,
    lexeme: &str,
    lexicon: &Lexicon,
) -> Result<RealizedPassage> {
    let adverbials = lexicon.class("sam-adverbial");
    if !adverbials.iter().any(|e| e.surface == lexeme) {
        return Err(Error::Config(format!(
            "'{lexeme}' is not an adverbial-modifier lexeme"
        )));
    }
    let quantity = passage
        .slot_span(target_event, SlotKind::Quantity)
        .ok_or_else(|| {
            Error::NotApplicable(format!(
                "sentence of event {target_event} has no quantity slot"
            ))
        })?;

    let words = lexeme_tokens(lexicon, lexeme, target_event)?;
    // Splice "<lexeme> " over a zero-width range at the numeral start.
    let mut new_passage = passage.clone();
    let insert_at = Span::new(quantity.start, quantity.start);
    let mut text = String::new();
    let mut tokens = Vec::new();
    let mut cursor = 0usize;
    for (surface, pos, lemma) in words {
        let start = cursor;
        cursor += surface.chars().count();
        text.push_str(&surface);
        text.push(' ');
        tokens.push((Span::new(start, cursor), pos, lemma, Some(target_event)));
        cursor += 1;
    }
    new_passage.splice(insert_at, &text, tokens)?;
    new_passage.validate()?;
    Ok(new_passage)
}

// ---------------------------------------------------------------------------
// Instances and aligned pairs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Baseline,
    Intervention,
    Spm,
}

impl Variant {
    pub fn key(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Intervention => "intervention",
            Variant::Spm => "spm",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "intervention" => Ok(Variant::Intervention),
            "spm" => Ok(Variant::Spm),
            _ => Err(Error::Config(format!("unknown variant '{s}'"))),
        }
    }
}

/// One SAM application, kept in instance metadata so an independent pass can
/// replay the modifications.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedSamRecord {
    pub event: EventId,
    pub category: SamCategory,
    pub lexeme: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub qtype: QType,
    pub variant: Variant,
    pub partition: Partition,
    pub num_sam: u32,
    pub applied_sams: Vec<AppliedSamRecord>,
    pub template_ids: Vec<String>,
}

impl InstanceMeta {
    pub fn sam_categories(&self) -> Vec<SamCategory> {
        self.applied_sams.iter().map(|a| a.category).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub text: String,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub question_text: String,
    pub passage: RealizedPassage,
    pub answers: Vec<AnswerSpan>,
    pub meta: InstanceMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub pair_id: String,
    pub baseline: Instance,
    pub intervention: Instance,
    pub spm: Option<Instance>,
}

impl AlignedPair {
    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        [Some(&self.baseline), Some(&self.intervention), self.spm.as_ref()]
            .into_iter()
            .flatten()
    }
}

/// A pair plus the ground truth it was built from, for replay verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracedPair {
    pub pair: AlignedPair,
    pub question: Question,
    pub baseline_world: MatchWorld,
    pub intervention_world: MatchWorld,
    pub critical_event: EventId,
}

/// What kind of pair to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRequest {
    pub qtype: QType,
    pub num_sam: u32,
    pub categories: Vec<SamCategory>,
    pub partition: Partition,
    pub spm_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub sim: SimConfig,
    pub pronoun_prob: f64,
    pub filler_prob: f64,
    /// Resampling bound per pair before failing loudly.
    pub max_attempts: u32,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            sim: SimConfig::default(),
            pronoun_prob: 0.85,
            filler_prob: 0.0,
            max_attempts: 100,
        }
    }
}

/// Pick the world requirement and (partially) the focus for a question plan.
fn plan_question<R: Rng>(rng: &mut R, qtype: QType) -> (WorldRequirement, Option<QuestionFocus>) {
    match qtype {
        QType::ArgmaxDistance | QType::ArgminDistance => {
            let kind =
                EventKind::WITH_DISTANCE[rng.random_range(0..EventKind::WITH_DISTANCE.len())];
            (
                WorldRequirement::KindCount { of: kind, count: 2 },
                Some(QuestionFocus::Kind { kind }),
            )
        }
        QType::FirstScorer | QType::LastScorer => (
            WorldRequirement::ScoringCount { count: 2 },
            Some(QuestionFocus::Match),
        ),
        QType::DistanceOfNamedEvent => {
            let kind =
                EventKind::WITH_DISTANCE[rng.random_range(0..EventKind::WITH_DISTANCE.len())];
            (
                WorldRequirement::KindCountRepeatAgent { of: kind, count: 2 },
                None, // player resolved once the world exists
            )
        }
        QType::AgentOfOrdinalEvent => {
            let kind = EventKind::ALL[rng.random_range(0..EventKind::ALL.len())];
            let ordinal = rng.random_range(1..=2u32);
            (
                WorldRequirement::KindCount {
                    of: kind,
                    count: ordinal + 1,
                },
                Some(QuestionFocus::OrdinalKind { ordinal, kind }),
            )
        }
    }
}

/// Resolve the focus that needs world knowledge: the repeated agent for
/// distance-of-named-event questions.
fn resolve_focus(
    world: &MatchWorld,
    qtype: QType,
    partial: Option<QuestionFocus>,
) -> Result<QuestionFocus> {
    if let Some(f) = partial {
        return Ok(f);
    }
    debug_assert_eq!(qtype, QType::DistanceOfNamedEvent);
    // Find the agent with two events of one distance kind.
    for kind in EventKind::WITH_DISTANCE {
        let mut seen: Vec<(usize, Unit)> = Vec::new();
        for e in world.events.iter().filter(|e| e.kind == kind) {
            let unit = e.quantity.map(|q| q.unit);
            if let Some(unit) = unit {
                if seen.iter().any(|(a, _)| *a == e.agent.0) {
                    return Ok(QuestionFocus::PlayerKind {
                        player: world.player(e.agent).name.clone(),
                        kind,
                        unit,
                    });
                }
                seen.push((e.agent.0, unit));
            }
        }
    }
    Err(Error::Generation(
        "no repeated agent found for distance-of-named-event".into(),
    ))
}

/// Build one aligned pair: a baseline instance labeled on the unmodified
/// world, an intervention with `num_sam` modifications of which exactly one
/// hits the answer's source event, and optionally an SPM control. Worlds
/// that cannot satisfy the A != A' condition are rejected and regenerated
/// from the next derived seed.
pub fn build_aligned_pair(
    grammar: &Grammar,
    opts: &BuildOptions,
    request: &PairRequest,
    pair_id: &str,
    pair_seed: u64,
) -> Result<TracedPair> {
    if request.num_sam == 0 {
        return Err(Error::Config("num_sam must be at least 1".into()));
    }
    if request.categories.is_empty() {
        return Err(Error::Config("category set must be non-empty".into()));
    }
    if request.num_sam >= opts.sim.event_count.1 {
        return Err(Error::Config(format!(
            "num_sam = {} but worlds have at most {} events",
            request.num_sam, opts.sim.event_count.1
        )));
    }

    let mut last_reason = String::from("no attempt made");
    for attempt in 0..opts.max_attempts {
        let aseed = seed::derive2(pair_seed, 1, attempt as u64);
        match try_build(grammar, opts, request, pair_id, aseed) {
            Ok(traced) => return Ok(traced),
            Err(Error::Config(msg)) => return Err(Error::Config(msg)),
            Err(e) => last_reason = e.to_string(),
        }
    }
    Err(Error::GenerationExhausted {
        attempts: opts.max_attempts,
        reason: format!("{} ({})", request.qtype.key(), last_reason),
    })
}

fn try_build(
    grammar: &Grammar,
    opts: &BuildOptions,
    request: &PairRequest,
    pair_id: &str,
    aseed: u64,
) -> Result<TracedPair> {
    let mut rng = seed::rng(seed::derive(aseed, 0));

    let (requirement, partial_focus) = plan_question(&mut rng, request.qtype);
    let mut sim = opts.sim.clone();
    sim.requirement = requirement;
    sim.event_count.0 = sim
        .event_count
        .0
        .max(request.num_sam + 1)
        .min(sim.event_count.1);

    let world = simulate_match(&sim, seed::derive(aseed, 1))?;
    let focus = resolve_focus(&world, request.qtype, partial_focus)?;
    let question = Question {
        instance_id: pair_id.to_string(),
        qtype: request.qtype,
        focus,
    };

    let baseline_answer = oracle_answer(&world, &question)?;
    let critical = baseline_answer.source_event;

    // Pick distractor targets until the modified world still answers and the
    // answer actually changes.
    let candidates: Vec<EventId> = world
        .events
        .iter()
        .map(|e| e.id)
        .filter(|id| *id != critical)
        .collect();
    let need = request.num_sam as usize - 1;
    if candidates.len() < need {
        return Err(Error::Generation("not enough distractor events".into()));
    }
    let mut chosen: Option<(Vec<EventId>, Answer)> = None;
    for _ in 0..8 {
        let mut pool = candidates.clone();
        for i in 0..need {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        let distractors: Vec<EventId> = pool[..need].to_vec();
        let mut probe = world.clone();
        probe.event_mut(critical).polarity = false;
        for d in &distractors {
            probe.event_mut(*d).polarity = false;
        }
        let changed = match oracle_answer(&probe, &question) {
            Ok(ans) if ans.text != baseline_answer.text => ans,
            _ => continue,
        };
        // SAM necessity: the distractors alone must leave the baseline
        // answer intact, i.e. undoing the critical flip restores it. An
        // ordinal question, for example, rejects distractors that land
        // before the ordinal target and shift the indexing.
        probe.event_mut(critical).polarity = true;
        match oracle_answer(&probe, &question) {
            Ok(restored) if restored.text == baseline_answer.text => {
                chosen = Some((distractors, changed));
                break;
            }
            _ => continue,
        }
    }
    let (distractors, intervention_answer) =
        chosen.ok_or_else(|| Error::Generation("no distractor set keeps the question answerable".into()))?;

    // Realize the baseline passage; answer-bearing agents stay nominal.
    let mut keep_nominal = BTreeSet::new();
    keep_nominal.insert(critical);
    keep_nominal.insert(intervention_answer.source_event);
    let realize_opts = RealizeOptions {
        pronoun_prob: opts.pronoun_prob,
        keep_nominal,
        filler_prob: opts.filler_prob,
    };
    let passage = realize_passage(
        &world,
        grammar,
        request.partition,
        seed::derive(aseed, 2),
        &realize_opts,
    )?;
    let rq = realize_question(&question, grammar, request.partition, seed::derive(aseed, 3))?;

    let baseline_span = locate_answer(&passage, &baseline_answer)?;

    // Apply the SAMs in event order: the critical one with a category drawn
    // from the request, distractors likewise.
    let critical_category = request.categories[rng.random_range(0..request.categories.len())];
    let mut applications: Vec<(EventId, SamCategory)> = vec![(critical, critical_category)];
    for d in &distractors {
        let cat = request.categories[rng.random_range(0..request.categories.len())];
        applications.push((*d, cat));
    }
    applications.sort_by_key(|(id, _)| *id);

    let mut iworld = world.clone();
    let mut ipassage = passage.clone();
    for (i, (target, category)) in applications.iter().enumerate() {
        let (w, p) = apply_sam(
            &iworld,
            &ipassage,
            *target,
            *category,
            &grammar.lexicon,
            seed::derive2(aseed, 4, i as u64),
        )?;
        iworld = w;
        ipassage = p;
    }

    let re_answer = oracle_answer(&iworld, &question)?;
    if re_answer.text != intervention_answer.text {
        return Err(Error::Consistency(
            "intervention answer drifted between planning and application".into(),
        ));
    }
    let intervention_span = locate_answer(&ipassage, &re_answer)?;

    let applied_records: Vec<AppliedSamRecord> = applications
        .iter()
        .map(|(id, cat)| {
            let m = &iworld.event(*id).applied_modifications[0];
            AppliedSamRecord {
                event: *id,
                category: *cat,
                lexeme: m.lexeme.clone(),
            }
        })
        .collect();

    let mut template_ids: Vec<String> = passage
        .sentences
        .iter()
        .map(|s| s.template_id.clone())
        .collect();
    template_ids.push(rq.template_id.clone());

    let baseline = Instance {
        instance_id: format!("{pair_id}-baseline"),
        question_text: rq.text.clone(),
        passage: passage.clone(),
        answers: vec![AnswerSpan {
            text: baseline_answer.text.clone(),
            start: baseline_span.start,
        }],
        meta: InstanceMeta {
            qtype: request.qtype,
            variant: Variant::Baseline,
            partition: request.partition,
            num_sam: 0,
            applied_sams: Vec::new(),
            template_ids: template_ids.clone(),
        },
    };

    let intervention = Instance {
        instance_id: format!("{pair_id}-intervention"),
        question_text: rq.text.clone(),
        passage: ipassage,
        answers: vec![AnswerSpan {
            text: re_answer.text.clone(),
            start: intervention_span.start,
        }],
        meta: InstanceMeta {
            qtype: request.qtype,
            variant: Variant::Intervention,
            partition: request.partition,
            num_sam: request.num_sam,
            applied_sams: applied_records,
            template_ids: template_ids.clone(),
        },
    };

    // SPM control: only when the answer-critical SAM is an adverbial
    // modifier and the critical sentence carries a numeral.
    let spm = if request.spm_enabled
        && critical_category == SamCategory::AdverbialModifier
        && passage.slot_span(critical, SlotKind::Quantity).is_some()
    {
        let lexeme = iworld.event(critical).applied_modifications[0].lexeme.clone();
        let spm_passage = apply_spm(&passage, critical, &lexeme, &grammar.lexicon)?;
        let spm_span = locate_answer(&spm_passage, &baseline_answer)?;
        Some(Instance {
            instance_id: format!("{pair_id}-spm"),
            question_text: rq.text.clone(),
            passage: spm_passage,
            answers: vec![AnswerSpan {
                text: baseline_answer.text.clone(),
                start: spm_span.start,
            }],
            meta: InstanceMeta {
                qtype: request.qtype,
                variant: Variant::Spm,
                partition: request.partition,
                num_sam: 0,
                applied_sams: Vec::new(),
                template_ids,
            },
        })
    } else {
        None
    };

    Ok(TracedPair {
        pair: AlignedPair {
            pair_id: pair_id.to_string(),
            baseline,
            intervention,
            spm,
        },
        question,
        baseline_world: world,
        intervention_world: iworld,
        critical_event: critical,
    })
}
