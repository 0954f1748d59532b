//! Surface realization with exact character-span bookkeeping.
//!
//! Every slot filled into a template is tracked as a `(event, slot) -> span`
//! entry, so answers are located by construction rather than by string
//! search. Offsets count Unicode scalar values.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{
    is_punctuation, success_verb_class, Grammar, Partition, Piece, PosTag, SlotKind, Template,
};
use crate::seed;
use crate::world::{Answer, AnswerValue, EventId, MatchWorld, Question, QuestionFocus};

/// Half-open character range `[start, end)` counted in Unicode scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    fn shifted(self, delta: isize) -> Span {
        Span {
            start: (self.start as isize + delta) as usize,
            end: (self.end as isize + delta) as usize,
        }
    }
}

/// Slice `text` by scalar-value offsets.
pub fn slice_chars(text: &str, span: Span) -> &str {
    let mut iter = text.char_indices();
    let start = iter
        .by_ref()
        .nth(span.start)
        .map(|(b, _)| b)
        .unwrap_or(text.len());
    let mut end = text.len();
    if !span.is_empty() {
        let mut seen = 0;
        for (b, _) in text[start..].char_indices() {
            if seen == span.len() {
                end = start + b;
                break;
            }
            seen += 1;
        }
        if seen < span.len() {
            end = text.len();
        }
    } else {
        end = start;
    }
    &text[start..end]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub span: Span,
    pub pos: PosTag,
    pub lemma: String,
    pub event: Option<EventId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub span: Span,
    pub event: Option<EventId>,
    pub template_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSpan {
    pub event: EventId,
    pub slot: SlotKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedPassage {
    pub text: String,
    pub sentences: Vec<SentenceSpan>,
    pub tokens: Vec<Token>,
    pub slots: Vec<SlotSpan>,
}

impl RealizedPassage {
    pub fn slot_span(&self, event: EventId, slot: SlotKind) -> Option<Span> {
        self.slots
            .iter()
            .find(|s| s.event == event && s.slot == slot)
            .map(|s| s.span)
    }

    pub fn slice(&self, span: Span) -> &str {
        slice_chars(&self.text, span)
    }

    pub fn sentence_of_event(&self, event: EventId) -> Option<&SentenceSpan> {
        self.sentences.iter().find(|s| s.event == Some(event))
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Structural invariants: ordered non-overlapping tokens, sentence spans
    /// that partition the text modulo whitespace, slot spans inside bounds.
    pub fn validate(&self) -> Result<()> {
        let n = self.char_len();
        let mut cursor = 0usize;
        for s in &self.sentences {
            if s.span.start < cursor || s.span.end > n || s.span.is_empty() {
                return Err(Error::Consistency("sentence spans out of order".into()));
            }
            let gap = Span::new(cursor, s.span.start);
            if !slice_chars(&self.text, gap).chars().all(|c| c.is_whitespace()) {
                return Err(Error::Consistency("text between sentences".into()));
            }
            cursor = s.span.end;
        }
        if !slice_chars(&self.text, Span::new(cursor, n))
            .chars()
            .all(|c| c.is_whitespace())
        {
            return Err(Error::Consistency("trailing text after last sentence".into()));
        }
        let mut prev_end = 0usize;
        for t in &self.tokens {
            if t.span.start < prev_end || t.span.end > n || t.span.is_empty() {
                return Err(Error::Consistency("token spans overlap or reverse".into()));
            }
            prev_end = t.span.end;
        }
        for s in &self.slots {
            if s.span.end > n || s.span.is_empty() {
                return Err(Error::Consistency("slot span out of bounds".into()));
            }
        }
        Ok(())
    }

    /// Replace the characters of `at` with `new_text`, dropping tokens inside
    /// the replaced range, inserting `new_tokens` (spans relative to
    /// `new_text`), and shifting every later span. A slot whose span equals
    /// `at` is widened to the replacement; this is how verb rewrites keep the
    /// verb slot aligned.
    pub(crate) fn splice(
        &mut self,
        at: Span,
        new_text: &str,
        new_tokens: Vec<(Span, PosTag, String, Option<EventId>)>,
    ) -> Result<()> {
        let new_len = new_text.chars().count();
        let delta = new_len as isize - at.len() as isize;

        let sentence_idx = self
            .sentences
            .iter()
            .position(|s| s.span.start < at.start && at.end < s.span.end)
            .ok_or_else(|| {
                Error::Consistency("splice range must fall strictly inside a sentence".into())
            })?;

        let prefix: String = slice_chars(&self.text, Span::new(0, at.start)).to_string();
        let suffix: String = slice_chars(&self.text, Span::new(at.end, self.char_len())).to_string();
        self.text = format!("{prefix}{new_text}{suffix}");

        let mut tokens = Vec::with_capacity(self.tokens.len() + new_tokens.len());
        for t in &self.tokens {
            if t.span.end <= at.start {
                tokens.push(t.clone());
            }
        }
        for (rel, pos, lemma, event) in new_tokens {
            tokens.push(Token {
                span: Span::new(at.start + rel.start, at.start + rel.end),
                pos,
                lemma,
                event,
            });
        }
        for t in &self.tokens {
            if t.span.start >= at.end {
                tokens.push(Token {
                    span: t.span.shifted(delta),
                    ..t.clone()
                });
            } else if t.span.end > at.start && t.span.start < at.end && t.span.end > at.end {
                return Err(Error::Consistency("token straddles splice range".into()));
            }
        }
        self.tokens = tokens;

        for s in &mut self.slots {
            if s.span == at {
                s.span = Span::new(at.start, at.start + new_len);
            } else if s.span.start >= at.end {
                s.span = s.span.shifted(delta);
            } else if s.span.end <= at.start {
                // untouched
            } else {
                return Err(Error::Consistency("slot overlaps splice range".into()));
            }
        }

        for (i, s) in self.sentences.iter_mut().enumerate() {
            if i == sentence_idx {
                s.span.end = (s.span.end as isize + delta) as usize;
            } else if i > sentence_idx {
                s.span = s.span.shifted(delta);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizeOptions {
    /// Chance that an agent repeated from the previous sentence is rendered
    /// as a pronoun.
    pub pronoun_prob: f64,
    /// Events that must keep their nominal agent (answer sources).
    pub keep_nominal: BTreeSet<EventId>,
    /// Chance of a leading connective/filler sentence. Off by default.
    pub filler_prob: f64,
}

impl Default for RealizeOptions {
    fn default() -> Self {
        RealizeOptions {
            pronoun_prob: 0.2,
            keep_nominal: BTreeSet::new(),
            filler_prob: 0.0,
        }
    }
}

struct PassageBuilder {
    text: String,
    chars: usize,
    tokens: Vec<Token>,
    sentences: Vec<SentenceSpan>,
    slots: Vec<SlotSpan>,
    sentence_start: usize,
    first_word_pending: bool,
}

impl PassageBuilder {
    fn new() -> Self {
        PassageBuilder {
            text: String::new(),
            chars: 0,
            tokens: Vec::new(),
            sentences: Vec::new(),
            slots: Vec::new(),
            sentence_start: 0,
            first_word_pending: false,
        }
    }

    fn begin_sentence(&mut self) {
        if !self.text.is_empty() {
            self.text.push(' ');
            self.chars += 1;
        }
        self.sentence_start = self.chars;
        self.first_word_pending = true;
    }

    fn end_sentence(&mut self, event: Option<EventId>, template_id: &str) {
        self.sentences.push(SentenceSpan {
            span: Span::new(self.sentence_start, self.chars),
            event,
            template_id: template_id.to_string(),
        });
    }

    fn push_punct(&mut self, p: &str) {
        self.text.push_str(p);
        self.chars += p.chars().count();
    }

    /// Append one word (possibly multi-token surfaces are split by the
    /// caller), returning its span. Capitalizes the first word of a sentence.
    fn push_word(
        &mut self,
        surface: &str,
        pos: PosTag,
        lemma: &str,
        event: Option<EventId>,
    ) -> Span {
        let mut surface = surface.to_string();
        if self.first_word_pending {
            let mut chars = surface.chars();
            if let Some(c) = chars.next() {
                if c.is_ascii_lowercase() {
                    surface = format!("{}{}", c.to_ascii_uppercase(), chars.as_str());
                }
            }
            self.first_word_pending = false;
        }
        if self.chars > self.sentence_start {
            self.text.push(' ');
            self.chars += 1;
        }
        let start = self.chars;
        self.text.push_str(&surface);
        self.chars += surface.chars().count();
        let span = Span::new(start, self.chars);
        self.tokens.push(Token {
            span,
            pos,
            lemma: lemma.to_string(),
            event,
        });
        span
    }

    /// Push a possibly multi-word surface as individual tokens; returns the
    /// covering span.
    fn push_words(&mut self, surface: &str, pos: PosTag, event: Option<EventId>) -> Span {
        let mut first: Option<usize> = None;
        let mut end = self.chars;
        for w in surface.split_whitespace() {
            let s = self.push_word(w, pos, &w.to_lowercase(), event);
            first.get_or_insert(s.start);
            end = s.end;
        }
        Span::new(first.unwrap_or(end), end)
    }

    fn finish(self) -> RealizedPassage {
        RealizedPassage {
            text: self.text,
            sentences: self.sentences,
            tokens: self.tokens,
            slots: self.slots,
        }
    }
}

/// Realize every event of `world` (in timestamp order, one sentence each)
/// using only templates from `partition`. Deterministic in `seed`.
pub fn realize_passage(
    world: &MatchWorld,
    grammar: &Grammar,
    partition: Partition,
    seed: u64,
    opts: &RealizeOptions,
) -> Result<RealizedPassage> {
    let mut rng = seed::rng(seed);
    let mut b = PassageBuilder::new();

    if opts.filler_prob > 0.0 && rng.random_range(0.0..1.0) < opts.filler_prob {
        let fillers = grammar.templates.connectives(partition);
        if !fillers.is_empty() {
            let t = fillers[rng.random_range(0..fillers.len())];
            b.begin_sentence();
            for piece in &t.pieces {
                if let Piece::Literal(w) = piece {
                    if is_punctuation(w) {
                        b.push_punct(w);
                    } else {
                        let e = grammar.lexicon.lookup(w).ok_or_else(|| {
                            Error::Generation(format!("word '{w}' missing from lexicon"))
                        })?;
                        b.push_word(w, e.pos, &e.lemma, None);
                    }
                }
            }
            b.end_sentence(None, &t.id);
        }
    }

    let mut prev_agent = None;
    for event in &world.events {
        let templates = grammar.templates.sentence(event.kind, partition);
        if templates.is_empty() {
            return Err(Error::Generation(format!(
                "no sentence template for event kind {} in partition {}",
                event.kind.key(),
                partition.key()
            )));
        }
        let template = templates[rng.random_range(0..templates.len())];
        let verbs = grammar.lexicon.class(&success_verb_class(event.kind));
        if verbs.is_empty() {
            return Err(Error::Generation(format!(
                "no success verbs for event kind {}",
                event.kind.key()
            )));
        }
        let verb = verbs[rng.random_range(0..verbs.len())];
        let as_pronoun = prev_agent == Some(event.agent)
            && !opts.keep_nominal.contains(&event.id)
            && rng.random_range(0.0..1.0) < opts.pronoun_prob;

        b.begin_sentence();
        for piece in &template.pieces {
            match piece {
                Piece::Literal(w) => {
                    if is_punctuation(w) {
                        b.push_punct(w);
                    } else {
                        let e = grammar.lexicon.lookup(w).ok_or_else(|| {
                            Error::Generation(format!("word '{w}' missing from lexicon"))
                        })?;
                        b.push_word(w, e.pos, &e.lemma, Some(event.id));
                    }
                }
                Piece::Slot(slot) => {
                    let span = match slot {
                        SlotKind::Agent => {
                            if as_pronoun {
                                let p = world.player(event.agent).pronoun;
                                b.push_word(p.surface(), PosTag::Pronoun, p.surface(), Some(event.id))
                            } else {
                                let name = &world.player(event.agent).name;
                                b.push_words(name, PosTag::Propn, Some(event.id))
                            }
                        }
                        SlotKind::Verb => {
                            b.push_word(&verb.surface, PosTag::Verb, &verb.lemma, Some(event.id))
                        }
                        SlotKind::Quantity => {
                            let q = event.quantity.ok_or_else(|| {
                                Error::Generation(format!(
                                    "template '{}' needs a distance but event {} has none",
                                    template.id, event.id
                                ))
                            })?;
                            let digits = q.value.to_string();
                            b.push_word(&digits, PosTag::Num, &digits, Some(event.id))
                        }
                        SlotKind::Unit => {
                            let q = event.quantity.expect("unit follows quantity");
                            b.push_word(
                                q.unit.plural(),
                                PosTag::Noun,
                                q.unit.lemma(),
                                Some(event.id),
                            )
                        }
                        SlotKind::Time => {
                            let digits = event.minute.to_string();
                            b.push_word(&digits, PosTag::Num, &digits, Some(event.id))
                        }
                        SlotKind::Team => {
                            let team = &world.teams[world.player(event.agent).team];
                            b.push_words(team, PosTag::Propn, Some(event.id))
                        }
                        other => {
                            return Err(Error::Generation(format!(
                                "slot {other:?} is not valid in sentence template '{}'",
                                template.id
                            )))
                        }
                    };
                    b.slots.push(SlotSpan {
                        event: event.id,
                        slot: *slot,
                        span,
                    });
                }
            }
        }
        b.end_sentence(Some(event.id), &template.id);
        prev_agent = Some(event.agent);
    }

    let passage = b.finish();
    passage.validate()?;
    Ok(passage)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedQuestion {
    pub text: String,
    pub template_id: String,
}

fn ordinal_word(n: u32) -> Result<&'static str> {
    Ok(match n {
        1 => "first",
        2 => "second",
        3 => "third",
        4 => "fourth",
        5 => "fifth",
        6 => "sixth",
        _ => return Err(Error::Config(format!("ordinal {n} out of range"))),
    })
}

/// Render a question surface. The focus parameters appear verbatim where the
/// template demands them.
pub fn realize_question(
    question: &Question,
    grammar: &Grammar,
    partition: Partition,
    seed: u64,
) -> Result<RealizedQuestion> {
    let mut rng = seed::rng(seed);
    let templates = grammar.templates.question(question.qtype, partition);
    if templates.is_empty() {
        return Err(Error::Generation(format!(
            "no question template for {} in partition {}",
            question.qtype.key(),
            partition.key()
        )));
    }
    let template: &Template = templates[rng.random_range(0..templates.len())];

    let mut words: Vec<String> = Vec::new();
    for piece in &template.pieces {
        match piece {
            Piece::Literal(w) => words.push(w.clone()),
            Piece::Slot(slot) => {
                let value: String = match (slot, &question.focus) {
                    (SlotKind::Kind, QuestionFocus::Kind { kind })
                    | (SlotKind::Kind, QuestionFocus::PlayerKind { kind, .. })
                    | (SlotKind::Kind, QuestionFocus::OrdinalKind { kind, .. }) => {
                        kind.noun().to_string()
                    }
                    (SlotKind::Player, QuestionFocus::PlayerKind { player, .. }) => player.clone(),
                    (SlotKind::Unit, QuestionFocus::PlayerKind { unit, .. }) => {
                        unit.plural().to_string()
                    }
                    (SlotKind::Ordinal, QuestionFocus::OrdinalKind { ordinal, .. }) => {
                        ordinal_word(*ordinal)?.to_string()
                    }
                    (slot, focus) => {
                        return Err(Error::Generation(format!(
                            "template '{}' slot {slot:?} cannot be filled from focus {focus:?}",
                            template.id
                        )))
                    }
                };
                words.push(value);
            }
        }
    }

    let mut text = String::new();
    for w in &words {
        if !text.is_empty() && !is_punctuation(w) {
            text.push(' ');
        }
        text.push_str(w);
    }
    let mut chars = text.chars();
    let text = match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {
            format!("{}{}", c.to_ascii_uppercase(), chars.as_str())
        }
        _ => text,
    };

    Ok(RealizedQuestion {
        text,
        template_id: template.id.clone(),
    })
}

/// Resolve the character range of `answer` from slot bookkeeping, never by
/// string search (the same number may appear twice in a passage).
pub fn locate_answer(passage: &RealizedPassage, answer: &Answer) -> Result<Span> {
    let event = answer.source_event;
    let span = match &answer.value {
        AnswerValue::Player(_) => passage.slot_span(event, SlotKind::Agent),
        AnswerValue::Minute(_) => passage.slot_span(event, SlotKind::Time),
        AnswerValue::Distance(_) => {
            let q = passage.slot_span(event, SlotKind::Quantity);
            let u = passage.slot_span(event, SlotKind::Unit);
            match (q, u) {
                (Some(q), Some(u)) if q.end + 1 == u.start => Some(Span::new(q.start, u.end)),
                _ => None,
            }
        }
    };
    let span = span.ok_or_else(|| {
        Error::Consistency(format!(
            "answer slot for event {event} not present in the passage"
        ))
    })?;
    let got = passage.slice(span);
    if got != answer.text {
        return Err(Error::Consistency(format!(
            "slot text '{got}' does not match answer '{}'",
            answer.text
        )));
    }
    Ok(span)
}
