//! Structured match worlds and the ground-truth answer oracle.
//!
//! A [`MatchWorld`] is an ordered stream of match events (field goals,
//! touchdowns, interceptions) from which every labeled answer derives. The
//! oracle only sees events whose `polarity` flag is true; a semantics-altering
//! modification flips that flag, which is exactly what makes the expected
//! answer change.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modify::Modification;
use crate::seed;

/// Index of a player within its world's roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub usize);

/// Index of an event within its world's (timestamp-ordered) event list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub u32);

impl std::fmt::Display for EventId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    Yards,
    Metres,
}

impl Unit {
    /// Surface form used after a numeral ("40 yards").
    pub fn plural(self) -> &'static str {
        match self {
            Unit::Yards => "yards",
            Unit::Metres => "metres",
        }
    }

    pub fn lemma(self) -> &'static str {
        match self {
            Unit::Yards => "yard",
            Unit::Metres => "metre",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    FieldGoal,
    TouchdownRun,
    TouchdownPass,
    Interception,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [
        EventKind::FieldGoal,
        EventKind::TouchdownRun,
        EventKind::TouchdownPass,
        EventKind::Interception,
    ];

    /// Kinds that carry a distance and can answer distance questions.
    pub const WITH_DISTANCE: [EventKind; 3] = [
        EventKind::FieldGoal,
        EventKind::TouchdownRun,
        EventKind::TouchdownPass,
    ];

    /// Kinds that put points on the board.
    pub const SCORING: [EventKind; 3] = [
        EventKind::FieldGoal,
        EventKind::TouchdownRun,
        EventKind::TouchdownPass,
    ];

    pub fn has_distance(self) -> bool {
        !matches!(self, EventKind::Interception)
    }

    pub fn is_scoring(self) -> bool {
        !matches!(self, EventKind::Interception)
    }

    /// Noun phrase used when a question names this kind.
    pub fn noun(self) -> &'static str {
        match self {
            EventKind::FieldGoal => "field goal",
            EventKind::TouchdownRun => "touchdown run",
            EventKind::TouchdownPass => "touchdown pass",
            EventKind::Interception => "interception",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            EventKind::FieldGoal => "field-goal",
            EventKind::TouchdownRun => "touchdown-run",
            EventKind::TouchdownPass => "touchdown-pass",
            EventKind::Interception => "interception",
        }
    }

    pub fn parse(s: &str) -> Result<EventKind> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.key() == s)
            .ok_or_else(|| Error::Config(format!("unknown event kind '{s}'")))
    }
}

/// A positive integer distance with its unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: u32,
    pub unit: Unit,
}

impl Quantity {
    /// Canonical surface form, digits plus plural unit ("40 yards").
    pub fn surface(&self) -> String {
        format!("{} {}", self.value, self.unit.plural())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pronoun {
    He,
    She,
}

impl Pronoun {
    pub fn surface(self) -> &'static str {
        match self {
            Pronoun::He => "he",
            Pronoun::She => "she",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Player {
    pub name: String,
    /// 0 or 1, indexing `MatchWorld::teams`.
    pub team: usize,
    pub pronoun: Pronoun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    pub kind: EventKind,
    pub agent: PlayerId,
    /// Absent for interceptions, which are reported without a distance.
    pub quantity: Option<Quantity>,
    /// Match minute in [1, 60]; strictly increasing across the event list.
    pub minute: u32,
    /// True on creation; flipped to false only by a SAM application.
    pub polarity: bool,
    pub applied_modifications: Vec<Modification>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchWorld {
    pub match_id: String,
    pub teams: [String; 2],
    pub players: Vec<Player>,
    pub events: Vec<Event>,
}

impl MatchWorld {
    pub fn player(&self, id: PlayerId) -> &Player {
        &self.players[id.0]
    }

    pub fn event(&self, id: EventId) -> &Event {
        &self.events[id.0 as usize]
    }

    pub fn event_mut(&mut self, id: EventId) -> &mut Event {
        &mut self.events[id.0 as usize]
    }

    /// Structural invariant check; generation bugs surface here.
    pub fn validate(&self) -> Result<()> {
        if self.teams[0] == self.teams[1] {
            return Err(Error::Consistency("team names must be distinct".into()));
        }
        let mut names = std::collections::HashSet::new();
        for p in &self.players {
            if p.team > 1 {
                return Err(Error::Consistency(format!(
                    "player {} has invalid team index",
                    p.name
                )));
            }
            if !names.insert(p.name.as_str()) {
                return Err(Error::Consistency(format!("duplicate player {}", p.name)));
            }
        }
        if self.events.len() < 2 {
            return Err(Error::Consistency("worlds need at least 2 events".into()));
        }
        let mut prev = 0u32;
        for (i, e) in self.events.iter().enumerate() {
            if e.id.0 as usize != i {
                return Err(Error::Consistency(format!("event id {} out of order", e.id)));
            }
            if e.minute <= prev || e.minute > 60 {
                return Err(Error::Consistency(format!(
                    "event {} minute {} not strictly increasing within [1, 60]",
                    e.id, e.minute
                )));
            }
            prev = e.minute;
            if e.agent.0 >= self.players.len() {
                return Err(Error::Consistency(format!(
                    "event {} references unknown player",
                    e.id
                )));
            }
            if e.kind.has_distance() != e.quantity.is_some() {
                return Err(Error::Consistency(format!(
                    "event {} quantity does not match its kind",
                    e.id
                )));
            }
        }
        Ok(())
    }
}

/// Extra structure a world must exhibit so a planned question is answerable
/// both before and after the answer-critical modification.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum WorldRequirement {
    #[default]
    None,
    /// At least `count` events of `of`, all with distinct agents.
    KindCount { of: EventKind, count: u32 },
    /// At least `count` events of `of`, two of which share one agent.
    KindCountRepeatAgent { of: EventKind, count: u32 },
    /// At least `count` scoring events with pairwise-distinct agents.
    ScoringCount { count: u32 },
}

impl WorldRequirement {
    fn min_events(self) -> u32 {
        match self {
            WorldRequirement::None => 0,
            WorldRequirement::KindCount { count, .. } => count,
            WorldRequirement::KindCountRepeatAgent { count, .. } => count,
            WorldRequirement::ScoringCount { count } => count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Inclusive range for the number of events per world.
    pub event_count: (u32, u32),
    /// Inclusive range for distances, sampled without replacement per world.
    pub distance_range: (u32, u32),
    /// Units a world may use; one is picked per world.
    pub units: Vec<Unit>,
    pub team_names: Vec<String>,
    pub player_names: Vec<String>,
    pub players_per_team: u32,
    /// Chance that an event reuses the previous event's agent when the
    /// distinctness rules allow it; this is what gives pronominalization
    /// something to work with.
    pub agent_repeat_bias: f64,
    pub requirement: WorldRequirement,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            event_count: (3, 6),
            distance_range: (15, 55),
            units: vec![Unit::Yards, Unit::Metres],
            team_names: DEFAULT_TEAMS.iter().map(|s| s.to_string()).collect(),
            player_names: DEFAULT_PLAYERS.iter().map(|s| s.to_string()).collect(),
            players_per_team: 5,
            agent_repeat_bias: 0.7,
            requirement: WorldRequirement::None,
        }
    }
}

const DEFAULT_TEAMS: &[&str] = &[
    "Wildcats", "Falcons", "Bears", "Sharks", "Comets", "Rangers", "Pioneers", "Mustangs",
    "Lions", "Hornets", "Ravens", "Titans",
];

const DEFAULT_PLAYERS: &[&str] = &[
    "Smith", "Jones", "Taylor", "Brown", "Davis", "Miller", "Wilson", "Moore", "Clark", "Hall",
    "Allen", "Young", "King", "Wright", "Scott", "Green", "Baker", "Adams", "Nelson", "Carter",
    "Mitchell", "Turner", "Phillips", "Campbell", "Parker", "Evans", "Edwards", "Collins",
    "Stewart", "Morris",
];

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.event_count;
        if lo < 2 || lo > hi {
            return Err(Error::Config(format!(
                "event count range [{lo}, {hi}] must satisfy 2 <= min <= max"
            )));
        }
        let (dlo, dhi) = self.distance_range;
        if dlo == 0 || dlo > dhi {
            return Err(Error::Config(format!(
                "distance range [{dlo}, {dhi}] must satisfy 1 <= min <= max"
            )));
        }
        if (dhi - dlo + 1) < hi {
            return Err(Error::Config(
                "distance range too narrow to keep per-world distances distinct".into(),
            ));
        }
        if hi > 60 {
            return Err(Error::Config("event count cannot exceed 60 minutes".into()));
        }
        if self.units.is_empty() {
            return Err(Error::Config("unit vocabulary is empty".into()));
        }
        if self.team_names.len() < 2 {
            return Err(Error::Config("need at least 2 team names".into()));
        }
        if self.players_per_team == 0 {
            return Err(Error::Config("players_per_team must be positive".into()));
        }
        let roster = self.players_per_team as usize * 2;
        if self.player_names.len() < roster {
            return Err(Error::Config(format!(
                "player vocabulary has {} names but the roster needs {roster}",
                self.player_names.len()
            )));
        }
        if roster < hi as usize {
            return Err(Error::Config(
                "roster too small for the maximum event count".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.agent_repeat_bias) {
            return Err(Error::Config("agent_repeat_bias must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Sample `k` distinct values from `lo..=hi` by partial Fisher-Yates.
fn sample_distinct<R: Rng>(rng: &mut R, lo: u32, hi: u32, k: usize) -> Vec<u32> {
    let mut pool: Vec<u32> = (lo..=hi).collect();
    for i in 0..k.min(pool.len()) {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

fn shuffle<T, R: Rng>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Simulate a match-event stream. Identical `(config, seed)` always yields a
/// bit-identical world; all per-world quantities are pairwise distinct so
/// argmax/argmin questions never tie.
pub fn simulate_match(config: &SimConfig, seed: u64) -> Result<MatchWorld> {
    config.validate()?;
    let mut rng = seed::rng(seed);

    let (lo, hi) = config.event_count;
    let mut n_events = rng.random_range(lo..=hi);
    n_events = n_events.max(config.requirement.min_events());
    let n = n_events as usize;

    let unit = config.units[rng.random_range(0..config.units.len())];

    // Teams and roster.
    let team_picks = sample_distinct(&mut rng, 0, config.team_names.len() as u32 - 1, 2);
    let teams = [
        config.team_names[team_picks[0] as usize].clone(),
        config.team_names[team_picks[1] as usize].clone(),
    ];
    let roster = config.players_per_team as usize * 2;
    let name_picks = sample_distinct(&mut rng, 0, config.player_names.len() as u32 - 1, roster);
    let players: Vec<Player> = name_picks
        .iter()
        .enumerate()
        .map(|(i, &pick)| Player {
            name: config.player_names[pick as usize].clone(),
            team: i % 2,
            pronoun: if rng.random_range(0..2u32) == 0 {
                Pronoun::He
            } else {
                Pronoun::She
            },
        })
        .collect();

    // Event kinds: satisfy the requirement first, fill the rest freely.
    let mut kinds: Vec<EventKind> = Vec::with_capacity(n);
    let (required_kind, required_count) = match config.requirement {
        WorldRequirement::KindCount { of, count }
        | WorldRequirement::KindCountRepeatAgent { of, count } => (Some(of), count),
        _ => (None, 0),
    };
    if let Some(k) = required_kind {
        for _ in 0..required_count {
            kinds.push(k);
        }
    }
    if let WorldRequirement::ScoringCount { count } = config.requirement {
        for _ in 0..count {
            let k = EventKind::SCORING[rng.random_range(0..EventKind::SCORING.len())];
            kinds.push(k);
        }
    }
    while kinds.len() < n {
        kinds.push(EventKind::ALL[rng.random_range(0..EventKind::ALL.len())]);
    }
    shuffle(&mut rng, &mut kinds);

    // Timestamps: distinct minutes, ascending.
    let mut minutes = sample_distinct(&mut rng, 1, 60, n);
    minutes.sort_unstable();

    // Distances: globally distinct within the world.
    let n_dist = kinds.iter().filter(|k| k.has_distance()).count();
    let distances = sample_distinct(
        &mut rng,
        config.distance_range.0,
        config.distance_range.1,
        n_dist,
    );

    let agents = assign_agents(&mut rng, &kinds, roster, config)?;

    let mut events = Vec::with_capacity(n);
    let mut dist_iter = distances.into_iter();
    for i in 0..n {
        let quantity = if kinds[i].has_distance() {
            Some(Quantity {
                value: dist_iter.next().expect("distance pool sized to fit"),
                unit,
            })
        } else {
            None
        };
        events.push(Event {
            id: EventId(i as u32),
            kind: kinds[i],
            agent: PlayerId(agents[i]),
            quantity,
            minute: minutes[i],
            polarity: true,
            applied_modifications: Vec::new(),
        });
    }

    let world = MatchWorld {
        match_id: format!("m{seed:016x}"),
        teams,
        players,
        events,
    };
    world.validate()?;
    Ok(world)
}

/// Pick agents under the distinctness rules: agents are unique within each
/// event kind (and across scoring events for `ScoringCount` worlds), except
/// for the single designated repeat of `KindCountRepeatAgent`.
fn assign_agents<R: Rng>(
    rng: &mut R,
    kinds: &[EventKind],
    roster: usize,
    config: &SimConfig,
) -> Result<Vec<usize>> {
    let n = kinds.len();
    let scoring_distinct = matches!(config.requirement, WorldRequirement::ScoringCount { .. });
    let mut assigned: Vec<Option<usize>> = vec![None; n];

    if let WorldRequirement::KindCountRepeatAgent { of, .. } = config.requirement {
        let slots: Vec<usize> = (0..n).filter(|&i| kinds[i] == of).collect();
        if slots.len() < 2 {
            return Err(Error::Generation(format!(
                "repeat-agent requirement needs 2 events of kind {}",
                of.key()
            )));
        }
        let picks = sample_distinct(rng, 0, slots.len() as u32 - 1, 2);
        let shared = rng.random_range(0..roster);
        assigned[slots[picks[0] as usize]] = Some(shared);
        assigned[slots[picks[1] as usize]] = Some(shared);
    }

    let allowed = |assigned: &[Option<usize>], i: usize, p: usize| -> bool {
        for j in 0..n {
            if j == i {
                continue;
            }
            if let Some(q) = assigned[j] {
                if q == p && kinds[j] == kinds[i] {
                    return false;
                }
                if q == p && scoring_distinct && kinds[j].is_scoring() && kinds[i].is_scoring() {
                    return false;
                }
            }
        }
        true
    };

    for i in 0..n {
        if assigned[i].is_some() {
            continue;
        }
        if i > 0 && rng.random_range(0.0..1.0) < config.agent_repeat_bias {
            if let Some(prev) = assigned[i - 1] {
                if allowed(&assigned, i, prev) {
                    assigned[i] = Some(prev);
                    continue;
                }
            }
        }
        let start = rng.random_range(0..roster);
        let pick = (0..roster)
            .map(|off| (start + off) % roster)
            .find(|&p| allowed(&assigned, i, p))
            .ok_or_else(|| Error::Generation("roster exhausted while assigning agents".into()))?;
        assigned[i] = Some(pick);
    }

    Ok(assigned.into_iter().map(|a| a.expect("all slots filled")).collect())
}

// ---------------------------------------------------------------------------
// Questions and the oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QType {
    ArgmaxDistance,
    ArgminDistance,
    FirstScorer,
    LastScorer,
    DistanceOfNamedEvent,
    AgentOfOrdinalEvent,
}

impl QType {
    pub const ALL: [QType; 6] = [
        QType::ArgmaxDistance,
        QType::ArgminDistance,
        QType::FirstScorer,
        QType::LastScorer,
        QType::DistanceOfNamedEvent,
        QType::AgentOfOrdinalEvent,
    ];

    pub fn key(self) -> &'static str {
        match self {
            QType::ArgmaxDistance => "argmax-distance",
            QType::ArgminDistance => "argmin-distance",
            QType::FirstScorer => "first-scorer",
            QType::LastScorer => "last-scorer",
            QType::DistanceOfNamedEvent => "distance-of-named-event",
            QType::AgentOfOrdinalEvent => "agent-of-ordinal-event",
        }
    }

    pub fn parse(s: &str) -> Result<QType> {
        QType::ALL
            .into_iter()
            .find(|q| q.key() == s)
            .ok_or_else(|| Error::Config(format!("unknown question type '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "focus")]
pub enum QuestionFocus {
    /// Whole-match focus (first-scorer, last-scorer).
    Match,
    /// A single event kind (argmax-distance, argmin-distance).
    Kind { kind: EventKind },
    /// A player's first event of a kind (distance-of-named-event). The unit
    /// is carried so question surfaces can ask "how many yards".
    PlayerKind {
        player: String,
        kind: EventKind,
        unit: Unit,
    },
    /// The `ordinal`-th (1-based) successful event of a kind.
    OrdinalKind { ordinal: u32, kind: EventKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub instance_id: String,
    pub qtype: QType,
    pub focus: QuestionFocus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type", content = "value")]
pub enum AnswerValue {
    Player(String),
    Distance(Quantity),
    Minute(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    /// Canonical surface form; appears verbatim in the realized passage.
    pub text: String,
    pub value: AnswerValue,
    pub source_event: EventId,
}

fn player_answer(world: &MatchWorld, e: &Event) -> Answer {
    let name = world.player(e.agent).name.clone();
    Answer {
        text: name.clone(),
        value: AnswerValue::Player(name),
        source_event: e.id,
    }
}

fn distance_answer(e: &Event) -> Result<Answer> {
    let q = e
        .quantity
        .ok_or_else(|| Error::Consistency(format!("event {} has no distance", e.id)))?;
    Ok(Answer {
        text: q.surface(),
        value: AnswerValue::Distance(q),
        source_event: e.id,
    })
}

/// Compute the expected answer from ground truth. Only events with
/// `polarity == true` are visible; a modified event does not exist as far as
/// the oracle is concerned.
pub fn oracle_answer(world: &MatchWorld, question: &Question) -> Result<Answer> {
    let visible = || world.events.iter().filter(|e| e.polarity);
    match (&question.qtype, &question.focus) {
        (QType::ArgmaxDistance, QuestionFocus::Kind { kind }) => visible()
            .filter(|e| e.kind == *kind && e.quantity.is_some())
            .max_by_key(|e| e.quantity.map(|q| q.value))
            .map(|e| player_answer(world, e))
            .ok_or(Error::Unanswerable),
        (QType::ArgminDistance, QuestionFocus::Kind { kind }) => visible()
            .filter(|e| e.kind == *kind && e.quantity.is_some())
            .min_by_key(|e| e.quantity.map(|q| q.value))
            .map(|e| player_answer(world, e))
            .ok_or(Error::Unanswerable),
        (QType::FirstScorer, QuestionFocus::Match) => visible()
            .filter(|e| e.kind.is_scoring())
            .min_by_key(|e| e.minute)
            .map(|e| player_answer(world, e))
            .ok_or(Error::Unanswerable),
        (QType::LastScorer, QuestionFocus::Match) => visible()
            .filter(|e| e.kind.is_scoring())
            .max_by_key(|e| e.minute)
            .map(|e| player_answer(world, e))
            .ok_or(Error::Unanswerable),
        (QType::DistanceOfNamedEvent, QuestionFocus::PlayerKind { player, kind, .. }) => visible()
            .find(|e| e.kind == *kind && world.player(e.agent).name == *player)
            .ok_or(Error::Unanswerable)
            .and_then(distance_answer),
        (QType::AgentOfOrdinalEvent, QuestionFocus::OrdinalKind { ordinal, kind }) => {
            if *ordinal == 0 {
                return Err(Error::Config("ordinals are 1-based".into()));
            }
            visible()
                .filter(|e| e.kind == *kind)
                .nth(*ordinal as usize - 1)
                .map(|e| player_answer(world, e))
                .ok_or(Error::Unanswerable)
        }
        (qtype, focus) => Err(Error::Config(format!(
            "focus {focus:?} does not fit question type {}",
            qtype.key()
        ))),
    }
}
