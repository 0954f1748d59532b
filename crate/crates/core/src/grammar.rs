//! Template grammar and lexicon.
//!
//! Both are loaded from a plain-text tabular format (one entry per line,
//! tab-separated) so the grammar can be extended without recompiling. The
//! default grammar ships embedded in the crate and is parsed through the same
//! loader as user-supplied files.
//!
//! Template file columns: `id  target  partition  pattern  verb_anchor`.
//! `target` is `sentence:<event-kind>`, `question:<question-type>` or
//! `connective`; `pattern` is a whitespace-separated token sequence where
//! `{slot}` marks a typed slot; `verb_anchor` is the token index of the
//! `{verb}` slot for sentence templates and `-` otherwise.
//!
//! Lexicon file columns: `surface  lemma  pos  class`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{EventKind, QType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PosTag {
    #[serde(rename = "VERB")]
    Verb,
    #[serde(rename = "NOUN")]
    Noun,
    #[serde(rename = "PRONOUN")]
    Pronoun,
    #[serde(rename = "ADJ")]
    Adj,
    #[serde(rename = "ADV")]
    Adv,
    #[serde(rename = "NUM")]
    Num,
    #[serde(rename = "DET")]
    Det,
    #[serde(rename = "PREP")]
    Prep,
    #[serde(rename = "PROPN")]
    Propn,
}

impl PosTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Verb => "VERB",
            PosTag::Noun => "NOUN",
            PosTag::Pronoun => "PRONOUN",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Num => "NUM",
            PosTag::Det => "DET",
            PosTag::Prep => "PREP",
            PosTag::Propn => "PROPN",
        }
    }

    pub fn parse(s: &str) -> Option<PosTag> {
        match s {
            "VERB" => Some(PosTag::Verb),
            "NOUN" => Some(PosTag::Noun),
            "PRONOUN" => Some(PosTag::Pronoun),
            "ADJ" => Some(PosTag::Adj),
            "ADV" => Some(PosTag::Adv),
            "NUM" => Some(PosTag::Num),
            "DET" => Some(PosTag::Det),
            "PREP" => Some(PosTag::Prep),
            "PROPN" => Some(PosTag::Propn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub surface: String,
    pub lemma: String,
    pub pos: PosTag,
    pub class: String,
}

/// Semantic class of verbs that realize a successful event of `kind`.
pub fn success_verb_class(kind: EventKind) -> String {
    format!("success-verb-{}", kind.key())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Lexicon {
    entries: Vec<LexEntry>,
    #[serde(skip)]
    by_surface: HashMap<String, usize>,
    #[serde(skip)]
    by_class: BTreeMap<String, Vec<usize>>,
}

impl Lexicon {
    pub fn from_entries(entries: Vec<LexEntry>) -> Result<Lexicon> {
        let mut lex = Lexicon {
            entries,
            by_surface: HashMap::new(),
            by_class: BTreeMap::new(),
        };
        lex.rebuild_index()?;
        lex.check_class_disjointness()?;
        Ok(lex)
    }

    fn rebuild_index(&mut self) -> Result<()> {
        self.by_surface.clear();
        self.by_class.clear();
        let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if !seen.insert((e.surface.clone(), e.class.clone())) {
                return Err(Error::Config(format!(
                    "lexicon has duplicate entry for '{}' in class '{}'",
                    e.surface, e.class
                )));
            }
            // First entry for a surface wins for tagging lookups.
            self.by_surface.entry(e.surface.clone()).or_insert(i);
            self.by_class.entry(e.class.clone()).or_default().push(i);
        }
        Ok(())
    }

    /// Success verbs never double as failure verbs.
    fn check_class_disjointness(&self) -> Result<()> {
        let success: BTreeSet<&str> = self
            .entries
            .iter()
            .filter(|e| e.class.starts_with("success-verb"))
            .map(|e| e.surface.as_str())
            .collect();
        for e in &self.entries {
            if e.class.starts_with("sam-implicit-negation") && success.contains(e.surface.as_str())
            {
                return Err(Error::Config(format!(
                    "'{}' appears both as a success verb and a failure lexeme",
                    e.surface
                )));
            }
        }
        Ok(())
    }

    /// Tagging lookup by (lowercased) surface form.
    pub fn lookup(&self, surface: &str) -> Option<&LexEntry> {
        self.by_surface
            .get(&surface.to_lowercase())
            .map(|&i| &self.entries[i])
    }

    /// All entries of a semantic class, in file order.
    pub fn class(&self, class: &str) -> Vec<&LexEntry> {
        self.by_class
            .get(class)
            .map(|ids| ids.iter().map(|&i| &self.entries[i]).collect())
            .unwrap_or_default()
    }

    pub fn entries(&self) -> &[LexEntry] {
        &self.entries
    }

    pub fn from_tsv(content: &str, path: &str) -> Result<Lexicon> {
        let mut entries = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected 4 tab-separated fields, got {}", fields.len()),
                ));
            }
            let pos = PosTag::parse(fields[2]).ok_or_else(|| {
                Error::parse(path, line_no, format!("unknown POS tag '{}'", fields[2]))
            })?;
            entries.push(LexEntry {
                surface: fields[0].trim().to_lowercase(),
                lemma: fields[1].trim().to_lowercase(),
                pos,
                class: fields[3].trim().to_string(),
            });
        }
        if entries.is_empty() {
            return Err(Error::parse(path, 0, "lexicon file has no entries"));
        }
        Lexicon::from_entries(entries)
    }
}

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partition {
    Augmentation,
    Challenge,
}

impl Partition {
    pub fn key(self) -> &'static str {
        match self {
            Partition::Augmentation => "augmentation",
            Partition::Challenge => "challenge",
        }
    }

    pub fn parse(s: &str) -> Result<Partition> {
        match s {
            "augmentation" => Ok(Partition::Augmentation),
            "challenge" => Ok(Partition::Challenge),
            _ => Err(Error::Config(format!("unknown partition '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "target", content = "of")]
pub enum TemplateTarget {
    Sentence(EventKind),
    Question(QType),
    Connective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotKind {
    Agent,
    Verb,
    Quantity,
    Unit,
    Time,
    Team,
    Kind,
    Player,
    Ordinal,
}

impl SlotKind {
    fn parse(s: &str) -> Option<SlotKind> {
        Some(match s {
            "agent" => SlotKind::Agent,
            "verb" => SlotKind::Verb,
            "quantity" => SlotKind::Quantity,
            "unit" => SlotKind::Unit,
            "time" => SlotKind::Time,
            "team" => SlotKind::Team,
            "kind" => SlotKind::Kind,
            "player" => SlotKind::Player,
            "ordinal" => SlotKind::Ordinal,
            _ => return None,
        })
    }

    fn sentence_slot(self) -> bool {
        matches!(
            self,
            SlotKind::Agent
                | SlotKind::Verb
                | SlotKind::Quantity
                | SlotKind::Unit
                | SlotKind::Time
                | SlotKind::Team
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Piece {
    Literal(String),
    Slot(SlotKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub target: TemplateTarget,
    pub partition: Partition,
    pub pieces: Vec<Piece>,
    /// Token index of the verb-phrase head; present for sentence templates.
    pub verb_anchor: Option<usize>,
    /// The raw pattern string as loaded.
    pub pattern: String,
}

fn parse_pattern(pattern: &str, path: &str, line_no: usize) -> Result<Vec<Piece>> {
    let mut pieces = Vec::new();
    for tok in pattern.split_whitespace() {
        if let Some(name) = tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
            let slot = SlotKind::parse(name).ok_or_else(|| {
                Error::parse(path, line_no, format!("unknown slot '{{{name}}}'"))
            })?;
            pieces.push(Piece::Slot(slot));
        } else {
            pieces.push(Piece::Literal(tok.to_string()));
        }
    }
    if pieces.is_empty() {
        return Err(Error::parse(path, line_no, "empty pattern"));
    }
    Ok(pieces)
}

fn parse_target(s: &str, path: &str, line_no: usize) -> Result<TemplateTarget> {
    if s == "connective" {
        return Ok(TemplateTarget::Connective);
    }
    if let Some(kind) = s.strip_prefix("sentence:") {
        return Ok(TemplateTarget::Sentence(EventKind::parse(kind).map_err(
            |_| Error::parse(path, line_no, format!("unknown event kind '{kind}'")),
        )?));
    }
    if let Some(qtype) = s.strip_prefix("question:") {
        return Ok(TemplateTarget::Question(QType::parse(qtype).map_err(
            |_| Error::parse(path, line_no, format!("unknown question type '{qtype}'")),
        )?));
    }
    Err(Error::parse(path, line_no, format!("unknown target '{s}'")))
}

pub fn is_punctuation(tok: &str) -> bool {
    matches!(tok, "." | "," | "?" | "!")
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TemplateSet {
    templates: Vec<Template>,
}

impl TemplateSet {
    pub fn from_tsv(content: &str, path: &str) -> Result<TemplateSet> {
        let mut templates = Vec::new();
        let mut ids = BTreeSet::new();
        for (idx, line) in content.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected 5 tab-separated fields, got {}", fields.len()),
                ));
            }
            let id = fields[0].trim().to_string();
            if !ids.insert(id.clone()) {
                return Err(Error::parse(path, line_no, format!("duplicate id '{id}'")));
            }
            let target = parse_target(fields[1].trim(), path, line_no)?;
            let partition = Partition::parse(fields[2].trim())
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
            let pattern = fields[3].trim().to_string();
            let pieces = parse_pattern(&pattern, path, line_no)?;
            let verb_anchor = match fields[4].trim() {
                "-" => None,
                s => Some(s.parse::<usize>().map_err(|_| {
                    Error::parse(path, line_no, format!("bad verb anchor '{s}'"))
                })?),
            };
            if matches!(target, TemplateTarget::Sentence(_)) {
                let verb_idx = pieces.iter().position(|p| *p == Piece::Slot(SlotKind::Verb));
                match (verb_idx, verb_anchor) {
                    (Some(v), Some(a)) if v == a => {}
                    (Some(v), _) => {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("verb anchor must be {v} for '{id}'"),
                        ))
                    }
                    (None, _) => {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("sentence template '{id}' has no {{verb}} slot"),
                        ))
                    }
                }
            }
            templates.push(Template {
                id,
                target,
                partition,
                pieces,
                verb_anchor,
                pattern,
            });
        }
        if templates.is_empty() {
            return Err(Error::parse(path, 0, "template file has no entries"));
        }
        Ok(TemplateSet { templates })
    }

    pub fn all(&self) -> &[Template] {
        &self.templates
    }

    pub fn sentence(&self, kind: EventKind, partition: Partition) -> Vec<&Template> {
        self.templates
            .iter()
            .filter(|t| t.partition == partition && t.target == TemplateTarget::Sentence(kind))
            .collect()
    }

    pub fn question(&self, qtype: QType, partition: Partition) -> Vec<&Template> {
        self.templates
            .iter()
            .filter(|t| t.partition == partition && t.target == TemplateTarget::Question(qtype))
            .collect()
    }

    pub fn connectives(&self, partition: Partition) -> Vec<&Template> {
        self.templates
            .iter()
            .filter(|t| t.partition == partition && t.target == TemplateTarget::Connective)
            .collect()
    }

    pub fn by_id(&self, id: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.id == id)
    }

    /// Keep only templates accepted by `pred` (used by tests to pin one
    /// template).
    pub fn filtered(&self, pred: impl Fn(&Template) -> bool) -> TemplateSet {
        TemplateSet {
            templates: self.templates.iter().filter(|t| pred(t)).cloned().collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Grammar = templates + lexicon, validated together
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Grammar {
    pub templates: TemplateSet,
    pub lexicon: Lexicon,
}

const BUILTIN_TEMPLATES: &str = include_str!("../data/grammar.tsv");
const BUILTIN_LEXICON: &str = include_str!("../data/lexicon.tsv");

impl Grammar {
    pub fn new(templates: TemplateSet, lexicon: Lexicon) -> Result<Grammar> {
        let g = Grammar { templates, lexicon };
        g.validate()?;
        Ok(g)
    }

    /// The grammar embedded in the crate.
    pub fn builtin() -> Grammar {
        Grammar::new(
            TemplateSet::from_tsv(BUILTIN_TEMPLATES, "builtin:grammar.tsv")
                .expect("builtin templates parse"),
            Lexicon::from_tsv(BUILTIN_LEXICON, "builtin:lexicon.tsv")
                .expect("builtin lexicon parses"),
        )
        .expect("builtin grammar validates")
    }

    pub fn load(template_path: &std::path::Path, lexicon_path: &std::path::Path) -> Result<Grammar> {
        let tpl = std::fs::read_to_string(template_path)?;
        let lex = std::fs::read_to_string(lexicon_path)?;
        Grammar::new(
            TemplateSet::from_tsv(&tpl, &template_path.to_string_lossy())?,
            Lexicon::from_tsv(&lex, &lexicon_path.to_string_lossy())?,
        )
    }

    /// Cross-checks: slot typing, lexicon coverage of sentence literals,
    /// quantity/unit adjacency, and per-partition coverage of every event
    /// kind and question type.
    pub fn validate(&self) -> Result<()> {
        for t in self.templates.all() {
            match t.target {
                TemplateTarget::Sentence(kind) => {
                    let mut has = BTreeSet::new();
                    for (i, piece) in t.pieces.iter().enumerate() {
                        match piece {
                            Piece::Slot(s) => {
                                if !s.sentence_slot() {
                                    return Err(Error::Config(format!(
                                        "template '{}' uses question slot {s:?} in a sentence",
                                        t.id
                                    )));
                                }
                                if *s == SlotKind::Quantity {
                                    let next = t.pieces.get(i + 1);
                                    if next != Some(&Piece::Slot(SlotKind::Unit)) {
                                        return Err(Error::Config(format!(
                                            "template '{}': {{quantity}} must be followed by {{unit}}",
                                            t.id
                                        )));
                                    }
                                }
                                has.insert(*s);
                            }
                            Piece::Literal(w) => {
                                if !is_punctuation(w) && self.lexicon.lookup(w).is_none() {
                                    return Err(Error::Config(format!(
                                        "template '{}': word '{w}' missing from lexicon",
                                        t.id
                                    )));
                                }
                            }
                        }
                    }
                    if !has.contains(&SlotKind::Agent) || !has.contains(&SlotKind::Verb) {
                        return Err(Error::Config(format!(
                            "sentence template '{}' needs {{agent}} and {{verb}}",
                            t.id
                        )));
                    }
                    if kind.has_distance() != has.contains(&SlotKind::Quantity) {
                        return Err(Error::Config(format!(
                            "template '{}' quantity slot does not match kind {}",
                            t.id,
                            kind.key()
                        )));
                    }
                    if self.lexicon.class(&success_verb_class(kind)).is_empty() {
                        return Err(Error::Config(format!(
                            "lexicon has no success verbs for {}",
                            kind.key()
                        )));
                    }
                }
                TemplateTarget::Connective => {
                    for piece in &t.pieces {
                        if let Piece::Literal(w) = piece {
                            if !is_punctuation(w) && self.lexicon.lookup(w).is_none() {
                                return Err(Error::Config(format!(
                                    "template '{}': word '{w}' missing from lexicon",
                                    t.id
                                )));
                            }
                        }
                        if let Piece::Slot(s) = piece {
                            return Err(Error::Config(format!(
                                "connective template '{}' may not contain slots ({s:?})",
                                t.id
                            )));
                        }
                    }
                }
                TemplateTarget::Question(_) => {}
            }
        }
        for kind in EventKind::ALL {
            for partition in [Partition::Augmentation, Partition::Challenge] {
                if self.templates.sentence(kind, partition).is_empty() {
                    return Err(Error::Config(format!(
                        "no sentence template for {} in partition {}",
                        kind.key(),
                        partition.key()
                    )));
                }
            }
        }
        for qtype in QType::ALL {
            for partition in [Partition::Augmentation, Partition::Challenge] {
                if self.templates.question(qtype, partition).is_empty() {
                    return Err(Error::Config(format!(
                        "no question template for {} in partition {}",
                        qtype.key(),
                        partition.key()
                    )));
                }
            }
        }
        Ok(())
    }
}
