//! File formats: aligned-jsonl challenge sets, SQuAD v1 exports, the
//! annotated-corpus format, and prediction files.
//!
//! All text is UTF-8. Offsets count Unicode scalar values, and every file
//! header records that convention. jsonl files start with one header line;
//! re-exporting an imported file is byte-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{GoldInstance, GoldPair};
use crate::modify::{AlignedPair, Instance, SamCategory, Variant};
use crate::quality::{AnnotatedCorpus, CorpusPassage};
use crate::realize::{slice_chars, Span};
use crate::world::QType;

pub const ALIGNED_FORMAT: &str = "samforge-aligned-jsonl";
pub const CORPUS_FORMAT: &str = "samforge-corpus-jsonl";
pub const OFFSET_UNIT: &str = "unicode-scalar-values";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHeader {
    pub format: String,
    pub version: u32,
    pub offset_unit: String,
}

impl FileHeader {
    fn new(format: &str) -> FileHeader {
        FileHeader {
            format: format.to_string(),
            version: FORMAT_VERSION,
            offset_unit: OFFSET_UNIT.to_string(),
        }
    }

    fn expect(&self, format: &str, path: &str) -> Result<()> {
        if self.format != format {
            return Err(Error::parse(
                path,
                1,
                format!("expected format '{format}', found '{}'", self.format),
            ));
        }
        if self.offset_unit != OFFSET_UNIT {
            return Err(Error::parse(
                path,
                1,
                format!("unsupported offset unit '{}'", self.offset_unit),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub text: String,
    pub answer_start: usize,
}

/// One instance as serialized in aligned-jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedRecord {
    pub pair_id: String,
    pub instance_id: String,
    pub variant: Variant,
    pub qtype: QType,
    pub sam_categories: Vec<SamCategory>,
    pub num_sam: u32,
    pub question: String,
    pub passage: String,
    pub answers: Vec<AnswerRecord>,
    pub template_ids: Vec<String>,
}

impl AlignedRecord {
    pub fn from_instance(pair_id: &str, inst: &Instance) -> AlignedRecord {
        AlignedRecord {
            pair_id: pair_id.to_string(),
            instance_id: inst.instance_id.clone(),
            variant: inst.meta.variant,
            qtype: inst.meta.qtype,
            sam_categories: inst.meta.sam_categories(),
            num_sam: inst.meta.num_sam,
            question: inst.question_text.clone(),
            passage: inst.passage.text.clone(),
            answers: inst
                .answers
                .iter()
                .map(|a| AnswerRecord {
                    text: a.text.clone(),
                    answer_start: a.start,
                })
                .collect(),
            template_ids: inst.meta.template_ids.clone(),
        }
    }

    /// Offset soundness: each answer text must sit at its recorded start.
    pub fn check_offsets(&self) -> Result<()> {
        for a in &self.answers {
            let span = Span::new(a.answer_start, a.answer_start + a.text.chars().count());
            let got = slice_chars(&self.passage, span);
            if got != a.text {
                return Err(Error::Consistency(format!(
                    "{}: answer '{}' not found at offset {} (found '{got}')",
                    self.instance_id, a.text, a.answer_start
                )));
            }
        }
        Ok(())
    }
}

pub fn records_from_pairs(pairs: &[AlignedPair]) -> Vec<AlignedRecord> {
    let mut records = Vec::new();
    for p in pairs {
        for inst in p.instances() {
            records.push(AlignedRecord::from_instance(&p.pair_id, inst));
        }
    }
    records
}

/// Serialize records as aligned-jsonl (header line first). Offsets are
/// re-verified; a mismatch is a consistency error at export time.
pub fn write_aligned_jsonl(records: &[AlignedRecord]) -> Result<String> {
    let mut out = serde_json::to_string(&FileHeader::new(ALIGNED_FORMAT))?;
    out.push('\n');
    for r in records {
        r.check_offsets()?;
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_aligned_jsonl(content: &str, path: &str) -> Result<Vec<AlignedRecord>> {
    let mut lines = content.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 0, "empty file"))?;
    let header: FileHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::parse(path, 1, format!("bad header: {e}")))?;
    header.expect(ALIGNED_FORMAT, path)?;
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let r: AlignedRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        r.check_offsets()
            .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        records.push(r);
    }
    Ok(records)
}

/// Records of one pair, regrouped after import.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordPair {
    pub pair_id: String,
    pub baseline: AlignedRecord,
    pub intervention: AlignedRecord,
    pub spm: Option<AlignedRecord>,
}

impl RecordPair {
    pub fn records(&self) -> impl Iterator<Item = &AlignedRecord> {
        [Some(&self.baseline), Some(&self.intervention), self.spm.as_ref()]
            .into_iter()
            .flatten()
    }

    pub fn to_gold(&self) -> GoldPair {
        let g = |r: &AlignedRecord| GoldInstance {
            instance_id: r.instance_id.clone(),
            answers: r.answers.iter().map(|a| a.text.clone()).collect(),
        };
        GoldPair {
            pair_id: self.pair_id.clone(),
            baseline: g(&self.baseline),
            intervention: g(&self.intervention),
            spm: self.spm.as_ref().map(g),
        }
    }
}

/// Group flat records into pairs, preserving first-seen pair order.
pub fn group_records(records: Vec<AlignedRecord>) -> Result<Vec<RecordPair>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_pair: BTreeMap<String, Vec<AlignedRecord>> = BTreeMap::new();
    for r in records {
        if !by_pair.contains_key(&r.pair_id) {
            order.push(r.pair_id.clone());
        }
        by_pair.entry(r.pair_id.clone()).or_default().push(r);
    }
    let mut pairs = Vec::with_capacity(order.len());
    for pid in order {
        let group = by_pair.remove(&pid).expect("ordered key");
        let mut baseline = None;
        let mut intervention = None;
        let mut spm = None;
        for r in group {
            match r.variant {
                Variant::Baseline => baseline = Some(r),
                Variant::Intervention => intervention = Some(r),
                Variant::Spm => spm = Some(r),
            }
        }
        let baseline = baseline
            .ok_or_else(|| Error::Consistency(format!("pair {pid} lacks a baseline record")))?;
        let intervention = intervention.ok_or_else(|| {
            Error::Consistency(format!("pair {pid} lacks an intervention record"))
        })?;
        pairs.push(RecordPair {
            pair_id: pid,
            baseline,
            intervention,
            spm,
        });
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// SQuAD v1 schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquadQa {
    pub id: String,
    pub question: String,
    pub answers: Vec<AnswerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquadParagraph {
    pub context: String,
    pub qas: Vec<SquadQa>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquadArticle {
    pub title: String,
    pub paragraphs: Vec<SquadParagraph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquadFile {
    pub version: String,
    /// Non-standard marker recording the offset convention; external files
    /// lacking it are assumed to use scalar-value offsets.
    #[serde(default = "default_offset_unit")]
    pub offset_unit: String,
    pub data: Vec<SquadArticle>,
}

fn default_offset_unit() -> String {
    OFFSET_UNIT.to_string()
}

impl SquadFile {
    pub fn empty() -> SquadFile {
        SquadFile {
            version: "1.1".to_string(),
            offset_unit: OFFSET_UNIT.to_string(),
            data: Vec::new(),
        }
    }

    pub fn instance_count(&self) -> usize {
        self.data
            .iter()
            .flat_map(|a| &a.paragraphs)
            .map(|p| p.qas.len())
            .sum()
    }
}

fn record_to_article(records: &[&AlignedRecord]) -> Result<SquadArticle> {
    let mut paragraphs = Vec::new();
    for r in records {
        r.check_offsets()?;
        paragraphs.push(SquadParagraph {
            context: r.passage.clone(),
            qas: vec![SquadQa {
                id: r.instance_id.clone(),
                question: r.question.clone(),
                answers: r.answers.clone(),
            }],
        });
    }
    Ok(SquadArticle {
        title: records[0].pair_id.clone(),
        paragraphs,
    })
}

/// Convert records to the nested SQuAD v1 structure, one article per pair
/// and one paragraph per instance. Instance ids follow the
/// `{pair_id}-{variant}` convention so predictions can be scored
/// per-variant without a side table.
pub fn to_squad(records: &[AlignedRecord]) -> Result<SquadFile> {
    let mut file = SquadFile::empty();
    let mut current: Vec<&AlignedRecord> = Vec::new();
    for r in records {
        if let Some(first) = current.first() {
            if first.pair_id != r.pair_id {
                file.data.push(record_to_article(&current)?);
                current.clear();
            }
        }
        current.push(r);
    }
    if !current.is_empty() {
        file.data.push(record_to_article(&current)?);
    }
    Ok(file)
}

pub fn write_squad(file: &SquadFile) -> Result<String> {
    Ok(serde_json::to_string_pretty(file)?)
}

pub fn read_squad(content: &str, path: &str) -> Result<SquadFile> {
    serde_json::from_str(content).map_err(|e| Error::parse(path, 1, e.to_string()))
}

// ---------------------------------------------------------------------------
// Corpus format
// ---------------------------------------------------------------------------

pub fn write_corpus_jsonl(corpus: &AnnotatedCorpus) -> Result<String> {
    let mut out = serde_json::to_string(&FileHeader::new(CORPUS_FORMAT))?;
    out.push('\n');
    for p in &corpus.passages {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_corpus_jsonl(content: &str, path: &str) -> Result<AnnotatedCorpus> {
    let mut lines = content.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 0, "empty file"))?;
    let header: FileHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::parse(path, 1, format!("bad header: {e}")))?;
    header.expect(CORPUS_FORMAT, path)?;
    let mut passages: Vec<CorpusPassage> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        passages.push(
            serde_json::from_str(line).map_err(|e| Error::parse(path, idx + 1, e.to_string()))?,
        );
    }
    let corpus = AnnotatedCorpus { passages };
    corpus.validate()?;
    Ok(corpus)
}

// ---------------------------------------------------------------------------
// Prediction files
// ---------------------------------------------------------------------------

/// A prediction file is a single JSON object mapping instance id to answer.
pub fn read_predictions(content: &str, path: &str) -> Result<BTreeMap<String, String>> {
    serde_json::from_str(content).map_err(|e| Error::parse(path, 1, e.to_string()))
}

pub fn write_predictions(preds: &BTreeMap<String, String>) -> Result<String> {
    Ok(serde_json::to_string_pretty(preds)?)
}
