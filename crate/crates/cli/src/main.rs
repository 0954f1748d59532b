//! samforge: build and score contrastive reading-comprehension challenge
//! sets from the command line.
//!
//! Exit codes: 0 on success, 2 for usage errors, 3 for data/consistency
//! errors, 4 for undefined metrics. Every command writes a machine-readable
//! run manifest (config echo, tool version, output hashes) next to its
//! output file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use samforge_core::grammar::{Grammar, Partition};
use samforge_core::metrics::{score_pairs, CorrectnessRule, PredictionSet, ScoreOptions};
use samforge_core::modify::SamCategory;
use samforge_core::pipeline::{
    corpus_from_pairs, generate_challenge_set, make_holdout_split, mix_augmentation,
    GenerationConfig, MixFractions, SplitAxis, SplitPolicy,
};
use samforge_core::predictors::{run_predictor, PredictorMode};
use samforge_core::quality::{quality_report, JaccardSampling, QualityOptions};
use samforge_core::world::QType;
use samforge_core::{
    group_records, read_aligned_jsonl, read_corpus_jsonl, read_predictions, read_squad,
    records_from_pairs, write_aligned_jsonl, write_corpus_jsonl, write_predictions, write_squad,
    to_squad, Error,
};

#[derive(Parser)]
#[command(name = "samforge", version, about = "Contrastive challenge-set generator and scorer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a challenge set of aligned pairs.
    Generate(GenerateArgs),
    /// Split pairs into augmentation and evaluation sides along one axis.
    Split(SplitArgs),
    /// Mix challenge instances into a SQuAD-format training file.
    Mix(MixArgs),
    /// Convert an aligned-jsonl file to another format.
    Export(ExportArgs),
    /// Score a prediction file against aligned pairs.
    Score(ScoreArgs),
    /// Compute corpus quality indices.
    Quality(QualityArgs),
    /// Run a scripted reference predictor over a challenge set.
    OracleRun(OracleRunArgs),
}

fn parse_list<T, F: Fn(&str) -> Result<T, Error>>(s: &str, f: F) -> Result<Vec<T>, Error> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(f)
        .collect()
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    /// Master seed; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of aligned pairs to generate.
    #[arg(long)]
    pairs: usize,
    /// SAM counts per intervention passage, e.g. "1" or "2,3".
    #[arg(long, default_value = "1,2,3")]
    num_sam: String,
    /// Enabled SAM categories.
    #[arg(
        long,
        default_value = "adverbial-modifier,explicit-negation,implicit-negation-verb,modal-intent"
    )]
    categories: String,
    /// Enabled question types.
    #[arg(
        long,
        default_value = "argmax-distance,argmin-distance,first-scorer,last-scorer,distance-of-named-event,agent-of-ordinal-event"
    )]
    qtypes: String,
    /// Template partition feeding this build.
    #[arg(long, default_value = "challenge")]
    partition: String,
    /// Generate SPM control instances where applicable.
    #[arg(long, default_value_t = true)]
    spm: bool,
    /// Probability of a leading filler sentence.
    #[arg(long, default_value_t = 0.0)]
    fillers: f64,
    /// Custom template file (tab-separated); defaults to the built-in grammar.
    #[arg(long, requires = "lexicon")]
    templates: Option<PathBuf>,
    /// Custom lexicon file (tab-separated).
    #[arg(long, requires = "templates")]
    lexicon: Option<PathBuf>,
    /// Output format.
    #[arg(long, default_value = "aligned-jsonl")]
    format: String,
    /// Also write the baseline passages as an annotated corpus.
    #[arg(long)]
    corpus_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SplitArgs {
    /// Aligned-jsonl challenge set.
    #[arg(long)]
    pairs: PathBuf,
    /// Split axis: qtype, sam, or num-sam.
    #[arg(long)]
    split_axis: String,
    /// Axis values for the augmentation side, comma-separated.
    #[arg(long)]
    train_side: String,
    /// Axis values for the evaluation side, comma-separated.
    #[arg(long)]
    eval_side: String,
    /// Output prefix; writes <out>.train.jsonl and <out>.eval.jsonl.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct MixArgs {
    /// Base training file (SQuAD v1 JSON).
    #[arg(long)]
    base: PathBuf,
    /// Aligned-jsonl challenge set supplying the mixed-in instances.
    #[arg(long)]
    pairs: PathBuf,
    /// Number of instances to mix in.
    #[arg(long)]
    take: usize,
    /// baseline:intervention fractions, e.g. "0:1" or "0.5:0.5".
    #[arg(long, default_value = "0:1")]
    mix: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ExportArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Target format: aligned-jsonl or squad-v1.
    #[arg(long, default_value = "squad-v1")]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ScoreArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Prediction file: one JSON object mapping instance id to answer.
    #[arg(long)]
    preds: PathBuf,
    /// Significance level for confidence half-widths.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Correctness rule for B+/I+ membership: "em" or "f1:<threshold>".
    #[arg(long, default_value = "em")]
    rule: String,
    /// Truncate predictions to this many tokens before scoring.
    #[arg(long, default_value_t = 10)]
    answer_token_limit: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct QualityArgs {
    /// Annotated corpus (samforge-corpus-jsonl).
    #[arg(long)]
    corpus: PathBuf,
    /// Subsample the pairwise Jaccard to this many pairs.
    #[arg(long)]
    jaccard_sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    jaccard_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct OracleRunArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Predictor: "perfect" or "sam-blind".
    #[arg(long)]
    mode: String,
    #[arg(long)]
    out: PathBuf,
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct OutputDigest {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct RunManifest {
    tool: String,
    version: String,
    command: String,
    config: serde_json::Value,
    outputs: Vec<OutputDigest>,
}

struct Outputs {
    digests: Vec<OutputDigest>,
}

impl Outputs {
    fn new() -> Outputs {
        Outputs { digests: Vec::new() }
    }

    fn write(&mut self, path: &Path, content: &str) -> Result<(), Error> {
        std::fs::write(path, content)?;
        let digest = Sha256::digest(content.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.digests.push(OutputDigest {
            path: path.to_string_lossy().to_string(),
            sha256: hex,
            bytes: content.len(),
        });
        Ok(())
    }

    fn finish(
        self,
        anchor: &Path,
        command: &str,
        config: serde_json::Value,
    ) -> Result<(), Error> {
        let manifest = RunManifest {
            tool: "samforge".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            outputs: self.digests,
        };
        let path = manifest_path(anchor);
        std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

// ---------------------------------------------------------------------------
// Command implementations
// ---------------------------------------------------------------------------

fn load_grammar(templates: &Option<PathBuf>, lexicon: &Option<PathBuf>) -> Result<Grammar, Error> {
    match (templates, lexicon) {
        (Some(t), Some(l)) => Grammar::load(t, l),
        _ => Ok(Grammar::builtin()),
    }
}

fn run_generate(args: &GenerateArgs) -> Result<(), Error> {
    let grammar = load_grammar(&args.templates, &args.lexicon)?;
    let num_sam = parse_list(&args.num_sam, |s| {
        s.parse::<u32>()
            .map_err(|_| Error::Config(format!("bad num-sam value '{s}'")))
    })?;
    let config = GenerationConfig {
        master_seed: args.seed,
        n_pairs: args.pairs,
        num_sam_weights: num_sam.into_iter().map(|k| (k, 1.0)).collect(),
        categories: parse_list(&args.categories, SamCategory::parse)?,
        qtypes: parse_list(&args.qtypes, QType::parse)?,
        partition: Partition::parse(&args.partition)?,
        spm_enabled: args.spm,
        filler_prob: args.fillers,
        ..GenerationConfig::default()
    };
    let pairs = generate_challenge_set(&grammar, &config)?;
    let records = records_from_pairs(&pairs);

    let mut outputs = Outputs::new();
    match args.format.as_str() {
        "aligned-jsonl" => outputs.write(&args.out, &write_aligned_jsonl(&records)?)?,
        "squad-v1" => outputs.write(&args.out, &write_squad(&to_squad(&records)?)?)?,
        other => return Err(Error::Config(format!("unknown format '{other}'"))),
    }
    if let Some(corpus_out) = &args.corpus_out {
        let corpus = corpus_from_pairs(&pairs, samforge_core::modify::Variant::Baseline);
        outputs.write(corpus_out, &write_corpus_jsonl(&corpus)?)?;
    }
    outputs.finish(&args.out, "generate", serde_json::to_value(args)?)?;
    Ok(())
}

fn load_pairs(path: &Path) -> Result<Vec<samforge_core::RecordPair>, Error> {
    let content = std::fs::read_to_string(path)?;
    group_records(read_aligned_jsonl(&content, &path.to_string_lossy())?)
}

fn run_split(args: &SplitArgs) -> Result<(), Error> {
    let pairs = load_pairs(&args.pairs)?;
    let policy = SplitPolicy::new(
        SplitAxis::parse(&args.split_axis)?,
        parse_list(&args.train_side, |s| Ok(s.to_string()))?,
        parse_list(&args.eval_side, |s| Ok(s.to_string()))?,
    )?;
    let outcome = make_holdout_split(&pairs, &policy)?;

    let flatten = |side: &[samforge_core::RecordPair]| {
        side.iter().flat_map(|p| p.records().cloned()).collect::<Vec<_>>()
    };
    let mut outputs = Outputs::new();
    let train_path = args.out.with_file_name(format!(
        "{}.train.jsonl",
        args.out.file_name().unwrap_or_default().to_string_lossy()
    ));
    let eval_path = args.out.with_file_name(format!(
        "{}.eval.jsonl",
        args.out.file_name().unwrap_or_default().to_string_lossy()
    ));
    outputs.write(&train_path, &write_aligned_jsonl(&flatten(&outcome.augmentation))?)?;
    outputs.write(&eval_path, &write_aligned_jsonl(&flatten(&outcome.evaluation))?)?;
    if outcome.dropped > 0 {
        eprintln!(
            "note: {} pairs straddle the split sides and were dropped",
            outcome.dropped
        );
    }
    outputs.finish(&args.out, "split", serde_json::to_value(args)?)?;
    Ok(())
}

fn parse_mix(s: &str) -> Result<MixFractions, Error> {
    let (b, i) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("mix '{s}' must look like '0.5:0.5'")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad mix fraction '{v}'")))
    };
    let fractions = MixFractions {
        baseline: parse(b)?,
        intervention: parse(i)?,
    };
    fractions.validate()?;
    Ok(fractions)
}

fn run_mix(args: &MixArgs) -> Result<(), Error> {
    let base_content = std::fs::read_to_string(&args.base)?;
    let base = read_squad(&base_content, &args.base.to_string_lossy())?;
    let pairs = load_pairs(&args.pairs)?;
    let outcome = mix_augmentation(&base, &pairs, args.take, parse_mix(&args.mix)?, args.seed)?;

    let mut outputs = Outputs::new();
    outputs.write(&args.out, &write_squad(&outcome.merged)?)?;
    let mix_manifest_path = args.out.with_file_name(format!(
        "{}.mix-manifest.json",
        args.out.file_name().unwrap_or_default().to_string_lossy()
    ));
    outputs.write(
        &mix_manifest_path,
        &serde_json::to_string_pretty(&outcome.manifest)?,
    )?;
    outputs.finish(&args.out, "mix", serde_json::to_value(args)?)?;
    Ok(())
}

fn run_export(args: &ExportArgs) -> Result<(), Error> {
    let content = std::fs::read_to_string(&args.pairs)?;
    let records = read_aligned_jsonl(&content, &args.pairs.to_string_lossy())?;
    let mut outputs = Outputs::new();
    match args.format.as_str() {
        "aligned-jsonl" => outputs.write(&args.out, &write_aligned_jsonl(&records)?)?,
        "squad-v1" => outputs.write(&args.out, &write_squad(&to_squad(&records)?)?)?,
        other => return Err(Error::Config(format!("unknown format '{other}'"))),
    }
    outputs.finish(&args.out, "export", serde_json::to_value(args)?)?;
    Ok(())
}

fn parse_rule(s: &str) -> Result<CorrectnessRule, Error> {
    if s == "em" {
        return Ok(CorrectnessRule::ExactMatch);
    }
    if let Some(t) = s.strip_prefix("f1:") {
        let threshold = t
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad F1 threshold '{t}'")))?;
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("F1 threshold {threshold} outside [0, 1]")));
        }
        return Ok(CorrectnessRule::F1Threshold(threshold));
    }
    if s == "f1" {
        return Ok(CorrectnessRule::F1Threshold(0.8));
    }
    Err(Error::Config(format!(
        "unknown rule '{s}' (expected em, f1, or f1:<threshold>)"
    )))
}

fn run_score(args: &ScoreArgs) -> Result<(), Error> {
    let pairs = load_pairs(&args.pairs)?;
    let preds_content = std::fs::read_to_string(&args.preds)?;
    let answers = read_predictions(&preds_content, &args.preds.to_string_lossy())?;
    let preds = PredictionSet::new(answers, args.preds.to_string_lossy());
    let gold: Vec<_> = pairs.iter().map(|p| p.to_gold()).collect();
    let opts = ScoreOptions {
        rule: parse_rule(&args.rule)?,
        alpha: args.alpha,
        answer_token_limit: Some(args.answer_token_limit),
    };
    let report = score_pairs(&gold, &preds, &opts)?;
    let mut outputs = Outputs::new();
    outputs.write(&args.out, &serde_json::to_string_pretty(&report)?)?;
    outputs.finish(&args.out, "score", serde_json::to_value(args)?)?;
    let spm = report
        .acc_spm
        .map(|a| format!("  acc_spm {a:.4}"))
        .unwrap_or_default();
    println!(
        "pairs {}  acc_b {:.4}  acc_i {:.4}  consistency {:.4}  dice {}{spm}",
        report.n_pairs,
        report.acc_baseline,
        report.acc_intervention,
        report.joint,
        report
            .dice
            .map(|d| format!("{d:.4}"))
            .unwrap_or_else(|| "undefined".to_string()),
    );
    Ok(())
}

fn run_quality(args: &QualityArgs) -> Result<(), Error> {
    let content = std::fs::read_to_string(&args.corpus)?;
    let corpus = read_corpus_jsonl(&content, &args.corpus.to_string_lossy())?;
    let opts = QualityOptions {
        jaccard_sampling: args.jaccard_sample.map(|max_pairs| JaccardSampling {
            max_pairs,
            seed: args.jaccard_seed,
        }),
    };
    let report = quality_report(&corpus, &opts)?;
    let mut outputs = Outputs::new();
    outputs.write(&args.out, &serde_json::to_string_pretty(&report)?)?;
    outputs.finish(&args.out, "quality", serde_json::to_value(args)?)?;
    println!(
        "passages {}  m1 {:.4}  m2 {:.4}  m3 {:.4}  m4 {:.4}  jaccard {:.4}",
        report.passage_count,
        report.m1_adjacent_sentence_similarity,
        report.m2_type_token_ratio,
        report.m3_adjacent_verb_overlap,
        report.m4_pronoun_noun_ratio,
        report.lexical_diversity_jaccard,
    );
    Ok(())
}

fn run_oracle_run(args: &OracleRunArgs) -> Result<(), Error> {
    let pairs = load_pairs(&args.pairs)?;
    let preds = run_predictor(&pairs, PredictorMode::parse(&args.mode)?);
    let mut outputs = Outputs::new();
    outputs.write(&args.out, &write_predictions(&preds)?)?;
    outputs.finish(&args.out, "oracle-run", serde_json::to_value(args)?)?;
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::UndefinedMetric(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => run_generate(args),
        Command::Split(args) => run_split(args),
        Command::Mix(args) => run_mix(args),
        Command::Export(args) => run_export(args),
        Command::Score(args) => run_score(args),
        Command::Quality(args) => run_quality(args),
        Command::OracleRun(args) => run_oracle_run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("samforge: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
