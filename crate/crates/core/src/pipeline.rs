//! Stage orchestration with file-based handoff.
//!
//! Each stage reads and writes JSON/JSONL files and a manifest, so stages can
//! be re-run, swapped, or resumed independently:
//!
//! - analyze: interaction logs → behavior profile
//! - plan: profile → production plan
//! - produce: plan + corpus + pool → session traces + retry queue
//! - judge: traces + pool → dataset + scorecards + retry queue
//! - report: dataset + scorecards + plan → metrics report
//!
//! Output files are written whole to a temp file and renamed, so partial
//! lines are impossible. The judge stage appends idempotently keyed by query
//! id: restarting it never duplicates an admitted example. Counts in each
//! manifest satisfy conservation (admitted + requeued + dropped = judged).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analyst::{
    build_profile, classify_model_dims, classify_rule_dims, make_production_plan, BehaviorProfile,
    ClassifierConfig, LabeledInteraction, ModelClassification, PlanConfig, ProductionPlan,
};
use crate::confgen::{
    build_configuration, build_corpus_index, filter_query, generate_query, sample_repository,
    slice_context, synth_error_message, wants_error_payload, CodeContext, RepoCorpusIndex,
};
use crate::exec::{map_batch, map_batch_seq};
use crate::gateway::Gateway;
use crate::harness::{run_session, DialogueSession, QueryAbort};
use crate::judge::{
    apply_deductions, score_response, select_training_example, CandidateRef, DeductionContext,
    JudgeConfig, ScoreCard, Selection,
};
use crate::metrics::{accuracy5, distribution_distance, psr, ur, MetricsReport};
use crate::taxonomy::{LabelSet, LanguageRegistry, Provenance, QaInteraction, TrainingExample};

pub const DEFAULT_MAX_ROUNDS: u32 = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("io {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}:{line}: invalid record: {detail}")]
    InvalidRecord {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("input {0} is empty")]
    EmptyInput(String),
    #[error("conservation violated: {0}")]
    Conservation(String),
    #[error("manifest digest mismatch for {0}")]
    DigestMismatch(String),
    #[error(transparent)]
    Analyst(#[from] crate::analyst::AnalystError),
    #[error(transparent)]
    Confgen(#[from] crate::confgen::ConfgenError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// File IO: JSONL, atomic writes, digests
// ---------------------------------------------------------------------------

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let raw = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut items = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| PipelineError::InvalidRecord {
            path: path.display().to_string(),
            line: idx + 1,
            detail: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<String, PipelineError> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy())
        .unwrap_or_default();
    let tmp = parent.join(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(sha256_bytes(bytes))
}

/// Writes records as JSONL in one atomic rename; returns the content digest.
pub fn write_jsonl_atomic<T: Serialize>(path: &Path, items: &[T]) -> Result<String, PipelineError> {
    let mut bytes = Vec::new();
    for item in items {
        serde_json::to_writer(&mut bytes, item).map_err(|e| PipelineError::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        bytes.push(b'\n');
    }
    atomic_write(path, &bytes)
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<String, PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| PipelineError::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let raw = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&raw).map_err(|e| PipelineError::Json {
        path: path.display().to_string(),
        source: e,
    })
}

fn sha256_bytes(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(sha256_bytes(&bytes))
}

// ---------------------------------------------------------------------------
// Manifests and shared records
// ---------------------------------------------------------------------------

/// Per-stage counters. A stage fills the ones that apply to it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    #[serde(default)]
    pub planned: u64,
    #[serde(default)]
    pub classified: u64,
    #[serde(default)]
    pub unclassified: u64,
    #[serde(default)]
    pub generated: u64,
    #[serde(default)]
    pub filtered_out: u64,
    #[serde(default)]
    pub sessions_ok: u64,
    #[serde(default)]
    pub judged: u64,
    #[serde(default)]
    pub admitted: u64,
    #[serde(default)]
    pub requeued: u64,
    #[serde(default)]
    pub dropped: u64,
}

/// What a stage ran on and what it produced: digests for every input and
/// output file plus the stage counters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub seed: u64,
    pub stage: String,
    pub stage_version: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub counts: StageCounts,
}

impl RunManifest {
    fn new(stage: &str, version: &str, run_id: String, seed: u64) -> Self {
        RunManifest {
            run_id,
            seed,
            stage: stage.to_string(),
            stage_version: version.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            counts: StageCounts::default(),
        }
    }

    /// Re-hashes every referenced file and compares against the recorded
    /// digests.
    pub fn verify_digests(&self) -> Result<(), PipelineError> {
        for (path, digest) in self.inputs.iter().chain(self.outputs.iter()) {
            if sha256_file(Path::new(path))? != *digest {
                return Err(PipelineError::DigestMismatch(path.clone()));
            }
        }
        Ok(())
    }

    /// Judge-stage conservation: every judged query is admitted, requeued,
    /// or dropped — exactly one of the three.
    pub fn check_conservation(&self) -> Result<(), PipelineError> {
        let sum = self.counts.admitted + self.counts.requeued + self.counts.dropped;
        if sum != self.counts.judged {
            return Err(PipelineError::Conservation(format!(
                "admitted {} + requeued {} + dropped {} != judged {}",
                self.counts.admitted, self.counts.requeued, self.counts.dropped, self.counts.judged
            )));
        }
        Ok(())
    }

    fn write_next_to(&self, primary_output: &Path) -> Result<PathBuf, PipelineError> {
        let dir = primary_output.parent().unwrap_or_else(|| Path::new("."));
        let path = dir.join(format!("{}.manifest.json", self.stage));
        write_json_atomic(&path, self)?;
        Ok(path)
    }
}

fn derive_run_id(stage: &str, seed: u64, primary_input_digest: &str) -> String {
    let prefix: String = primary_input_digest.chars().take(8).collect();
    format!("{stage}-{seed:08x}-{prefix}")
}

/// One queued query: either retryable in the next production round or
/// terminally dropped with the reason on record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequeueEntry {
    pub query_id: String,
    pub round: u32,
    pub reason: String,
    pub labels: LabelSet,
    #[serde(default)]
    pub dropped: bool,
}

/// One produced session as persisted in traces.jsonl.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub query_id: String,
    pub round: u32,
    pub dialogue: DialogueSession,
}

fn unit_seed(seed: u64, key: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn run_units<T, U, F>(sequential: bool, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    if sequential {
        map_batch_seq(items, f)
    } else {
        map_batch(items, f)
    }
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    pub run_id: Option<String>,
    pub sequential: bool,
}

/// Labels every logged interaction (rules + model) and writes the behavior
/// profile. Interactions the classifier endpoint cannot label are skipped
/// and counted.
pub fn stage_analyze(
    logs_path: &Path,
    out_profile: &Path,
    gateway: &Gateway,
    options: &AnalyzeOptions,
) -> Result<RunManifest, PipelineError> {
    let interactions: Vec<QaInteraction> = read_jsonl(logs_path)?;
    if interactions.is_empty() {
        return Err(PipelineError::EmptyInput(logs_path.display().to_string()));
    }
    for (idx, interaction) in interactions.iter().enumerate() {
        let violations = interaction.validate();
        if !violations.is_empty() {
            return Err(PipelineError::InvalidRecord {
                path: logs_path.display().to_string(),
                line: idx + 1,
                detail: violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            });
        }
    }

    let classifier = ClassifierConfig::default();
    let outcomes = run_units(options.sequential, interactions, |interaction| {
        let rule = classify_rule_dims(&interaction, &classifier);
        match classify_model_dims(&interaction, gateway) {
            ModelClassification::Labeled(model) => Ok(LabeledInteraction {
                id: interaction.id,
                rule,
                model,
            }),
            ModelClassification::Unclassified { cause } => Err(cause),
        }
    });

    let mut labeled = Vec::new();
    let mut unclassified = 0u64;
    for outcome in outcomes {
        match outcome {
            Ok(item) => labeled.push(item),
            Err(_) => unclassified += 1,
        }
    }
    let profile = build_profile(&labeled)?;
    profile.validate()?;

    let input_digest = sha256_file(logs_path)?;
    let run_id = options
        .run_id
        .clone()
        .unwrap_or_else(|| derive_run_id("analyze", 0, &input_digest));
    let mut manifest = RunManifest::new("analyze", "1", run_id, 0);
    manifest
        .inputs
        .insert(logs_path.display().to_string(), input_digest);
    let out_digest = write_json_atomic(out_profile, &profile)?;
    manifest
        .outputs
        .insert(out_profile.display().to_string(), out_digest);
    manifest.counts.planned = (labeled.len() as u64) + unclassified;
    manifest.counts.classified = labeled.len() as u64;
    manifest.counts.unclassified = unclassified;
    manifest.write_next_to(out_profile)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct PlanOptions {
    pub run_id: Option<String>,
    pub plan_config: Option<PlanConfig>,
}

/// Samples a production plan from a profile and writes plan.json.
pub fn stage_plan(
    profile_path: &Path,
    total: u64,
    seed: u64,
    out_plan: &Path,
    options: &PlanOptions,
) -> Result<RunManifest, PipelineError> {
    let profile: BehaviorProfile = read_json(profile_path)?;
    profile.validate()?;
    let plan_config = options.plan_config.clone().unwrap_or_default();
    let plan = make_production_plan(&profile, total, seed, &plan_config)?;

    let input_digest = sha256_file(profile_path)?;
    let run_id = options
        .run_id
        .clone()
        .unwrap_or_else(|| derive_run_id("plan", seed, &input_digest));
    let mut manifest = RunManifest::new("plan", "1", run_id, seed);
    manifest
        .inputs
        .insert(profile_path.display().to_string(), input_digest);
    let out_digest = write_json_atomic(out_plan, &plan)?;
    manifest
        .outputs
        .insert(out_plan.display().to_string(), out_digest);
    manifest.counts.planned = plan.total;
    manifest.write_next_to(out_plan)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// produce
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ProduceOptions {
    pub work_root: PathBuf,
    pub keep_workspaces: bool,
    pub sequential: bool,
    pub run_id: Option<String>,
    pub requeue_in: Option<PathBuf>,
    pub max_rounds: u32,
    pub registry: LanguageRegistry,
}

impl Default for ProduceOptions {
    fn default() -> Self {
        ProduceOptions {
            work_root: std::env::temp_dir().join("qaforge-work"),
            keep_workspaces: false,
            sequential: false,
            run_id: None,
            requeue_in: None,
            max_rounds: DEFAULT_MAX_ROUNDS,
            registry: LanguageRegistry::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct QueryUnit {
    query_id: String,
    round: u32,
    labels: LabelSet,
}

enum UnitOutcome {
    Session(Box<SessionTrace>),
    /// Retryable failure: back to the queue at the same round.
    Requeue {
        unit: QueryUnit,
        reason: String,
    },
    /// Terminal failure, counted `filtered_out` when the query filter said no.
    Filtered {
        unit: QueryUnit,
        reason: String,
    },
    /// Terminal failure for anything else (corpus gaps, bad configs).
    Dropped {
        unit: QueryUnit,
        reason: String,
    },
}

/// Loads a corpus from either a directory tree (indexed on the fly) or a
/// previously written index JSON.
pub fn load_corpus(
    path: &Path,
    registry: &LanguageRegistry,
) -> Result<RepoCorpusIndex, PipelineError> {
    let index = if path.is_dir() {
        build_corpus_index(path, registry)?
    } else {
        let index: RepoCorpusIndex = read_json(path)?;
        index.validate(registry)?;
        index
    };
    Ok(index)
}

fn produce_unit(
    unit: QueryUnit,
    seed: u64,
    corpus: &RepoCorpusIndex,
    gateway: &Gateway,
    options: &ProduceOptions,
) -> UnitOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(unit_seed(
        seed,
        &format!("{}#r{}", unit.query_id, unit.round),
    ));
    let labels = unit.labels.clone();

    let picked = match sample_repository(&labels, corpus, &mut rng) {
        Ok(picked) => picked,
        Err(e) => {
            return UnitOutcome::Dropped {
                unit,
                reason: e.to_string(),
            }
        }
    };
    let (pick, cursor) = match picked {
        Some((pick, cursor)) => (Some(pick), cursor),
        None => (None, crate::taxonomy::CursorSpec::None),
    };

    let context = match &pick {
        Some(pick) => {
            let abs = corpus.file_abs(&pick.repo_id, &pick.path);
            match std::fs::read_to_string(&abs) {
                Ok(content) => slice_context(&content, &cursor),
                Err(e) => {
                    return UnitOutcome::Dropped {
                        unit,
                        reason: format!("reading {}: {e}", abs.display()),
                    }
                }
            }
        }
        None => CodeContext::default(),
    };

    let error_message = wants_error_payload(&labels).then(|| {
        synth_error_message(
            labels.programming_language.as_str(),
            pick.as_ref().map(|p| p.line_count).unwrap_or(100),
            &mut rng,
        )
    });

    // Opening query: generate then filter, three attempts.
    let mut opening = None;
    let mut last_rationale = String::new();
    for _ in 0..3 {
        let query = match generate_query(
            &labels,
            0,
            &context,
            error_message.as_deref(),
            &[],
            gateway,
            &mut rng,
        ) {
            Ok(query) => query,
            Err(e) => {
                return UnitOutcome::Requeue {
                    unit,
                    reason: e.to_string(),
                }
            }
        };
        let verdict = filter_query(&query, &labels, gateway);
        if verdict.pass {
            opening = Some(query);
            break;
        }
        last_rationale = verdict.rationale;
    }
    let Some(opening) = opening else {
        return UnitOutcome::Filtered {
            unit,
            reason: format!("query filter rejected 3 attempts: {last_rationale}"),
        };
    };

    let config = build_configuration(
        unit.query_id.clone(),
        labels.clone(),
        pick.as_ref(),
        cursor,
        opening,
        error_message,
    );
    let violations = config.validate();
    if !violations.is_empty() {
        let detail = violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return UnitOutcome::Dropped {
            unit,
            reason: format!("invalid configuration: {detail}"),
        };
    }

    let rng_cell = std::cell::RefCell::new(rng);
    let result = run_session(
        &config,
        corpus,
        &options.work_root,
        gateway,
        options.keep_workspaces,
        |turn_index, session| {
            let mut rng = rng_cell.borrow_mut();
            for _ in 0..3 {
                let query = generate_query(
                    &labels,
                    turn_index,
                    &session.current_context(),
                    None,
                    session.transcript(),
                    gateway,
                    &mut rng,
                )
                .map_err(|e| QueryAbort {
                    reason: e.to_string(),
                    terminal: false,
                })?;
                let verdict = filter_query(&query, &labels, gateway);
                if verdict.pass {
                    return Ok(query);
                }
            }
            Err(QueryAbort {
                reason: "query filter rejected 3 follow-up attempts".into(),
                terminal: true,
            })
        },
    );
    match result {
        Ok(dialogue) => UnitOutcome::Session(Box::new(SessionTrace {
            query_id: unit.query_id,
            round: unit.round,
            dialogue,
        })),
        Err(failure) if failure.terminal => UnitOutcome::Filtered {
            unit,
            reason: format!("turn {}: {}", failure.turn, failure.reason),
        },
        Err(failure) => UnitOutcome::Requeue {
            unit,
            reason: format!("turn {}: {}", failure.turn, failure.reason),
        },
    }
}

/// Expands the plan (plus any requeued queries) into sessions.
pub fn stage_produce(
    plan_path: &Path,
    corpus_path: &Path,
    gateway: &Gateway,
    seed: u64,
    out_traces: &Path,
    out_requeue: &Path,
    options: &ProduceOptions,
) -> Result<RunManifest, PipelineError> {
    let plan: ProductionPlan = read_json(plan_path)?;
    plan.validate()?;
    let corpus = load_corpus(corpus_path, &options.registry)?;

    let mut units = Vec::with_capacity(plan.total as usize);
    for (item_idx, item) in plan.items.iter().enumerate() {
        for copy in 0..item.count {
            units.push(QueryUnit {
                query_id: format!("q-{seed:08x}-{item_idx:05}-{copy:04}"),
                round: 0,
                labels: item.labels.clone(),
            });
        }
    }
    let mut dropped_entries: Vec<RequeueEntry> = Vec::new();
    if let Some(requeue_path) = &options.requeue_in {
        let entries: Vec<RequeueEntry> = read_jsonl(requeue_path)?;
        for entry in entries {
            if entry.dropped {
                continue;
            }
            if entry.round >= options.max_rounds {
                dropped_entries.push(RequeueEntry {
                    reason: format!("round cap {} reached", options.max_rounds),
                    dropped: true,
                    ..entry
                });
                continue;
            }
            units.push(QueryUnit {
                query_id: entry.query_id,
                round: entry.round,
                labels: entry.labels,
            });
        }
    }

    let planned = units.len() as u64;
    let outcomes = run_units(options.sequential, units, |unit| {
        produce_unit(unit, seed, &corpus, gateway, options)
    });

    let mut traces: Vec<SessionTrace> = Vec::new();
    let mut requeue: Vec<RequeueEntry> = dropped_entries;
    let mut counts = StageCounts {
        planned,
        ..Default::default()
    };
    counts.dropped += requeue.len() as u64;
    for outcome in outcomes {
        match outcome {
            UnitOutcome::Session(trace) => {
                counts.generated += 1;
                counts.sessions_ok += 1;
                traces.push(*trace);
            }
            UnitOutcome::Requeue { unit, reason } => {
                counts.requeued += 1;
                requeue.push(RequeueEntry {
                    query_id: unit.query_id,
                    round: unit.round,
                    reason,
                    labels: unit.labels,
                    dropped: false,
                });
            }
            UnitOutcome::Filtered { unit, reason } => {
                counts.filtered_out += 1;
                requeue.push(RequeueEntry {
                    query_id: unit.query_id,
                    round: unit.round,
                    reason,
                    labels: unit.labels,
                    dropped: true,
                });
            }
            UnitOutcome::Dropped { unit, reason } => {
                counts.dropped += 1;
                requeue.push(RequeueEntry {
                    query_id: unit.query_id,
                    round: unit.round,
                    reason,
                    labels: unit.labels,
                    dropped: true,
                });
            }
        }
    }

    let plan_digest = sha256_file(plan_path)?;
    let run_id = options
        .run_id
        .clone()
        .unwrap_or_else(|| derive_run_id("produce", seed, &plan_digest));
    let mut manifest = RunManifest::new("produce", "1", run_id, seed);
    manifest
        .inputs
        .insert(plan_path.display().to_string(), plan_digest);
    manifest.outputs.insert(
        out_traces.display().to_string(),
        write_jsonl_atomic(out_traces, &traces)?,
    );
    manifest.outputs.insert(
        out_requeue.display().to_string(),
        write_jsonl_atomic(out_requeue, &requeue)?,
    );
    manifest.counts = counts;
    manifest.write_next_to(out_traces)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// judge
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct JudgeOptions {
    pub run_id: Option<String>,
    pub sequential: bool,
    pub max_rounds: u32,
    pub judge_config: JudgeConfig,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        JudgeOptions {
            run_id: None,
            sequential: false,
            max_rounds: DEFAULT_MAX_ROUNDS,
            judge_config: JudgeConfig::default(),
        }
    }
}

enum JudgeOutcome {
    Admit {
        trace: Box<SessionTrace>,
        cards: Vec<ScoreCard>,
        winner: usize,
        winner_text: String,
    },
    Requeue {
        trace: Box<SessionTrace>,
        cards: Vec<ScoreCard>,
        reason: String,
        next_round: bool,
    },
    AlreadyAdmitted,
}

fn judge_trace(trace: SessionTrace, gateway: &Gateway, config: &JudgeConfig) -> JudgeOutcome {
    let labels = &trace.dialogue.config.labels;
    let final_prompt = trace.dialogue.final_prompt().to_vec();
    let candidates = gateway.generate_candidates(&final_prompt);

    let ctx = DeductionContext {
        scene: labels.trigger_method,
        intent: labels.intent,
        selected_code: trace.dialogue.final_selected_code.as_deref(),
        system_locale: labels.system_locale,
        query_locale_requirement: labels.query_locale_requirement,
    };

    let mut scored = Vec::new();
    for candidate in candidates {
        if candidate.is_error() {
            continue; // never scored
        }
        let (base, rationale) = match score_response(&final_prompt, &candidate.text, gateway) {
            Ok(parsed) => parsed,
            Err(e) => {
                let cards = scored.into_iter().map(|(_, card)| card).collect();
                return JudgeOutcome::Requeue {
                    trace: Box::new(trace),
                    cards,
                    reason: e.to_string(),
                    next_round: false,
                };
            }
        };
        let deductions = apply_deductions(&candidate, &ctx, config);
        let card = ScoreCard::new(
            CandidateRef {
                query_id: trace.query_id.clone(),
                endpoint_id: candidate.endpoint_id.clone(),
            },
            base,
            rationale,
            deductions,
        );
        scored.push((candidate, card));
    }

    if scored.is_empty() {
        return JudgeOutcome::Requeue {
            trace: Box::new(trace),
            cards: Vec::new(),
            reason: "no pool candidate completed".into(),
            next_round: true,
        };
    }

    match select_training_example(&final_prompt, &scored, gateway) {
        Selection::Admit { index } => JudgeOutcome::Admit {
            trace: Box::new(trace),
            winner: index,
            winner_text: scored[index].0.text.clone(),
            cards: scored.into_iter().map(|(_, card)| card).collect::<Vec<_>>(),
        },
        Selection::Requeue => {
            let cards: Vec<ScoreCard> = scored.iter().map(|(_, card)| card.clone()).collect();
            JudgeOutcome::Requeue {
                trace: Box::new(trace),
                cards,
                reason: "no candidate reached a final score of 5".into(),
                next_round: true,
            }
        }
    }
}

/// Judges every produced session: pool fan-out, scoring, deductions,
/// selection. Admitted examples land in the dataset (idempotently, keyed by
/// query id); queries without a perfect candidate go to the retry queue
/// until the round cap.
pub fn stage_judge(
    traces_path: &Path,
    gateway: &Gateway,
    out_dataset: &Path,
    out_scorecards: &Path,
    out_requeue: &Path,
    options: &JudgeOptions,
) -> Result<RunManifest, PipelineError> {
    let traces: Vec<SessionTrace> = read_jsonl(traces_path)?;

    let mut existing: Vec<TrainingExample> = if out_dataset.exists() {
        read_jsonl(out_dataset)?
    } else {
        Vec::new()
    };
    let admitted_ids: BTreeSet<String> = existing
        .iter()
        .map(|e| e.provenance.query_id.clone())
        .collect();
    let existing_cards: Vec<ScoreCard> = if out_scorecards.exists() {
        read_jsonl(out_scorecards)?
    } else {
        Vec::new()
    };

    let judged = traces.len() as u64;
    let outcomes = run_units(options.sequential, traces, |trace| {
        if admitted_ids.contains(&trace.query_id) {
            return JudgeOutcome::AlreadyAdmitted;
        }
        judge_trace(trace, gateway, &options.judge_config)
    });

    let traces_digest = sha256_file(traces_path)?;
    let run_id = options
        .run_id
        .clone()
        .unwrap_or_else(|| derive_run_id("judge", 0, &traces_digest));

    let mut counts = StageCounts {
        judged,
        ..Default::default()
    };
    let mut new_examples: Vec<TrainingExample> = Vec::new();
    let mut new_cards: Vec<ScoreCard> = Vec::new();
    let mut requeue: Vec<RequeueEntry> = Vec::new();
    let mut seq = existing
        .iter()
        .map(|e| e.provenance.seq + 1)
        .max()
        .unwrap_or(0);

    for outcome in outcomes {
        match outcome {
            JudgeOutcome::AlreadyAdmitted => counts.admitted += 1,
            JudgeOutcome::Admit {
                trace,
                cards,
                winner,
                winner_text,
            } => {
                counts.admitted += 1;
                let card = cards[winner].clone();
                let example = TrainingExample {
                    config: trace.dialogue.config.clone(),
                    transcript: trace.dialogue.final_prompt().to_vec(),
                    response: winner_text,
                    endpoint_id: card.candidate.endpoint_id.clone(),
                    final_score: card.final_score,
                    rationale: card.rationale.clone(),
                    provenance: Provenance {
                        run_id: run_id.clone(),
                        query_id: trace.query_id.clone(),
                        round: trace.round,
                        seq,
                    },
                };
                seq += 1;
                new_cards.extend(cards);
                new_examples.push(example);
            }
            JudgeOutcome::Requeue {
                trace,
                cards,
                reason,
                next_round,
            } => {
                new_cards.extend(cards);
                let round = if next_round {
                    trace.round + 1
                } else {
                    trace.round
                };
                let dropped = next_round && round >= options.max_rounds;
                if dropped {
                    counts.dropped += 1;
                } else {
                    counts.requeued += 1;
                }
                requeue.push(RequeueEntry {
                    query_id: trace.query_id.clone(),
                    round,
                    reason: if dropped {
                        format!("round cap {} reached: {reason}", options.max_rounds)
                    } else {
                        reason
                    },
                    labels: trace.dialogue.config.labels.clone(),
                    dropped,
                });
            }
        }
    }

    existing.extend(new_examples);
    let mut all_cards = existing_cards;
    let seen: BTreeSet<(String, String)> = all_cards
        .iter()
        .map(|c| {
            (
                c.candidate.query_id.clone(),
                c.candidate.endpoint_id.clone(),
            )
        })
        .collect();
    all_cards.extend(new_cards.into_iter().filter(|c| {
        !seen.contains(&(
            c.candidate.query_id.clone(),
            c.candidate.endpoint_id.clone(),
        ))
    }));

    let mut manifest = RunManifest::new("judge", "1", run_id, 0);
    manifest
        .inputs
        .insert(traces_path.display().to_string(), traces_digest);
    manifest.outputs.insert(
        out_dataset.display().to_string(),
        write_jsonl_atomic(out_dataset, &existing)?,
    );
    manifest.outputs.insert(
        out_scorecards.display().to_string(),
        write_jsonl_atomic(out_scorecards, &all_cards)?,
    );
    manifest.outputs.insert(
        out_requeue.display().to_string(),
        write_jsonl_atomic(out_requeue, &requeue)?,
    );
    manifest.counts = counts;
    manifest.check_conservation()?;
    manifest.write_next_to(out_dataset)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// Optional human ground-truth score for one (query, endpoint) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HumanScore {
    pub query_id: String,
    pub endpoint_id: String,
    pub human_score: u8,
}

/// Computes the metrics report over a judged run.
pub fn stage_report(
    dataset_path: &Path,
    scorecards_path: &Path,
    plan_path: &Path,
    human_scores_path: Option<&Path>,
    out_report: Option<&Path>,
) -> Result<MetricsReport, PipelineError> {
    let dataset: Vec<TrainingExample> = read_jsonl(dataset_path)?;
    let cards: Vec<ScoreCard> = read_jsonl(scorecards_path)?;
    let plan: ProductionPlan = read_json(plan_path)?;

    let finals: Vec<u8> = cards.iter().map(|c| c.final_score).collect();
    let psr_value = psr(&finals).ok();
    let ur_value = ur(&finals).ok();

    let mut produced: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for example in &dataset {
        for dim in crate::taxonomy::Dimension::ALL {
            let entry = produced.entry(dim.name().to_string()).or_default();
            for key in example.config.labels.category_keys(dim) {
                *entry.entry(key).or_insert(0.0) += 1.0;
            }
        }
    }
    let per_dimension_l1 = distribution_distance(&plan.marginals(), &produced);

    let accuracy = match human_scores_path {
        Some(path) => {
            let human: Vec<HumanScore> = read_jsonl(path)?;
            let by_key: BTreeMap<(String, String), u8> = human
                .into_iter()
                .map(|h| ((h.query_id, h.endpoint_id), h.human_score))
                .collect();
            let pairs: Vec<(u8, u8)> = cards
                .iter()
                .filter_map(|c| {
                    by_key
                        .get(&(
                            c.candidate.query_id.clone(),
                            c.candidate.endpoint_id.clone(),
                        ))
                        .map(|h| (c.final_score, *h))
                })
                .collect();
            (!pairs.is_empty()).then(|| accuracy5(&pairs))
        }
        None => None,
    };

    let report = MetricsReport {
        scorecard_count: cards.len() as u64,
        dataset_size: dataset.len() as u64,
        psr: psr_value,
        ur: ur_value,
        accuracy5: accuracy,
        per_dimension_l1,
    };
    if let Some(out) = out_report {
        write_json_atomic(out, &report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{offline_pool_config, PoolConfig, StubReply, StubSpec};
    use crate::taxonomy::{
        CursorBehavior, DialogTurns, Difficulty, EditorSnapshot, InstructionType, Intent,
        LineRange, Locale, QueryLocaleRequirement, ReferenceRegion, ReferenceRegions,
        TriggerMethod,
    };
    use std::io::Write;

    fn fixture_corpus(dir: &Path) {
        for (name, lines) in [("demo/src/app.py", 120u32), ("demo/src/tool.py", 60)] {
            let path = dir.join(name);
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            let mut f = std::fs::File::create(&path).unwrap();
            for i in 1..=lines {
                writeln!(f, "value_{i} = compute({i})").unwrap();
            }
        }
    }

    fn plan_labels(turns: u32) -> LabelSet {
        LabelSet {
            cursor_behavior: CursorBehavior::SelectBlock,
            trigger_method: TriggerMethod::ChatView,
            instruction_type: InstructionType::Query,
            programming_language: LanguageRegistry::default().parse("python").unwrap(),
            system_locale: Locale::En,
            dialog_turns: DialogTurns::new(turns).unwrap(),
            query_locale_requirement: QueryLocaleRequirement::NoRequirement,
            reference_regions: ReferenceRegions::single(ReferenceRegion::SelectedCode),
            difficulty: Difficulty::Intermediate,
            intent: Intent::CodeExplanation,
        }
    }

    fn write_plan(dir: &Path, count: u64, turns: u32) -> PathBuf {
        let plan = ProductionPlan {
            total: count,
            seed: 1,
            items: vec![crate::analyst::PlanItem {
                count,
                labels: plan_labels(turns),
            }],
        };
        let path = dir.join("plan.json");
        write_json_atomic(&path, &plan).unwrap();
        path
    }

    fn gateway_with(score_weights: &[(u8, u32)]) -> Gateway {
        Gateway::from_config(offline_pool_config(score_weights)).unwrap()
    }

    fn produce_options(dir: &Path) -> ProduceOptions {
        ProduceOptions {
            work_root: dir.join("work"),
            ..Default::default()
        }
    }

    #[test]
    fn ten_item_plan_produces_ten_sessions_zero_requeued() {
        let dir = tempfile::tempdir().unwrap();
        fixture_corpus(dir.path());
        let plan = write_plan(dir.path(), 10, 1);
        let gateway = gateway_with(&[(5, 1)]);
        let manifest = stage_produce(
            &plan,
            dir.path(),
            &gateway,
            7,
            &dir.path().join("traces.jsonl"),
            &dir.path().join("requeue.jsonl"),
            &produce_options(dir.path()),
        )
        .unwrap();
        assert_eq!(manifest.counts.sessions_ok, 10);
        assert_eq!(manifest.counts.requeued, 0);
        let traces: Vec<SessionTrace> = read_jsonl(&dir.path().join("traces.jsonl")).unwrap();
        assert_eq!(traces.len(), 10);
    }

    #[test]
    fn failing_responder_requeues_every_session() {
        let dir = tempfile::tempdir().unwrap();
        fixture_corpus(dir.path());
        let plan = write_plan(dir.path(), 5, 1);
        let mut config: PoolConfig = offline_pool_config(&[(5, 1)]);
        config.endpoints.push(crate::gateway::EndpointConfig {
            endpoint: crate::gateway::ModelEndpoint {
                id: "dead".into(),
                base_url: None,
                model: "stub".into(),
                auth_env: None,
                params: Default::default(),
            },
            stub: Some(StubSpec {
                rules: vec![],
                default: StubReply::Fail {
                    message: "responder down".into(),
                },
            }),
        });
        config.roles.responder = Some("dead".into());
        let gateway = Gateway::from_config(config).unwrap();
        let manifest = stage_produce(
            &plan,
            dir.path(),
            &gateway,
            7,
            &dir.path().join("traces.jsonl"),
            &dir.path().join("requeue.jsonl"),
            &produce_options(dir.path()),
        )
        .unwrap();
        assert_eq!(manifest.counts.sessions_ok, 0);
        assert_eq!(manifest.counts.requeued, 5);
        let requeue: Vec<RequeueEntry> = read_jsonl(&dir.path().join("requeue.jsonl")).unwrap();
        assert_eq!(requeue.len(), 5);
        assert!(requeue.iter().all(|e| !e.dropped));
    }

    #[test]
    fn empty_plan_yields_empty_outputs_and_valid_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fixture_corpus(dir.path());
        let plan = ProductionPlan {
            total: 0,
            seed: 1,
            items: vec![],
        };
        let plan_path = dir.path().join("plan.json");
        write_json_atomic(&plan_path, &plan).unwrap();
        let gateway = gateway_with(&[(5, 1)]);
        let manifest = stage_produce(
            &plan_path,
            dir.path(),
            &gateway,
            7,
            &dir.path().join("traces.jsonl"),
            &dir.path().join("requeue.jsonl"),
            &produce_options(dir.path()),
        )
        .unwrap();
        assert_eq!(manifest.counts.planned, 0);
        manifest.verify_digests().unwrap();
        let traces: Vec<SessionTrace> = read_jsonl(&dir.path().join("traces.jsonl")).unwrap();
        assert!(traces.is_empty());
    }

    fn produce_then_judge(
        dir: &Path,
        sessions: u64,
        turns: u32,
        weights: &[(u8, u32)],
    ) -> (RunManifest, PathBuf, PathBuf) {
        fixture_corpus(dir);
        let plan = write_plan(dir, sessions, turns);
        let gateway = gateway_with(weights);
        let traces = dir.join("traces.jsonl");
        stage_produce(
            &plan,
            dir,
            &gateway,
            7,
            &traces,
            &dir.join("requeue-produce.jsonl"),
            &produce_options(dir),
        )
        .unwrap();
        let dataset = dir.join("dataset.jsonl");
        let manifest = stage_judge(
            &traces,
            &gateway,
            &dataset,
            &dir.join("scorecards.jsonl"),
            &dir.join("requeue-judge.jsonl"),
            &JudgeOptions::default(),
        )
        .unwrap();
        (manifest, dataset, plan)
    }

    #[test]
    fn all_perfect_scores_admit_everything() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, dataset, _) = produce_then_judge(dir.path(), 6, 1, &[(5, 1)]);
        assert_eq!(manifest.counts.admitted, 6);
        assert_eq!(manifest.counts.requeued, 0);
        let examples: Vec<TrainingExample> = read_jsonl(&dataset).unwrap();
        assert_eq!(examples.len(), 6);
        for example in &examples {
            assert!(example.validate().is_empty(), "{:?}", example.validate());
            assert!(!example.response.is_empty());
        }
    }

    #[test]
    fn all_four_scores_requeue_everything() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, dataset, _) = produce_then_judge(dir.path(), 4, 1, &[(4, 1)]);
        assert_eq!(manifest.counts.admitted, 0);
        assert_eq!(manifest.counts.requeued, 4);
        manifest.check_conservation().unwrap();
        let examples: Vec<TrainingExample> = read_jsonl(&dataset).unwrap();
        assert!(examples.is_empty());
        let requeue: Vec<RequeueEntry> =
            read_jsonl(&dir.path().join("requeue-judge.jsonl")).unwrap();
        assert!(requeue.iter().all(|e| e.round == 1 && !e.dropped));
    }

    #[test]
    fn judge_rerun_is_idempotent_keyed_by_query_id() {
        let dir = tempfile::tempdir().unwrap();
        let (_, dataset, _) = produce_then_judge(dir.path(), 5, 1, &[(5, 1)]);
        let first = std::fs::read(&dataset).unwrap();
        // Restarting the stage over the same traces must not duplicate rows.
        let gateway = gateway_with(&[(5, 1)]);
        let manifest = stage_judge(
            &dir.path().join("traces.jsonl"),
            &gateway,
            &dataset,
            &dir.path().join("scorecards.jsonl"),
            &dir.path().join("requeue-judge.jsonl"),
            &JudgeOptions::default(),
        )
        .unwrap();
        assert_eq!(manifest.counts.admitted, 5);
        assert_eq!(std::fs::read(&dataset).unwrap(), first);
    }

    #[test]
    fn full_run_is_deterministic_across_directories() {
        let run = || {
            let dir = tempfile::tempdir().unwrap();
            let (_, dataset, plan) = produce_then_judge(dir.path(), 8, 2, &[(5, 3), (4, 1)]);
            (
                std::fs::read(&dataset).unwrap(),
                std::fs::read(&plan).unwrap(),
            )
        };
        let (dataset_a, plan_a) = run();
        let (dataset_b, plan_b) = run();
        assert_eq!(dataset_a, dataset_b);
        assert_eq!(plan_a, plan_b);
    }

    #[test]
    fn requeue_round_cap_drops_with_reason() {
        let dir = tempfile::tempdir().unwrap();
        fixture_corpus(dir.path());
        let plan = ProductionPlan {
            total: 0,
            seed: 1,
            items: vec![],
        };
        let plan_path = dir.path().join("plan.json");
        write_json_atomic(&plan_path, &plan).unwrap();
        let requeue_in = dir.path().join("requeue-in.jsonl");
        write_jsonl_atomic(
            &requeue_in,
            &[
                RequeueEntry {
                    query_id: "fresh".into(),
                    round: 1,
                    reason: "no candidate reached a final score of 5".into(),
                    labels: plan_labels(1),
                    dropped: false,
                },
                RequeueEntry {
                    query_id: "tired".into(),
                    round: 3,
                    reason: "no candidate reached a final score of 5".into(),
                    labels: plan_labels(1),
                    dropped: false,
                },
            ],
        )
        .unwrap();
        let gateway = gateway_with(&[(5, 1)]);
        let mut options = produce_options(dir.path());
        options.requeue_in = Some(requeue_in);
        let manifest = stage_produce(
            &plan_path,
            dir.path(),
            &gateway,
            7,
            &dir.path().join("traces.jsonl"),
            &dir.path().join("requeue.jsonl"),
            &options,
        )
        .unwrap();
        assert_eq!(manifest.counts.sessions_ok, 1);
        assert_eq!(manifest.counts.dropped, 1);
        let requeue: Vec<RequeueEntry> = read_jsonl(&dir.path().join("requeue.jsonl")).unwrap();
        let dropped: Vec<_> = requeue.iter().filter(|e| e.dropped).collect();
        assert_eq!(dropped.len(), 1);
        assert!(dropped[0].reason.contains("round cap"));
    }

    fn log_interaction(id: &str, file: Option<&str>, priors: Vec<&str>) -> QaInteraction {
        QaInteraction {
            id: id.into(),
            query: "how does this work?".into(),
            response: "like so".into(),
            snapshot: EditorSnapshot {
                active_file: file.map(String::from),
                file_line_count: file.map(|_| 50),
                selections: if file.is_some() {
                    vec![LineRange::new(3, 9)]
                } else {
                    vec![]
                },
            },
            trigger_method: TriggerMethod::ChatView,
            prior_turn_ids: priors.into_iter().map(String::from).collect(),
            system_locale: Locale::En,
            language_hint: None,
        }
    }

    #[test]
    fn analyze_single_interaction_gives_point_mass_profile() {
        let dir = tempfile::tempdir().unwrap();
        let logs = dir.path().join("logs.jsonl");
        write_jsonl_atomic(&logs, &[log_interaction("only", Some("a.py"), vec![])]).unwrap();
        let gateway = gateway_with(&[(5, 1)]);
        let out = dir.path().join("profile.json");
        let manifest = stage_analyze(&logs, &out, &gateway, &AnalyzeOptions::default()).unwrap();
        assert_eq!(manifest.counts.classified, 1);
        let profile: BehaviorProfile = read_json(&out).unwrap();
        profile.validate().unwrap();
        for (dimension, categories) in &profile.dimensions {
            // reference_regions is multi-valued per interaction; every other
            // dimension must be a point mass here.
            if dimension != "reference_regions" {
                assert_eq!(categories.len(), 1, "{dimension}: {categories:?}");
            }
            let sum: f64 = categories.values().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn analyze_frequencies_match_counting_oracle() {
        let dir = tempfile::tempdir().unwrap();
        let logs = dir.path().join("logs.jsonl");
        write_jsonl_atomic(
            &logs,
            &[
                log_interaction("a", Some("a.py"), vec![]),
                log_interaction("b", Some("b.go"), vec![]),
                log_interaction("c", Some("c.py"), vec!["a"]),
                log_interaction("d", None, vec![]),
            ],
        )
        .unwrap();
        let gateway = gateway_with(&[(5, 1)]);
        let out = dir.path().join("profile.json");
        stage_analyze(&logs, &out, &gateway, &AnalyzeOptions::default()).unwrap();
        let profile: BehaviorProfile = read_json(&out).unwrap();
        let langs = &profile.dimensions["programming_language"];
        assert_eq!(langs["python"], 0.5);
        assert_eq!(langs["go"], 0.25);
        assert_eq!(langs["unknown"], 0.25);
        let turns = &profile.dimensions["dialog_turns"];
        assert_eq!(turns["1"], 0.75);
        assert_eq!(turns["2"], 0.25);
    }

    #[test]
    fn analyze_empty_log_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let logs = dir.path().join("logs.jsonl");
        std::fs::write(&logs, "").unwrap();
        let gateway = gateway_with(&[(5, 1)]);
        let err = stage_analyze(
            &logs,
            &dir.path().join("p.json"),
            &gateway,
            &Default::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PipelineError::EmptyInput(_)));
    }

    #[test]
    fn report_covers_psr_ur_and_distribution_distance() {
        let dir = tempfile::tempdir().unwrap();
        let (_, dataset, plan) = produce_then_judge(dir.path(), 6, 1, &[(5, 2), (3, 1)]);
        let report = stage_report(
            &dataset,
            &dir.path().join("scorecards.jsonl"),
            &plan,
            None,
            Some(&dir.path().join("report.json")),
        )
        .unwrap();
        assert!(report.scorecard_count > 0);
        let psr = report.psr.unwrap();
        let ur = report.ur.unwrap();
        assert!(psr <= ur);
        assert!(dir.path().join("report.json").exists());
    }

    #[test]
    fn manifest_digests_verify_and_detect_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, dataset, _) = produce_then_judge(dir.path(), 3, 1, &[(5, 1)]);
        manifest.verify_digests().unwrap();
        let mut bytes = std::fs::read(&dataset).unwrap();
        bytes.extend_from_slice(b"{\"tampered\": true}\n");
        std::fs::write(&dataset, bytes).unwrap();
        assert!(matches!(
            manifest.verify_digests(),
            Err(PipelineError::DigestMismatch(_))
        ));
    }

    #[test]
    fn always_failing_filter_drops_items_with_logged_ids() {
        let dir = tempfile::tempdir().unwrap();
        fixture_corpus(dir.path());
        let plan = write_plan(dir.path(), 4, 1);
        let mut config: PoolConfig = offline_pool_config(&[(5, 1)]);
        // The filter role rejects every query, three attempts each.
        for ep in &mut config.endpoints {
            if ep.endpoint.id == "aux" {
                let stub = ep.stub.as_mut().unwrap();
                for rule in &mut stub.rules {
                    if let Some(needle) = &rule.system_contains {
                        if needle.contains("review one generated developer question") {
                            rule.reply = StubReply::Fixed {
                                text: r#"{"pass": false, "rationale": "too vague"}"#.into(),
                                truncated: false,
                            };
                        }
                    }
                }
            }
        }
        let gateway = Gateway::from_config(config).unwrap();
        let manifest = stage_produce(
            &plan,
            dir.path(),
            &gateway,
            7,
            &dir.path().join("traces.jsonl"),
            &dir.path().join("requeue.jsonl"),
            &produce_options(dir.path()),
        )
        .unwrap();
        assert_eq!(manifest.counts.filtered_out, 4);
        assert_eq!(manifest.counts.sessions_ok, 0);
        let log: Vec<RequeueEntry> = read_jsonl(&dir.path().join("requeue.jsonl")).unwrap();
        assert_eq!(log.len(), 4);
        for entry in &log {
            assert!(entry.dropped);
            assert!(
                entry.query_id.starts_with("q-"),
                "drop log names the item id"
            );
            assert!(
                entry.reason.contains("3 attempts"),
                "reason was {:?}",
                entry.reason
            );
        }
    }

    /// Pool with per-candidate scripted scores; judging outcomes are
    /// hand-enumerated: alpha and beta both score 5, gamma scores 3, the
    /// comparison stub picks the second perfect candidate, so every query
    /// admits beta. A failing pool member yields no scorecard at all.
    fn scripted_judging_pool() -> PoolConfig {
        use crate::gateway::{EndpointConfig, ModelEndpoint, SamplingParams, StubRule};
        let generator = |text: &str| StubSpec {
            rules: vec![],
            default: StubReply::Fixed {
                text: text.into(),
                truncated: false,
            },
        };
        let aux = StubSpec {
            rules: vec![
                StubRule {
                    system_contains: Some("realistic developer question".into()),
                    last_user_contains: None,
                    reply: StubReply::Templated {
                        text: "What does section {hash8} do?".into(),
                    },
                },
                StubRule {
                    system_contains: Some("review one generated developer question".into()),
                    last_user_contains: None,
                    reply: StubReply::Fixed {
                        text: r#"{"pass": true, "rationale": "fine"}"#.into(),
                        truncated: false,
                    },
                },
                StubRule {
                    system_contains: Some("rank several candidate answers".into()),
                    last_user_contains: None,
                    reply: StubReply::Fixed {
                        text: "Best: 2".into(),
                        truncated: false,
                    },
                },
                StubRule {
                    system_contains: Some("grade one assistant answer".into()),
                    last_user_contains: Some("answer alpha".into()),
                    reply: StubReply::Fixed {
                        text: "Strong.\nScore: 5".into(),
                        truncated: false,
                    },
                },
                StubRule {
                    system_contains: Some("grade one assistant answer".into()),
                    last_user_contains: Some("answer beta".into()),
                    reply: StubReply::Fixed {
                        text: "Strong.\nScore: 5".into(),
                        truncated: false,
                    },
                },
                StubRule {
                    system_contains: Some("grade one assistant answer".into()),
                    last_user_contains: Some("answer gamma".into()),
                    reply: StubReply::Fixed {
                        text: "Weak.\nScore: 3".into(),
                        truncated: false,
                    },
                },
            ],
            default: StubReply::EchoLastUser,
        };
        let endpoint = |id: &str| ModelEndpoint {
            id: id.into(),
            base_url: None,
            model: "stub".into(),
            auth_env: None,
            params: SamplingParams::default(),
        };
        PoolConfig {
            endpoints: vec![
                EndpointConfig {
                    endpoint: endpoint("alpha"),
                    stub: Some(generator(
                        "The structure is sound.\n```\nanswer alpha\n```\nIt resolves the request cleanly and safely.",
                    )),
                },
                EndpointConfig {
                    endpoint: endpoint("beta"),
                    stub: Some(generator(
                        "A tighter version follows.\n```\nanswer beta\n```\nIt handles the request with less allocation.",
                    )),
                },
                EndpointConfig {
                    endpoint: endpoint("gamma"),
                    stub: Some(generator(
                        "A rough sketch follows.\n```\nanswer gamma\n```\nIt may not cover every case mentioned.",
                    )),
                },
                EndpointConfig {
                    endpoint: endpoint("broken"),
                    stub: Some(StubSpec {
                        rules: vec![],
                        default: StubReply::Fail { message: "pool member offline".into() },
                    }),
                },
                EndpointConfig { endpoint: endpoint("aux"), stub: Some(aux) },
            ],
            pool: Some(vec!["alpha".into(), "beta".into(), "gamma".into(), "broken".into()]),
            roles: crate::gateway::RoleBindings {
                responder: Some("alpha".into()),
                classifier: Some("aux".into()),
                query_generator: Some("aux".into()),
                query_filter: Some("aux".into()),
                judge: Some("aux".into()),
            },
            timeout_secs: 5,
            backoff_ms: 1,
        }
    }

    #[test]
    fn mixed_judging_matches_hand_enumerated_oracle() {
        let dir = tempfile::tempdir().unwrap();
        fixture_corpus(dir.path());
        let plan = write_plan(dir.path(), 3, 1);
        let gateway = Gateway::from_config(scripted_judging_pool()).unwrap();
        let traces = dir.path().join("traces.jsonl");
        stage_produce(
            &plan,
            dir.path(),
            &gateway,
            5,
            &traces,
            &dir.path().join("requeue-produce.jsonl"),
            &produce_options(dir.path()),
        )
        .unwrap();
        let dataset = dir.path().join("dataset.jsonl");
        let manifest = stage_judge(
            &traces,
            &gateway,
            &dataset,
            &dir.path().join("scorecards.jsonl"),
            &dir.path().join("requeue-judge.jsonl"),
            &JudgeOptions::default(),
        )
        .unwrap();

        // Hand-enumerated: per query, alpha=5, beta=5, gamma=3, broken
        // errors out unscored; two perfect candidates go to comparison,
        // which always says "Best: 2" -> beta wins everywhere.
        assert_eq!(manifest.counts.admitted, 3);
        assert_eq!(manifest.counts.requeued, 0);
        let examples: Vec<TrainingExample> = read_jsonl(&dataset).unwrap();
        for example in &examples {
            assert_eq!(example.endpoint_id, "beta");
            assert!(example.response.contains("answer beta"));
        }
        let cards: Vec<ScoreCard> = read_jsonl(&dir.path().join("scorecards.jsonl")).unwrap();
        // Three scored candidates per query; the broken member never gets a
        // scorecard.
        assert_eq!(cards.len(), 9);
        assert!(cards.iter().all(|c| c.candidate.endpoint_id != "broken"));
        let finals: Vec<u8> = cards
            .iter()
            .filter(|c| c.candidate.query_id == examples[0].provenance.query_id)
            .map(|c| c.final_score)
            .collect();
        let mut sorted = finals.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, [3, 5, 5]);
    }
}
