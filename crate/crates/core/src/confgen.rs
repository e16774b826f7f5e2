//! Configuration generation: plan items become concrete chat configurations.
//!
//! A plan item names labels; this module picks a repository file matching the
//! item's language, realizes the cursor behavior as concrete line ranges,
//! generates the opening query through the gateway, and runs the query
//! quality filter. Everything is deterministic under the per-item RNG stream.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayRole};
use crate::prompts;
use crate::taxonomy::{
    ChatConfiguration, CursorBehavior, CursorSpec, InstructionType, LabelSet, LanguageRegistry,
    LineRange, Message, ReferenceRegion, TurnSpec,
};

#[derive(Debug, Error)]
pub enum ConfgenError {
    #[error("corpus gap: {0}")]
    CorpusGap(String),
    #[error("corpus {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("corpus root {0} contains no indexable files")]
    EmptyCorpus(String),
    #[error("query generator returned an empty reply twice")]
    EmptyReply,
    #[error("query generator endpoint failed: {0}")]
    Gateway(String),
}

// ---------------------------------------------------------------------------
// Corpus index
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub language: String,
    pub line_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoIndex {
    pub id: String,
    pub files: Vec<FileEntry>,
}

/// Index over local repository roots: which files exist, their language
/// tags, and their sizes. Read-only shared state during production.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoCorpusIndex {
    pub base: PathBuf,
    pub repos: Vec<RepoIndex>,
}

const MAX_INDEXED_FILE_BYTES: u64 = 512 * 1024;

fn io_err(path: &Path, source: std::io::Error) -> ConfgenError {
    ConfgenError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, ConfgenError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| !n.starts_with('.'))
                .unwrap_or(false)
        })
        .collect();
    entries.sort();
    Ok(entries)
}

fn index_repo_files(
    repo_root: &Path,
    dir: &Path,
    registry: &LanguageRegistry,
    files: &mut Vec<FileEntry>,
) -> Result<(), ConfgenError> {
    for entry in sorted_entries(dir)? {
        let meta = std::fs::symlink_metadata(&entry).map_err(|e| io_err(&entry, e))?;
        if meta.is_dir() {
            index_repo_files(repo_root, &entry, registry, files)?;
        } else if meta.is_file() && meta.len() > 0 && meta.len() <= MAX_INDEXED_FILE_BYTES {
            let Ok(content) = std::fs::read(&entry) else {
                continue;
            };
            if content.contains(&0) {
                continue; // binary
            }
            let text = String::from_utf8_lossy(&content);
            let rel = entry
                .strip_prefix(repo_root)
                .unwrap()
                .to_string_lossy()
                .to_string();
            files.push(FileEntry {
                language: registry.language_for_path(&rel).as_str().to_string(),
                line_count: text.lines().count() as u32,
                path: rel,
            });
        }
    }
    Ok(())
}

/// Builds a corpus index over a local directory tree. Each immediate
/// subdirectory is one repository; a root with no subdirectories is treated
/// as a single repository.
pub fn build_corpus_index(
    root: &Path,
    registry: &LanguageRegistry,
) -> Result<RepoCorpusIndex, ConfgenError> {
    let root = root.canonicalize().map_err(|e| io_err(root, e))?;
    let subdirs: Vec<PathBuf> = sorted_entries(&root)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    let mut repos = Vec::new();
    if subdirs.is_empty() {
        let id = root
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| "corpus".to_string());
        let mut files = Vec::new();
        index_repo_files(&root, &root, registry, &mut files)?;
        if !files.is_empty() {
            repos.push(RepoIndex { id, files });
        }
        return finish_index(root.parent().unwrap_or(&root).to_path_buf(), repos);
    }
    for dir in subdirs {
        let id = dir.file_name().unwrap().to_string_lossy().to_string();
        let mut files = Vec::new();
        index_repo_files(&dir, &dir, registry, &mut files)?;
        if !files.is_empty() {
            repos.push(RepoIndex { id, files });
        }
    }
    finish_index(root, repos)
}

fn finish_index(base: PathBuf, repos: Vec<RepoIndex>) -> Result<RepoCorpusIndex, ConfgenError> {
    if repos.is_empty() {
        return Err(ConfgenError::EmptyCorpus(base.display().to_string()));
    }
    Ok(RepoCorpusIndex { base, repos })
}

impl RepoCorpusIndex {
    pub fn repo_root(&self, repo_id: &str) -> PathBuf {
        self.base.join(repo_id)
    }

    pub fn file_abs(&self, repo_id: &str, rel: &str) -> PathBuf {
        self.repo_root(repo_id).join(rel)
    }

    pub fn file_count(&self) -> usize {
        self.repos.iter().map(|r| r.files.len()).sum()
    }

    /// Re-checks the index invariants against the filesystem.
    pub fn validate(&self, registry: &LanguageRegistry) -> Result<(), ConfgenError> {
        for repo in &self.repos {
            for file in &repo.files {
                let abs = self.file_abs(&repo.id, &file.path);
                let meta = std::fs::metadata(&abs).map_err(|e| io_err(&abs, e))?;
                if meta.len() == 0 {
                    return Err(ConfgenError::EmptyCorpus(abs.display().to_string()));
                }
                let expected = registry.language_for_path(&file.path);
                if expected.as_str() != file.language {
                    return Err(ConfgenError::CorpusGap(format!(
                        "{} tagged {} but extension map says {}",
                        file.path, file.language, expected
                    )));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Repository sampling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoFilePick {
    pub repo_id: String,
    pub path: String,
    pub line_count: u32,
}

fn min_lines_for(behavior: CursorBehavior) -> u32 {
    match behavior {
        CursorBehavior::SelectBlock => 3,
        CursorBehavior::SelectMultipleBlocks => 6,
        CursorBehavior::SelectMultipleLines => 2,
        _ => 1,
    }
}

fn range_in(rng: &mut ChaCha8Rng, low: u32, high: u32) -> u32 {
    rng.random_range(low..=high)
}

fn realize_cursor(behavior: CursorBehavior, line_count: u32, rng: &mut ChaCha8Rng) -> CursorSpec {
    match behavior {
        CursorBehavior::NoActiveFile => CursorSpec::None,
        CursorBehavior::HaveActiveFile => CursorSpec::Position {
            line: range_in(rng, 1, line_count),
            column: 0,
        },
        CursorBehavior::SelectLine => {
            let line = range_in(rng, 1, line_count);
            CursorSpec::Selections {
                ranges: vec![LineRange::new(line, line)],
            }
        }
        CursorBehavior::SelectMultipleLines => {
            // Two distinct lines, emitted in order.
            let a = range_in(rng, 1, line_count);
            let mut b = range_in(rng, 1, line_count - 1);
            if b >= a {
                b += 1;
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            CursorSpec::Selections {
                ranges: vec![LineRange::new(lo, lo), LineRange::new(hi, hi)],
            }
        }
        CursorBehavior::SelectBlock => {
            let len = range_in(rng, 3, line_count.min(40));
            let start = range_in(rng, 1, line_count - len + 1);
            CursorSpec::Selections {
                ranges: vec![LineRange::new(start, start + len - 1)],
            }
        }
        CursorBehavior::SelectMultipleBlocks => {
            // One block in each half of the file, separated by at least a line.
            let mid = line_count / 2;
            let len_a = range_in(rng, 2, (mid - 1).clamp(2, 10));
            let start_a = range_in(rng, 1, mid - len_a);
            let len_b = range_in(rng, 2, (line_count - mid).clamp(2, 10));
            let start_b = range_in(rng, mid + 1, line_count - len_b + 1);
            CursorSpec::Selections {
                ranges: vec![
                    LineRange::new(start_a, start_a + len_a - 1),
                    LineRange::new(start_b, start_b + len_b - 1),
                ],
            }
        }
    }
}

/// Picks a repository file matching the item's language and realizes its
/// cursor behavior. `no_active_file` items need no file and return `None`.
/// Deterministic under the caller-provided RNG.
pub fn sample_repository(
    labels: &LabelSet,
    index: &RepoCorpusIndex,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(RepoFilePick, CursorSpec)>, ConfgenError> {
    if labels.cursor_behavior == CursorBehavior::NoActiveFile {
        return Ok(None);
    }
    let language = labels.programming_language.as_str();
    let min_lines = min_lines_for(labels.cursor_behavior);
    let candidates: Vec<(&RepoIndex, &FileEntry)> = index
        .repos
        .iter()
        .flat_map(|repo| repo.files.iter().map(move |f| (repo, f)))
        .filter(|(_, f)| f.language == language && f.line_count >= min_lines)
        .collect();
    if candidates.is_empty() {
        return Err(ConfgenError::CorpusGap(language.to_string()));
    }
    let (repo, file) = candidates[rng.random_range(0..candidates.len())];
    let cursor = realize_cursor(labels.cursor_behavior, file.line_count, rng);
    Ok(Some((
        RepoFilePick {
            repo_id: repo.id.clone(),
            path: file.path.clone(),
            line_count: file.line_count,
        },
        cursor,
    )))
}

// ---------------------------------------------------------------------------
// Context slicing
// ---------------------------------------------------------------------------

/// Lines of context passed above and below the focus span.
pub const CONTEXT_WINDOW_LINES: u32 = 30;
/// Hard cap on the context snippet length, in lines.
pub const CONTEXT_CAP_LINES: u32 = 200;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeContext {
    pub selected_code: Option<String>,
    pub context_snippet: Option<String>,
}

/// Slices the selected code and a surrounding window out of file content.
pub fn slice_context(content: &str, cursor: &CursorSpec) -> CodeContext {
    let lines: Vec<&str> = content.lines().collect();
    let line_count = lines.len() as u32;
    if line_count == 0 {
        return CodeContext::default();
    }
    let clamp = |line: u32| line.clamp(1, line_count);

    let (focus_start, focus_end, selected) = match cursor {
        CursorSpec::Selections { ranges } if !ranges.is_empty() => {
            let parts: Vec<String> = ranges
                .iter()
                .map(|r| {
                    let (s, e) = (clamp(r.start), clamp(r.end));
                    lines[(s - 1) as usize..e as usize].join("\n")
                })
                .collect();
            let first = clamp(ranges.iter().map(|r| r.start).min().unwrap());
            let last = clamp(ranges.iter().map(|r| r.end).max().unwrap());
            (first, last, Some(parts.join("\n...\n")))
        }
        CursorSpec::Position { line, .. } => {
            let line = clamp(*line);
            (line, line, None)
        }
        _ => (1, line_count.min(2 * CONTEXT_WINDOW_LINES), None),
    };

    let start = clamp(focus_start.saturating_sub(CONTEXT_WINDOW_LINES).max(1));
    let mut end = clamp(focus_end + CONTEXT_WINDOW_LINES);
    if end - start + 1 > CONTEXT_CAP_LINES {
        end = start + CONTEXT_CAP_LINES - 1;
    }
    let snippet = lines[(start - 1) as usize..end as usize].join("\n");
    CodeContext {
        selected_code: selected,
        context_snippet: Some(snippet),
    }
}

// ---------------------------------------------------------------------------
// Query generation and filtering
// ---------------------------------------------------------------------------

/// Generates one turn's query text.
///
/// Template-driven instruction types short-circuit on the opening turn: the
/// quick-chat button text is the query (optionally prefixing model text).
/// Follow-up turns always go through the generator with the transcript so
/// far, so they can reference history.
pub fn generate_query(
    labels: &LabelSet,
    turn_index: u32,
    context: &CodeContext,
    error_message: Option<&str>,
    history: &[Message],
    gateway: &Gateway,
    rng: &mut ChaCha8Rng,
) -> Result<String, ConfgenError> {
    let template = if turn_index == 0 {
        match labels.instruction_type {
            InstructionType::Query => None,
            _ => {
                let bank = prompts::templates_for_intent(labels.intent);
                Some(bank[rng.random_range(0..bank.len())].to_string())
            }
        }
    } else {
        None
    };
    if turn_index == 0 && labels.instruction_type == InstructionType::TemplateOnly {
        return Ok(template.unwrap());
    }

    let messages = prompts::query_generation_messages(
        labels,
        turn_index,
        context.selected_code.as_deref(),
        context.context_snippet.as_deref(),
        error_message,
        history,
    );
    let mut generated = None;
    for _ in 0..2 {
        let reply = gateway.complete_role(GatewayRole::QueryGenerator, &messages);
        if reply.is_error() {
            return Err(ConfgenError::Gateway(reply.error.unwrap_or_default()));
        }
        let text = reply.text.trim().to_string();
        if !text.is_empty() {
            generated = Some(text);
            break;
        }
    }
    let generated = generated.ok_or(ConfgenError::EmptyReply)?;
    Ok(match template {
        Some(prefix) => format!("{prefix} {generated}"),
        None => generated,
    })
}

/// The query quality filter's decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryVerdict {
    pub pass: bool,
    pub rationale: String,
}

fn parse_verdict(text: &str) -> Option<QueryVerdict> {
    let object = prompts::first_json_object(text)?;
    let value: serde_json::Value = serde_json::from_str(object).ok()?;
    let pass = value.get("pass")?.as_bool()?;
    let rationale = value
        .get("rationale")
        .and_then(|r| r.as_str())
        .unwrap_or(if pass { "" } else { "rejected" })
        .to_string();
    Some(QueryVerdict { pass, rationale })
}

/// Runs the quality filter over a generated query. Unparseable verdicts are
/// retried once with a repair instruction and then treated as a fail.
pub fn filter_query(query: &str, labels: &LabelSet, gateway: &Gateway) -> QueryVerdict {
    for repair in [false, true] {
        let messages = prompts::query_filter_messages(query, labels, repair);
        let reply = gateway.complete_role(GatewayRole::QueryFilter, &messages);
        if reply.is_error() {
            return QueryVerdict {
                pass: false,
                rationale: format!("endpoint error: {}", reply.error.unwrap_or_default()),
            };
        }
        if let Some(mut verdict) = parse_verdict(&reply.text) {
            if !verdict.pass && verdict.rationale.is_empty() {
                verdict.rationale = "rejected".to_string();
            }
            return verdict;
        }
    }
    QueryVerdict {
        pass: false,
        rationale: "unparseable".to_string(),
    }
}

// ---------------------------------------------------------------------------
// Error-message payloads and configuration assembly
// ---------------------------------------------------------------------------

/// Synthesizes compiler/runtime error text for code-repair items.
pub fn synth_error_message(language: &str, line_count: u32, rng: &mut ChaCha8Rng) -> String {
    let bank = prompts::error_message_bank(language);
    let template = bank[rng.random_range(0..bank.len())];
    let line = rng.random_range(1..=line_count.max(1));
    template.replace("{line}", &line.to_string())
}

/// Assembles a chat configuration from a plan item's realized parts.
/// Turn 0 carries the sampled cursor and the opening query; later turns have
/// empty slots filled during the session.
pub fn build_configuration(
    id: String,
    labels: LabelSet,
    pick: Option<&RepoFilePick>,
    cursor: CursorSpec,
    opening_query: String,
    error_message: Option<String>,
) -> ChatConfiguration {
    let turn_count = labels.dialog_turns.get();
    let mut turns = Vec::with_capacity(turn_count as usize);
    turns.push(TurnSpec {
        cursor,
        query: Some(opening_query),
    });
    for _ in 1..turn_count {
        turns.push(TurnSpec {
            cursor: CursorSpec::None,
            query: None,
        });
    }
    ChatConfiguration {
        id,
        repo: pick.map(|p| p.repo_id.clone()),
        file: pick.map(|p| p.path.clone()),
        labels,
        turns,
        error_message,
    }
}

/// True when this item should carry a synthesized error payload.
pub fn wants_error_payload(labels: &LabelSet) -> bool {
    labels.intent == crate::taxonomy::Intent::CodeRepair
        && labels
            .reference_regions
            .contains(ReferenceRegion::ErrorMessages)
}

/// Convenience map of per-language file availability, for gap diagnostics.
pub fn language_coverage(index: &RepoCorpusIndex) -> BTreeMap<String, usize> {
    let mut coverage = BTreeMap::new();
    for repo in &index.repos {
        for file in &repo.files {
            *coverage.entry(file.language.clone()).or_insert(0) += 1;
        }
    }
    coverage
}
