//! Headless workspace simulator.
//!
//! Replays a chat configuration the way the UI automation flow would drive a
//! real editor: materialize the repository in a scratch directory, open the
//! target file, apply the per-turn cursor action (select, move, or leave),
//! assemble the prompt, trigger the Q&A round trip, and capture a trace
//! record with a strictly increasing event sequence.
//!
//! The simulation never touches the source corpus: every session owns a
//! scratch copy and deletes it on completion unless asked to keep it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::confgen::{slice_context, CodeContext, RepoCorpusIndex};
use crate::gateway::{Gateway, GatewayRole};
use crate::prompts;
use crate::taxonomy::{ChatConfiguration, CursorSpec, LineRange, Message, TriggerMethod, TurnSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration invalid: {0}")]
    InvalidConfig(String),
    #[error("missing repository: {0}")]
    MissingRepo(String),
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("workspace io at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("turn counter exceeds configured dialog turns")]
    TurnOverflow,
    #[error("selection {start}..{end} exceeds file bounds ({lines} lines)")]
    SelectionOutOfBounds { start: u32, end: u32, lines: u32 },
    #[error("gateway failure: {0}")]
    Gateway(String),
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Trace records
// ---------------------------------------------------------------------------

/// Monotonic event sequence numbers within a session; within one turn the
/// order cursor_applied < dialogue_triggered < captured < stored always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSeq {
    pub cursor_applied: u64,
    pub dialogue_triggered: u64,
    pub captured: u64,
    pub stored: u64,
}

impl EventSeq {
    pub fn is_ordered(&self) -> bool {
        self.cursor_applied < self.dialogue_triggered
            && self.dialogue_triggered < self.captured
            && self.captured < self.stored
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CursorPos {
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraceSnapshot {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selections: Vec<LineRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cursor: Option<CursorPos>,
}

/// Everything captured for one dialogue turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub turn_index: u32,
    /// The full prompt as sent: system preamble, history, current user turn.
    pub prompt: Vec<Message>,
    pub snapshot: TraceSnapshot,
    pub trigger_method: TriggerMethod,
    pub response_text: String,
    pub endpoint_id: String,
    pub events: EventSeq,
}

/// A completed session: exactly `dialog_turns` trace records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueSession {
    pub config: ChatConfiguration,
    pub records: Vec<TraceRecord>,
    /// Content of the selection visible on the final turn, for judging.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_selected_code: Option<String>,
}

impl DialogueSession {
    pub fn final_prompt(&self) -> &[Message] {
        &self.records.last().expect("session has records").prompt
    }
}

/// Why a session aborted; aborted sessions never reach the dataset, only the
/// retry queue (or the drop log when the failure is terminal).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionFailure {
    pub config_id: String,
    pub turn: u32,
    pub reason: String,
    /// Terminal failures (e.g. a follow-up query rejected by the quality
    /// filter) are dropped instead of retried.
    pub terminal: bool,
}

/// Abort signal from the follow-up query provider.
#[derive(Debug, Clone)]
pub struct QueryAbort {
    pub reason: String,
    pub terminal: bool,
}

// ---------------------------------------------------------------------------
// Workspace sessions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
struct EditorState {
    selections: Vec<LineRange>,
    cursor: Option<CursorPos>,
}

/// One live simulated workspace.
#[derive(Debug)]
pub struct WorkspaceSession {
    pub id: String,
    scratch_dir: PathBuf,
    open_file: Option<String>,
    file_content: Option<String>,
    file_line_count: u32,
    language: String,
    trigger: TriggerMethod,
    error_message: Option<String>,
    editor: EditorState,
    turn: u32,
    dialog_turns: u32,
    event_seq: u64,
    transcript: Vec<Message>,
}

fn copy_tree(src: &Path, dst: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dst).map_err(|e| io_err(dst, e))?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(src)
        .map_err(|e| io_err(src, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| !n.starts_with('.'))
                .unwrap_or(false)
        })
        .collect();
    entries.sort();
    for entry in entries {
        let target = dst.join(entry.file_name().unwrap());
        let meta = std::fs::symlink_metadata(&entry).map_err(|e| io_err(&entry, e))?;
        if meta.is_dir() {
            copy_tree(&entry, &target)?;
        } else if meta.is_file() {
            std::fs::copy(&entry, &target).map_err(|e| io_err(&entry, e))?;
        }
    }
    Ok(())
}

/// Content hash of a directory tree (sorted relative paths and bytes); used
/// to prove the source corpus is never mutated by a run.
pub fn hash_tree(root: &Path) -> std::io::Result<String> {
    fn walk(root: &Path, dir: &Path, hasher: &mut Sha256) -> std::io::Result<()> {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for entry in entries {
            let meta = std::fs::symlink_metadata(&entry)?;
            if meta.is_dir() {
                walk(root, &entry, hasher)?;
            } else if meta.is_file() {
                hasher.update(
                    entry
                        .strip_prefix(root)
                        .unwrap()
                        .to_string_lossy()
                        .as_bytes(),
                );
                hasher.update([0]);
                hasher.update(std::fs::read(&entry)?);
                hasher.update([0]);
            }
        }
        Ok(())
    }
    let mut hasher = Sha256::new();
    walk(root, root, &mut hasher)?;
    Ok(format!("{:x}", hasher.finalize()))
}

/// Materializes the configured repository in an isolated scratch directory
/// and opens the target file.
pub fn open_session(
    config: &ChatConfiguration,
    corpus: &RepoCorpusIndex,
    work_root: &Path,
) -> Result<WorkspaceSession, HarnessError> {
    let violations = config.validate();
    if !violations.is_empty() {
        let joined = violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(HarnessError::InvalidConfig(joined));
    }
    let scratch_dir = work_root.join(&config.id);
    std::fs::create_dir_all(&scratch_dir).map_err(|e| io_err(&scratch_dir, e))?;

    let mut file_content = None;
    let mut file_line_count = 0;
    if let Some(repo) = &config.repo {
        let src = corpus.repo_root(repo);
        if !src.is_dir() {
            cleanup(&scratch_dir);
            return Err(HarnessError::MissingRepo(src.display().to_string()));
        }
        let repo_copy = scratch_dir.join("repo");
        copy_tree(&src, &repo_copy)?;
        if let Some(file) = &config.file {
            let abs = repo_copy.join(file);
            match std::fs::read_to_string(&abs) {
                Ok(content) => {
                    file_line_count = content.lines().count() as u32;
                    file_content = Some(content);
                }
                Err(_) => {
                    cleanup(&scratch_dir);
                    return Err(HarnessError::MissingFile(abs.display().to_string()));
                }
            }
        }
    } else if config.file.is_some() {
        cleanup(&scratch_dir);
        return Err(HarnessError::MissingRepo(format!(
            "configuration {} names a file but no repository",
            config.id
        )));
    }

    Ok(WorkspaceSession {
        id: config.id.clone(),
        scratch_dir,
        open_file: config.file.clone(),
        file_content,
        file_line_count,
        language: config.labels.programming_language.as_str().to_string(),
        trigger: config.labels.trigger_method,
        error_message: config.error_message.clone(),
        editor: EditorState::default(),
        turn: 0,
        dialog_turns: config.labels.dialog_turns.get(),
        event_seq: 0,
        transcript: Vec::new(),
    })
}

fn cleanup(dir: &Path) {
    let _ = std::fs::remove_dir_all(dir);
}

impl WorkspaceSession {
    pub fn turn(&self) -> u32 {
        self.turn
    }

    pub fn transcript(&self) -> &[Message] {
        &self.transcript
    }

    pub fn scratch_dir(&self) -> &Path {
        &self.scratch_dir
    }

    fn next_event(&mut self) -> u64 {
        self.event_seq += 1;
        self.event_seq
    }

    fn editor_cursor_spec(&self) -> CursorSpec {
        if !self.editor.selections.is_empty() {
            CursorSpec::Selections {
                ranges: self.editor.selections.clone(),
            }
        } else if let Some(pos) = self.editor.cursor {
            CursorSpec::Position {
                line: pos.line,
                column: pos.column,
            }
        } else {
            CursorSpec::None
        }
    }

    /// Code context visible in the editor right now.
    pub fn current_context(&self) -> CodeContext {
        match &self.file_content {
            Some(content) => slice_context(content, &self.editor_cursor_spec()),
            None => CodeContext::default(),
        }
    }

    fn apply_cursor(&mut self, spec: &CursorSpec) -> Result<(), HarnessError> {
        match spec {
            CursorSpec::Selections { ranges } if !ranges.is_empty() => {
                for range in ranges {
                    if range.end > self.file_line_count {
                        return Err(HarnessError::SelectionOutOfBounds {
                            start: range.start,
                            end: range.end,
                            lines: self.file_line_count,
                        });
                    }
                }
                self.editor.selections = ranges.clone();
                self.editor.cursor = None;
            }
            CursorSpec::Position { line, column } => {
                self.editor.cursor = Some(CursorPos {
                    line: *line,
                    column: *column,
                });
                self.editor.selections.clear();
            }
            _ => {} // leave editor state unchanged
        }
        Ok(())
    }

    fn assemble_user_content(&self, query: &str) -> String {
        let mut content = String::new();
        let context = self.current_context();
        if let Some(file) = &self.open_file {
            content.push_str(&format!("[file] {file} ({})\n", self.language));
        }
        if let Some(snippet) = &context.context_snippet {
            content.push_str("[context]\n");
            content.push_str(snippet);
            content.push('\n');
        }
        if let Some(selected) = &context.selected_code {
            content.push_str("[selected code]\n");
            content.push_str(selected);
            content.push('\n');
        }
        if self.turn == 0 {
            if let Some(error) = &self.error_message {
                content.push_str("[error messages]\n");
                content.push_str(error);
                content.push('\n');
            }
        }
        content.push_str("[query]\n");
        content.push_str(query);
        content
    }

    /// Runs one dialogue turn: apply the cursor action, assemble the prompt,
    /// trigger the exchange, and capture the trace record.
    pub fn run_turn(
        &mut self,
        spec: &TurnSpec,
        query: &str,
        gateway: &Gateway,
    ) -> Result<TraceRecord, HarnessError> {
        if self.turn >= self.dialog_turns {
            return Err(HarnessError::TurnOverflow);
        }
        self.apply_cursor(&spec.cursor)?;
        let cursor_applied = self.next_event();

        let mut prompt = Vec::with_capacity(self.transcript.len() + 2);
        prompt.push(Message::system(prompts::session_preamble(self.trigger)));
        prompt.extend(self.transcript.iter().cloned());
        prompt.push(Message::user(self.assemble_user_content(query)));

        let dialogue_triggered = self.next_event();
        let reply = gateway.complete_role(GatewayRole::Responder, &prompt);
        if reply.is_error() {
            return Err(HarnessError::Gateway(reply.error.unwrap_or_default()));
        }
        let captured = self.next_event();

        self.transcript.push(prompt.last().unwrap().clone());
        self.transcript.push(Message::assistant(reply.text.clone()));

        let snapshot = TraceSnapshot {
            selections: self.editor.selections.clone(),
            cursor: self.editor.cursor,
        };
        let stored = self.next_event();
        let record = TraceRecord {
            turn_index: self.turn,
            prompt,
            snapshot,
            trigger_method: self.trigger,
            response_text: reply.text,
            endpoint_id: reply.endpoint_id,
            events: EventSeq {
                cursor_applied,
                dialogue_triggered,
                captured,
                stored,
            },
        };
        self.turn += 1;
        Ok(record)
    }

    fn finish(self, keep_workspace: bool) {
        if !keep_workspace {
            cleanup(&self.scratch_dir);
        }
    }
}

/// Runs a full configured session. Later-turn queries without a fixed slot
/// are produced by `next_query`, which sees the live session (transcript and
/// editor state). Partial sessions are never returned, only the failure.
pub fn run_session<F>(
    config: &ChatConfiguration,
    corpus: &RepoCorpusIndex,
    work_root: &Path,
    gateway: &Gateway,
    keep_workspace: bool,
    mut next_query: F,
) -> Result<DialogueSession, SessionFailure>
where
    F: FnMut(u32, &WorkspaceSession) -> Result<String, QueryAbort>,
{
    let fail = |turn: u32, reason: String, terminal: bool| SessionFailure {
        config_id: config.id.clone(),
        turn,
        reason,
        terminal,
    };
    let mut session =
        open_session(config, corpus, work_root).map_err(|e| fail(0, e.to_string(), true))?;
    let mut records = Vec::with_capacity(config.turns.len());
    for (turn_index, spec) in config.turns.iter().enumerate() {
        let turn_index = turn_index as u32;
        let query = match &spec.query {
            Some(fixed) => fixed.clone(),
            None => match next_query(turn_index, &session) {
                Ok(q) => q,
                Err(abort) => {
                    session.finish(keep_workspace);
                    return Err(fail(turn_index, abort.reason, abort.terminal));
                }
            },
        };
        match session.run_turn(spec, &query, gateway) {
            Ok(record) => records.push(record),
            Err(e) => {
                session.finish(keep_workspace);
                return Err(fail(turn_index, e.to_string(), false));
            }
        }
    }
    let final_selected_code = session.current_context().selected_code;
    session.finish(keep_workspace);
    Ok(DialogueSession {
        config: config.clone(),
        records,
        final_selected_code,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confgen::build_corpus_index;
    use crate::gateway::{stub_pool_config, Gateway, StubReply, StubRule, StubSpec};
    use crate::taxonomy::{
        CursorBehavior, DialogTurns, Difficulty, InstructionType, Intent, LabelSet,
        LanguageRegistry, Locale, QueryLocaleRequirement, ReferenceRegion, ReferenceRegions,
    };
    use std::io::Write;

    fn fixture_corpus() -> (tempfile::TempDir, RepoCorpusIndex) {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("demo/src/main.go");
        std::fs::create_dir_all(file.parent().unwrap()).unwrap();
        let mut f = std::fs::File::create(&file).unwrap();
        for i in 1..=50 {
            writeln!(f, "func line{i}() {{}}").unwrap();
        }
        let index = build_corpus_index(dir.path(), &LanguageRegistry::default()).unwrap();
        (dir, index)
    }

    fn labels(behavior: CursorBehavior, turns: u32) -> LabelSet {
        LabelSet {
            cursor_behavior: behavior,
            trigger_method: TriggerMethod::ChatView,
            instruction_type: InstructionType::Query,
            programming_language: LanguageRegistry::default().parse("go").unwrap(),
            system_locale: Locale::En,
            dialog_turns: DialogTurns::new(turns).unwrap(),
            query_locale_requirement: QueryLocaleRequirement::NoRequirement,
            reference_regions: if behavior == CursorBehavior::NoActiveFile {
                ReferenceRegions::single(ReferenceRegion::GeneralKnowledge)
            } else {
                ReferenceRegions::single(ReferenceRegion::SelectedCode)
            },
            difficulty: Difficulty::Intermediate,
            intent: Intent::CodeExplanation,
        }
    }

    fn config(behavior: CursorBehavior, turns: u32) -> ChatConfiguration {
        let cursor = match behavior {
            CursorBehavior::NoActiveFile | CursorBehavior::HaveActiveFile => CursorSpec::None,
            CursorBehavior::SelectLine => CursorSpec::Selections {
                ranges: vec![LineRange::new(7, 7)],
            },
            CursorBehavior::SelectMultipleLines => CursorSpec::Selections {
                ranges: vec![LineRange::new(4, 4), LineRange::new(9, 9)],
            },
            CursorBehavior::SelectMultipleBlocks => CursorSpec::Selections {
                ranges: vec![LineRange::new(3, 6), LineRange::new(12, 15)],
            },
            CursorBehavior::SelectBlock => CursorSpec::Selections {
                ranges: vec![LineRange::new(5, 10)],
            },
        };
        let mut specs = vec![TurnSpec {
            cursor,
            query: Some("what does this do?".into()),
        }];
        for i in 1..turns {
            specs.push(TurnSpec {
                cursor: CursorSpec::None,
                query: Some(format!("follow up {i}")),
            });
        }
        ChatConfiguration {
            id: format!("session-{behavior}-{turns}"),
            repo: (behavior != CursorBehavior::NoActiveFile).then(|| "demo".to_string()),
            file: (behavior != CursorBehavior::NoActiveFile).then(|| "src/main.go".to_string()),
            labels: labels(behavior, turns),
            turns: specs,
            error_message: None,
        }
    }

    fn gateway() -> Gateway {
        Gateway::from_config(stub_pool_config(vec![(
            "responder",
            StubSpec {
                rules: vec![],
                default: StubReply::Templated {
                    text: "answer {hash8}".into(),
                },
            },
        )]))
        .unwrap()
    }

    #[test]
    fn open_session_opens_the_target_file() {
        let (_dir, corpus) = fixture_corpus();
        let work = tempfile::tempdir().unwrap();
        let session = open_session(
            &config(CursorBehavior::SelectBlock, 1),
            &corpus,
            work.path(),
        )
        .unwrap();
        assert_eq!(session.open_file.as_deref(), Some("src/main.go"));
        assert_eq!(session.turn(), 0);
        assert_eq!(session.file_line_count, 50);
    }

    #[test]
    fn no_active_file_session_has_no_open_file() {
        let (_dir, corpus) = fixture_corpus();
        let work = tempfile::tempdir().unwrap();
        let session = open_session(
            &config(CursorBehavior::NoActiveFile, 1),
            &corpus,
            work.path(),
        )
        .unwrap();
        assert!(session.open_file.is_none());
        assert!(session.file_content.is_none());
    }

    #[test]
    fn missing_file_errors_with_the_path() {
        let (_dir, corpus) = fixture_corpus();
        let work = tempfile::tempdir().unwrap();
        let mut cfg = config(CursorBehavior::SelectBlock, 1);
        cfg.file = Some("src/deleted.go".into());
        let err = open_session(&cfg, &corpus, work.path()).unwrap_err();
        assert!(err.to_string().contains("deleted.go"), "got {err}");
    }

    #[test]
    fn selection_turn_records_ordered_events_and_snapshot() {
        let (_dir, corpus) = fixture_corpus();
        let work = tempfile::tempdir().unwrap();
        let cfg = config(CursorBehavior::SelectBlock, 1);
        let mut session = open_session(&cfg, &corpus, work.path()).unwrap();
        let record = session
            .run_turn(&cfg.turns[0], "what does this do?", &gateway())
            .unwrap();
        assert_eq!(record.snapshot.selections, vec![LineRange::new(5, 10)]);
        assert!(record.events.is_ordered());
        assert_eq!(record.turn_index, 0);
    }

    #[test]
    fn empty_turn_spec_leaves_editor_state_unchanged() {
        let (_dir, corpus) = fixture_corpus();
        let work = tempfile::tempdir().unwrap();
        let cfg = config(CursorBehavior::SelectBlock, 2);
        let mut session = open_session(&cfg, &corpus, work.path()).unwrap();
        let first = session.run_turn(&cfg.turns[0], "q1", &gateway()).unwrap();
        let second = session.run_turn(&cfg.turns[1], "q2", &gateway()).unwrap();
        assert_eq!(first.snapshot, second.snapshot);
    }

    #[test]
    fn second_turn_prompt_contains_first_turn_verbatim() {
        let (_dir, corpus) = fixture_corpus();
        let work = tempfile::tempdir().unwrap();
        let cfg = config(CursorBehavior::SelectBlock, 2);
        let gw = gateway();
        let session = run_session(&cfg, &corpus, work.path(), &gw, false, |_, _| {
            unreachable!("all queries fixed")
        })
        .unwrap();
        let first_query = &session.records[0].prompt.last().unwrap().content;
        let first_response = &session.records[0].response_text;
        let second_prompt = &session.records[1].prompt;
        let flattened: String = second_prompt
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        assert!(flattened.contains(first_query.as_str()));
        assert!(flattened.contains(first_response.as_str()));
    }

    #[test]
    fn session_yields_exactly_dialog_turns_records() {
        let (_dir, corpus) = fixture_corpus();
        let work = tempfile::tempdir().unwrap();
        let gw = gateway();
        for turns in [1u32, 3] {
            let cfg = config(CursorBehavior::SelectBlock, turns);
            let session = run_session(
                &cfg,
                &corpus,
                work.path(),
                &gw,
                false,
                |_, _| unreachable!(),
            )
            .unwrap();
            assert_eq!(session.records.len(), turns as usize);
            let indices: Vec<u32> = session.records.iter().map(|r| r.turn_index).collect();
            assert_eq!(indices, (0..turns).collect::<Vec<_>>());
        }
    }

    #[test]
    fn mid_session_gateway_failure_aborts_with_turn() {
        let (_dir, corpus) = fixture_corpus();
        let work = tempfile::tempdir().unwrap();
        // Fails only on the prompt containing the second query.
        let gw = Gateway::from_config(stub_pool_config(vec![(
            "flaky",
            StubSpec {
                rules: vec![StubRule {
                    system_contains: None,
                    last_user_contains: Some("follow up 1".into()),
                    reply: StubReply::Fail {
                        message: "mid-session outage".into(),
                    },
                }],
                default: StubReply::EchoLastUser,
            },
        )]))
        .unwrap();
        let cfg = config(CursorBehavior::SelectBlock, 3);
        let failure = run_session(
            &cfg,
            &corpus,
            work.path(),
            &gw,
            false,
            |_, _| unreachable!(),
        )
        .unwrap_err();
        assert_eq!(failure.turn, 1);
        assert!(failure.reason.contains("outage"));
    }

    #[test]
    fn corpus_tree_is_never_mutated() {
        let (dir, corpus) = fixture_corpus();
        let before = hash_tree(dir.path()).unwrap();
        let work = tempfile::tempdir().unwrap();
        let gw = gateway();
        for turns in [1u32, 2] {
            let cfg = config(CursorBehavior::SelectBlock, turns);
            run_session(
                &cfg,
                &corpus,
                work.path(),
                &gw,
                false,
                |_, _| unreachable!(),
            )
            .unwrap();
        }
        assert_eq!(before, hash_tree(dir.path()).unwrap());
    }

    #[test]
    fn scratch_workspace_removed_on_success_kept_on_request() {
        let (_dir, corpus) = fixture_corpus();
        let work = tempfile::tempdir().unwrap();
        let gw = gateway();
        let cfg = config(CursorBehavior::SelectBlock, 1);
        run_session(
            &cfg,
            &corpus,
            work.path(),
            &gw,
            false,
            |_, _| unreachable!(),
        )
        .unwrap();
        assert!(!work.path().join(&cfg.id).exists());
        run_session(&cfg, &corpus, work.path(), &gw, true, |_, _| unreachable!()).unwrap();
        assert!(work.path().join(&cfg.id).exists());
    }

    #[test]
    fn assembled_prompts_are_byte_identical_across_runs() {
        let (_dir, corpus) = fixture_corpus();
        let work = tempfile::tempdir().unwrap();
        let gw = gateway();
        let cfg = config(CursorBehavior::SelectLine, 2);
        let run = || {
            run_session(
                &cfg,
                &corpus,
                work.path(),
                &gw,
                false,
                |_, _| unreachable!(),
            )
            .unwrap()
            .records
            .iter()
            .map(|r| serde_json::to_string(&r.prompt).unwrap())
            .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn error_payload_appears_in_turn_zero_prompt_only() {
        let (_dir, corpus) = fixture_corpus();
        let work = tempfile::tempdir().unwrap();
        let gw = gateway();
        let mut cfg = config(CursorBehavior::SelectBlock, 2);
        cfg.labels.intent = Intent::CodeRepair;
        cfg.error_message = Some("unresolved import 'rand'".into());
        let session = run_session(
            &cfg,
            &corpus,
            work.path(),
            &gw,
            false,
            |_, _| unreachable!(),
        )
        .unwrap();
        let turn0 = &session.records[0].prompt.last().unwrap().content;
        assert!(turn0.contains("unresolved import 'rand'"));
        let turn1_user = &session.records[1].prompt.last().unwrap().content;
        assert!(!turn1_user.contains("[error messages]"));
    }
}
