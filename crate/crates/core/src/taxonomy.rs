//! Behavioral taxonomy and shared domain types.
//!
//! Ten dimensions describe one IDE question-answering interaction. The first
//! seven are cheap to classify with deterministic rules; the last three
//! (reference regions, difficulty, intent) need a model. Category sets are
//! closed: parsing a label outside the set is an error, so every profile,
//! plan, and configuration in the system speaks the same vocabulary.
//!
//! Everything here is an immutable value type, safe to share across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("unknown {dimension} category: {value:?}")]
    UnknownCategory {
        dimension: &'static str,
        value: String,
    },
    #[error("dialog_turns must be a positive integer")]
    InvalidTurns,
    #[error("reference_regions must be non-empty")]
    EmptyRegions,
}

// ---------------------------------------------------------------------------
// Dimensions
// ---------------------------------------------------------------------------

/// One of the ten behavioral axes, in canonical order.
///
/// The first seven are rule-classifiable; the last three are model-classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    CursorBehavior,
    TriggerMethod,
    InstructionType,
    ProgrammingLanguage,
    SystemLocale,
    DialogTurns,
    QueryLocaleRequirement,
    ReferenceRegions,
    Difficulty,
    Intent,
}

impl Dimension {
    pub const ALL: [Dimension; 10] = [
        Dimension::CursorBehavior,
        Dimension::TriggerMethod,
        Dimension::InstructionType,
        Dimension::ProgrammingLanguage,
        Dimension::SystemLocale,
        Dimension::DialogTurns,
        Dimension::QueryLocaleRequirement,
        Dimension::ReferenceRegions,
        Dimension::Difficulty,
        Dimension::Intent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::CursorBehavior => "cursor_behavior",
            Dimension::TriggerMethod => "trigger_method",
            Dimension::InstructionType => "instruction_type",
            Dimension::ProgrammingLanguage => "programming_language",
            Dimension::SystemLocale => "system_locale",
            Dimension::DialogTurns => "dialog_turns",
            Dimension::QueryLocaleRequirement => "query_locale_requirement",
            Dimension::ReferenceRegions => "reference_regions",
            Dimension::Difficulty => "difficulty",
            Dimension::Intent => "intent",
        }
    }

    /// True for the seven dimensions the rule matcher handles.
    pub fn is_rule_classified(self) -> bool {
        Self::ALL.iter().position(|d| *d == self).unwrap() < 7
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

macro_rules! closed_set_enum {
    ($(#[$meta:meta])* $name:ident, $dim:expr, { $($variant:ident => $key:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $(#[serde(rename = $key)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $key),+
                }
            }

            pub fn parse(value: &str) -> Result<Self, TaxonomyError> {
                match value {
                    $($key => Ok($name::$variant),)+
                    _ => Err(TaxonomyError::UnknownCategory {
                        dimension: $dim,
                        value: value.to_string(),
                    }),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

closed_set_enum!(
    /// How the user's cursor and selection looked when the question was asked.
    CursorBehavior, "cursor_behavior", {
        NoActiveFile => "no_active_file",
        HaveActiveFile => "have_active_file",
        SelectBlock => "select_block",
        SelectMultipleBlocks => "select_multiple_blocks",
        SelectLine => "select_line",
        SelectMultipleLines => "select_multiple_lines",
    }
);

impl CursorBehavior {
    /// True when the behavior implies an explicit code selection.
    pub fn is_selection(self) -> bool {
        matches!(
            self,
            CursorBehavior::SelectBlock
                | CursorBehavior::SelectMultipleBlocks
                | CursorBehavior::SelectLine
                | CursorBehavior::SelectMultipleLines
        )
    }
}

closed_set_enum!(
    /// Which chat surface triggered the interaction.
    TriggerMethod, "trigger_method", {
        InlineChat => "inline_chat",
        ChatView => "chat_view",
    }
);

closed_set_enum!(
    InstructionType, "instruction_type", {
        Query => "query",
        TemplatePlusQuery => "template_plus_query",
        TemplateOnly => "template_only",
    }
);

closed_set_enum!(
    Locale, "locale", {
        Zh => "zh",
        En => "en",
    }
);

impl Locale {
    pub fn other(self) -> Locale {
        match self {
            Locale::Zh => Locale::En,
            Locale::En => Locale::Zh,
        }
    }
}

closed_set_enum!(
    QueryLocaleRequirement, "query_locale_requirement", {
        DiffersFromSystem => "differs_from_system",
        SameAsSystem => "same_as_system",
        NoRequirement => "none",
    }
);

closed_set_enum!(
    ReferenceRegion, "reference_regions", {
        HistoricalDialog => "historical_dialog",
        SelectedCode => "selected_code",
        Context => "context",
        Question => "question",
        ErrorMessages => "error_messages",
        GeneralKnowledge => "general_knowledge",
    }
);

closed_set_enum!(
    Difficulty, "difficulty", {
        Elementary => "elementary",
        Intermediate => "intermediate",
        Advanced => "advanced",
        Expert => "expert",
    }
);

closed_set_enum!(
    Intent, "intent", {
        CodeGeneration => "code_generation",
        CodeEditing => "code_editing",
        CodeExplanation => "code_explanation",
        CommentGeneration => "comment_generation",
        CodeRepair => "code_repair",
        GeneralQa => "general_qa",
    }
);

// ---------------------------------------------------------------------------
// Programming languages
// ---------------------------------------------------------------------------

/// A programming-language tag from the closed working set.
///
/// The builtin set covers the mainstream languages; deployments can extend it
/// through [`LanguageRegistry`] config without code changes. `unknown` is the
/// sentinel for files whose extension has no mapping.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProgrammingLanguage(String);

impl ProgrammingLanguage {
    pub const BUILTIN: [&'static str; 10] = [
        "python",
        "go",
        "cpp",
        "java",
        "javascript",
        "typescript",
        "rust",
        "c",
        "csharp",
        "shell",
    ];
    pub const UNKNOWN: &'static str = "unknown";

    pub fn unknown() -> Self {
        ProgrammingLanguage(Self::UNKNOWN.to_string())
    }

    pub fn is_unknown(&self) -> bool {
        self.0 == Self::UNKNOWN
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProgrammingLanguage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The working language set plus the extension map used to tag files.
///
/// Loadable from a JSON config: `{"languages": ["zig"], "extensions":
/// {"zig": "zig"}}` extends the builtin set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LanguageRegistry {
    pub languages: BTreeSet<String>,
    pub extensions: BTreeMap<String, String>,
}

impl Default for LanguageRegistry {
    fn default() -> Self {
        let languages = ProgrammingLanguage::BUILTIN
            .iter()
            .map(|s| s.to_string())
            .collect();
        let extensions = [
            ("py", "python"),
            ("go", "go"),
            ("cpp", "cpp"),
            ("cc", "cpp"),
            ("cxx", "cpp"),
            ("hpp", "cpp"),
            ("hh", "cpp"),
            ("java", "java"),
            ("js", "javascript"),
            ("jsx", "javascript"),
            ("mjs", "javascript"),
            ("cjs", "javascript"),
            ("ts", "typescript"),
            ("tsx", "typescript"),
            ("rs", "rust"),
            ("c", "c"),
            ("h", "c"),
            ("cs", "csharp"),
            ("sh", "shell"),
            ("bash", "shell"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        LanguageRegistry {
            languages,
            extensions,
        }
    }
}

impl LanguageRegistry {
    /// Merges extra languages/extensions from a config document into the
    /// builtin set.
    pub fn with_extensions(mut self, extra: LanguageRegistry) -> Self {
        self.languages.extend(extra.languages);
        self.extensions.extend(extra.extensions);
        self
    }

    /// Parses a language tag against the closed set (`unknown` is accepted).
    pub fn parse(&self, value: &str) -> Result<ProgrammingLanguage, TaxonomyError> {
        if value == ProgrammingLanguage::UNKNOWN || self.languages.contains(value) {
            Ok(ProgrammingLanguage(value.to_string()))
        } else {
            Err(TaxonomyError::UnknownCategory {
                dimension: "programming_language",
                value: value.to_string(),
            })
        }
    }

    /// Tags a file path by extension; unmapped extensions get the sentinel.
    pub fn language_for_path(&self, path: &str) -> ProgrammingLanguage {
        let ext = path.rsplit('.').next().filter(|e| *e != path);
        match ext.and_then(|e| self.extensions.get(&e.to_ascii_lowercase())) {
            Some(lang) => ProgrammingLanguage(lang.clone()),
            None => ProgrammingLanguage::unknown(),
        }
    }
}

// ---------------------------------------------------------------------------
// Multi-valued and numeric dimensions
// ---------------------------------------------------------------------------

/// Non-empty set of regions a response is expected to draw on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ReferenceRegions(BTreeSet<ReferenceRegion>);

impl ReferenceRegions {
    pub fn new(regions: BTreeSet<ReferenceRegion>) -> Result<Self, TaxonomyError> {
        if regions.is_empty() {
            Err(TaxonomyError::EmptyRegions)
        } else {
            Ok(ReferenceRegions(regions))
        }
    }

    pub fn single(region: ReferenceRegion) -> Self {
        ReferenceRegions(BTreeSet::from([region]))
    }

    pub fn contains(&self, region: ReferenceRegion) -> bool {
        self.0.contains(&region)
    }

    pub fn iter(&self) -> impl Iterator<Item = ReferenceRegion> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl<'de> Deserialize<'de> for ReferenceRegions {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let set = BTreeSet::<ReferenceRegion>::deserialize(deserializer)?;
        ReferenceRegions::new(set).map_err(serde::de::Error::custom)
    }
}

/// Number of dialogue turns in the interaction; always at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct DialogTurns(u32);

impl DialogTurns {
    pub fn new(turns: u32) -> Result<Self, TaxonomyError> {
        if turns == 0 {
            Err(TaxonomyError::InvalidTurns)
        } else {
            Ok(DialogTurns(turns))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl<'de> Deserialize<'de> for DialogTurns {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let turns = u32::deserialize(deserializer)?;
        DialogTurns::new(turns).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for DialogTurns {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

// ---------------------------------------------------------------------------
// Label sets
// ---------------------------------------------------------------------------

/// One category label per dimension: the complete behavioral fingerprint of
/// one planned or observed interaction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelSet {
    pub cursor_behavior: CursorBehavior,
    pub trigger_method: TriggerMethod,
    pub instruction_type: InstructionType,
    pub programming_language: ProgrammingLanguage,
    pub system_locale: Locale,
    pub dialog_turns: DialogTurns,
    pub query_locale_requirement: QueryLocaleRequirement,
    pub reference_regions: ReferenceRegions,
    pub difficulty: Difficulty,
    pub intent: Intent,
}

impl LabelSet {
    /// Category keys this label set contributes to a dimension's tally.
    ///
    /// Single-valued dimensions yield one key; `reference_regions` yields one
    /// key per member (it is counted per occurrence).
    pub fn category_keys(&self, dim: Dimension) -> Vec<String> {
        match dim {
            Dimension::CursorBehavior => vec![self.cursor_behavior.as_str().to_string()],
            Dimension::TriggerMethod => vec![self.trigger_method.as_str().to_string()],
            Dimension::InstructionType => vec![self.instruction_type.as_str().to_string()],
            Dimension::ProgrammingLanguage => vec![self.programming_language.as_str().to_string()],
            Dimension::SystemLocale => vec![self.system_locale.as_str().to_string()],
            Dimension::DialogTurns => vec![self.dialog_turns.to_string()],
            Dimension::QueryLocaleRequirement => {
                vec![self.query_locale_requirement.as_str().to_string()]
            }
            Dimension::ReferenceRegions => self
                .reference_regions
                .iter()
                .map(|r| r.as_str().to_string())
                .collect(),
            Dimension::Difficulty => vec![self.difficulty.as_str().to_string()],
            Dimension::Intent => vec![self.intent.as_str().to_string()],
        }
    }
}

// ---------------------------------------------------------------------------
// Editor geometry
// ---------------------------------------------------------------------------

/// Inclusive 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineRange {
    pub start: u32,
    pub end: u32,
}

impl LineRange {
    pub fn new(start: u32, end: u32) -> Self {
        LineRange { start, end }
    }

    pub fn is_single_line(&self) -> bool {
        self.start == self.end
    }

    pub fn is_well_formed(&self) -> bool {
        self.start >= 1 && self.start <= self.end
    }

    pub fn line_count(&self) -> u32 {
        self.end - self.start + 1
    }
}

/// Per-turn cursor action, mirroring the select / move / leave alternatives
/// of the simulated UI flow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CursorSpec {
    None,
    Position { line: u32, column: u32 },
    Selections { ranges: Vec<LineRange> },
}

impl CursorSpec {
    pub fn selections(&self) -> &[LineRange] {
        match self {
            CursorSpec::Selections { ranges } => ranges,
            _ => &[],
        }
    }

    pub fn is_selection(&self) -> bool {
        !self.selections().is_empty()
    }
}

/// One planned dialogue turn: the cursor action to apply before the query,
/// plus the query text when it is fixed ahead of the session. Follow-up
/// queries that depend on the live transcript leave the slot empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnSpec {
    pub cursor: CursorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
}

/// Editor state captured alongside a logged interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct EditorSnapshot {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_line_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selections: Vec<LineRange>,
}

/// Classifies selection geometry into a cursor-behavior category.
///
/// Used both by the rule matcher and by configuration validation so the two
/// can never disagree.
pub fn cursor_behavior_of(selections: &[LineRange], has_file: bool) -> CursorBehavior {
    match selections.len() {
        0 if has_file => CursorBehavior::HaveActiveFile,
        0 => CursorBehavior::NoActiveFile,
        1 if selections[0].is_single_line() => CursorBehavior::SelectLine,
        1 => CursorBehavior::SelectBlock,
        _ if selections.iter().all(LineRange::is_single_line) => {
            CursorBehavior::SelectMultipleLines
        }
        _ => CursorBehavior::SelectMultipleBlocks,
    }
}

// ---------------------------------------------------------------------------
// Chat wire messages
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

// ---------------------------------------------------------------------------
// Logged interactions
// ---------------------------------------------------------------------------

/// One logged IDE question-answering interaction (a single turn; multi-turn
/// chains link through `prior_turn_ids`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaInteraction {
    pub id: String,
    pub query: String,
    pub response: String,
    pub snapshot: EditorSnapshot,
    pub trigger_method: TriggerMethod,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior_turn_ids: Vec<String>,
    pub system_locale: Locale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_hint: Option<String>,
}

impl QaInteraction {
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let snap = &self.snapshot;
        if !snap.selections.is_empty() && snap.active_file.is_none() {
            violations.push(Violation::new(
                "snapshot.selections",
                "selection ranges present without an active file",
            ));
        }
        let mut sorted = snap.selections.clone();
        sorted.sort();
        for range in &sorted {
            if !range.is_well_formed() {
                violations.push(Violation::new(
                    "snapshot.selections",
                    format!("malformed range {}..{}", range.start, range.end),
                ));
            }
            if let Some(count) = snap.file_line_count {
                if range.end > count {
                    violations.push(Violation::new(
                        "snapshot.selections",
                        format!(
                            "range {}..{} exceeds file bounds ({count} lines)",
                            range.start, range.end
                        ),
                    ));
                }
            }
        }
        for pair in sorted.windows(2) {
            if pair[1].start <= pair[0].end {
                violations.push(Violation::new(
                    "snapshot.selections",
                    format!(
                        "overlapping ranges {}..{} and {}..{}",
                        pair[0].start, pair[0].end, pair[1].start, pair[1].end
                    ),
                ));
            }
        }
        let mut seen = BTreeSet::new();
        for prior in &self.prior_turn_ids {
            if prior == &self.id || !seen.insert(prior) {
                violations.push(Violation::new(
                    "prior_turn_ids",
                    format!("prior-turn chain is not acyclic at {prior:?}"),
                ));
            }
        }
        violations
    }
}

// ---------------------------------------------------------------------------
// Chat configurations
// ---------------------------------------------------------------------------

/// Full recipe for one simulated session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatConfiguration {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub labels: LabelSet,
    pub turns: Vec<TurnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
}

/// A named invariant breach; data, not a failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every configuration invariant; an empty list means the
/// configuration is valid. Pure and deterministic.
pub fn validate_configuration(config: &ChatConfiguration) -> Vec<Violation> {
    let mut violations = Vec::new();
    let labels = &config.labels;

    if labels.cursor_behavior == CursorBehavior::NoActiveFile && config.file.is_some() {
        violations.push(Violation::new(
            "file",
            "file path present but cursor_behavior is no_active_file",
        ));
    }
    if labels.cursor_behavior != CursorBehavior::NoActiveFile && config.file.is_none() {
        violations.push(Violation::new(
            "file",
            format!(
                "file path missing but cursor_behavior is {}",
                labels.cursor_behavior
            ),
        ));
    }

    if labels.dialog_turns.get() as usize != config.turns.len() {
        violations.push(Violation::new(
            "turns",
            format!(
                "dialog_turns is {} but {} turn specs are present",
                labels.dialog_turns,
                config.turns.len()
            ),
        ));
    }

    for (idx, turn) in config.turns.iter().enumerate() {
        for range in turn.cursor.selections() {
            if !range.is_well_formed() {
                violations.push(Violation::new(
                    format!("turns[{idx}].cursor"),
                    format!("malformed range {}..{}", range.start, range.end),
                ));
            }
        }
    }

    if let Some(first) = config.turns.first() {
        let derived = cursor_behavior_of(first.cursor.selections(), config.file.is_some());
        if derived != labels.cursor_behavior {
            violations.push(Violation::new(
                "labels.cursor_behavior",
                format!(
                    "label {} inconsistent with turn-0 cursor spec (implies {derived})",
                    labels.cursor_behavior
                ),
            ));
        }
    }

    if labels
        .reference_regions
        .contains(ReferenceRegion::SelectedCode)
        && !config.turns.iter().any(|t| t.cursor.is_selection())
    {
        violations.push(Violation::new(
            "labels.reference_regions",
            "selected_code referenced but no selection on any turn",
        ));
    }

    violations
}

impl ChatConfiguration {
    pub fn validate(&self) -> Vec<Violation> {
        validate_configuration(self)
    }
}

// ---------------------------------------------------------------------------
// Training examples
// ---------------------------------------------------------------------------

/// Logical provenance of an admitted example. Sequence numbers stand in for
/// wall-clock timestamps so identical runs stay byte-identical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub run_id: String,
    pub query_id: String,
    pub round: u32,
    pub seq: u64,
}

/// An admitted query-response pair with full provenance. Only responses with
/// a perfect final score of 5 are ever admitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub config: ChatConfiguration,
    /// The assembled prompt: system preamble, prior turns, final user query.
    pub transcript: Vec<Message>,
    pub response: String,
    pub endpoint_id: String,
    pub final_score: u8,
    pub rationale: String,
    pub provenance: Provenance,
}

impl TrainingExample {
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        if self.final_score != 5 {
            violations.push(Violation::new(
                "final_score",
                format!(
                    "admitted example has final score {} (must be 5)",
                    self.final_score
                ),
            ));
        }
        let user_turns = self
            .transcript
            .iter()
            .filter(|m| m.role == Role::User)
            .count();
        if user_turns != self.config.labels.dialog_turns.get() as usize {
            violations.push(Violation::new(
                "transcript",
                format!(
                    "transcript has {user_turns} user turns but configuration says {}",
                    self.config.labels.dialog_turns
                ),
            ));
        }
        violations
    }
}

// ---------------------------------------------------------------------------
// Locale detection
// ---------------------------------------------------------------------------

fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}'
        | '\u{3400}'..='\u{4DBF}'
        | '\u{F900}'..='\u{FAFF}'
        | '\u{3000}'..='\u{303F}'
        | '\u{FF01}'..='\u{FF5E}'
    )
}

/// CJK-codepoint-ratio locale heuristic; tolerant of code-mixed text.
pub fn detect_locale(text: &str, cjk_threshold: f64) -> Locale {
    let mut total = 0usize;
    let mut cjk = 0usize;
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if is_cjk(c) {
            cjk += 1;
        }
    }
    if total > 0 && cjk as f64 / total as f64 > cjk_threshold {
        Locale::Zh
    } else {
        Locale::En
    }
}
