//! Prompt templates shared across the pipeline.
//!
//! Each template starts with a distinctive system line so the deterministic
//! stub backend can dispatch on it. The session preambles double as the
//! hidden-prompt sentinel set: a candidate response echoing one of those
//! instruction sentences verbatim is leaking its prompt.

use crate::taxonomy::{
    Difficulty, Intent, LabelSet, Locale, Message, QueryLocaleRequirement, ReferenceRegion,
    TriggerMethod,
};

/// System preamble for the behavior classifier.
pub const CLASSIFIER_SYSTEM: &str = "You label developer chat interactions from an IDE assistant. \
Reply with exactly one JSON object with fields \"intent\", \"difficulty\" and \"reference_regions\". \
intent is one of: code_generation, code_editing, code_explanation, comment_generation, code_repair, general_qa. \
difficulty is one of: elementary, intermediate, advanced, expert. \
reference_regions is a non-empty array drawn from: historical_dialog, selected_code, context, question, error_messages, general_knowledge.";

/// Appended when the classifier's previous reply failed to parse.
pub const CLASSIFIER_REPAIR: &str = "Your previous reply could not be parsed. \
Reply again with exactly one JSON object and no other text, using only the listed category values.";

/// System preamble for the query generator.
pub const QUERY_GEN_SYSTEM: &str =
    "You write one realistic developer question for an IDE coding assistant. \
Write the question exactly as a developer would type it, with no quotes and no explanations. \
Reply with the question text only.";

/// System preamble for the query quality filter.
pub const QUERY_FILTER_SYSTEM: &str = "You review one generated developer question for quality. \
Judge whether it is clear, answerable in its context, and consistent with its stated attributes. \
Reply with exactly one JSON object: {\"pass\": true|false, \"rationale\": \"...\"}.";

/// Appended when the filter's previous verdict failed to parse.
pub const QUERY_FILTER_REPAIR: &str = "Your previous reply could not be parsed. \
Reply again with exactly one JSON object of the form {\"pass\": true|false, \"rationale\": \"...\"} and no other text.";

/// Session preamble for inline chat. Inline chat renders the reply inside
/// the editor, so the reply must lead with code.
pub const INLINE_CHAT_PREAMBLE: &str =
    "You are an in-editor coding assistant answering inside an inline chat widget. \
Reply with the code change first; never place prose before the first code block.";

/// Session preamble for the chat view panel.
pub const CHAT_VIEW_PREAMBLE: &str = "You are a coding assistant answering in the IDE chat panel. \
Start with a short plain-language explanation before any code block.";

/// System preamble for the response-scoring judge.
pub const SCORING_SYSTEM: &str = "You grade one assistant answer to a developer question. \
Evaluate instruction following and answer quality. \
First write your rationale, then on the final line write exactly: Score: N \
where N is an integer from 1 to 5 and 5 means a perfect answer.";

/// Appended when the judge's previous scoring reply failed to parse.
pub const SCORING_REPAIR: &str = "Your previous reply could not be parsed. \
Repeat the evaluation and make the final line exactly: Score: N with N from 1 to 5.";

/// System preamble for listwise response comparison.
pub const COMPARISON_SYSTEM: &str =
    "You rank several candidate answers to the same developer question. \
Compare them for correctness, completeness and instruction following. \
Reply on the final line with exactly: Best: K where K is the 1-based number of the best candidate.";

/// Instruction sentences embedded in our own session templates. A response
/// containing one of these verbatim is revealing prompt requirements.
pub const HIDDEN_PROMPT_SENTINELS: [&str; 2] = [
    "never place prose before the first code block",
    "Start with a short plain-language explanation before any code block",
];

/// Pre-configured quick-chat buttons; selecting code surfaces these in the
/// IDE and they can replace or prefix a typed query.
pub const QUICK_CHAT_TEMPLATES: [&str; 6] = [
    "explain code",
    "generate comments",
    "/explain",
    "/doc",
    "/fix",
    "/test",
];

pub fn session_preamble(trigger: TriggerMethod) -> &'static str {
    match trigger {
        TriggerMethod::InlineChat => INLINE_CHAT_PREAMBLE,
        TriggerMethod::ChatView => CHAT_VIEW_PREAMBLE,
    }
}

/// Quick-chat templates that make sense for an intent, used when a plan item
/// calls for a template-driven instruction.
pub fn templates_for_intent(intent: Intent) -> &'static [&'static str] {
    match intent {
        Intent::CodeExplanation => &["explain code", "/explain"],
        Intent::CommentGeneration => &["generate comments", "/doc"],
        Intent::CodeRepair => &["/fix"],
        Intent::CodeGeneration => &["/test"],
        _ => &QUICK_CHAT_TEMPLATES,
    }
}

/// Synthetic compiler/runtime error text for code-repair items, keyed by
/// language. `{line}` is substituted with a line number inside the file.
pub fn error_message_bank(language: &str) -> &'static [&'static str] {
    match language {
        "rust" => &[
            "error[E0432]: unresolved import `rand`\n --> src/lib.rs:{line}\nuse of undeclared crate or module `rand`",
            "error[E0308]: mismatched types\n --> src/lib.rs:{line}\nexpected `u32`, found `&str`",
        ],
        "python" => &[
            "Traceback (most recent call last):\n  File \"app.py\", line {line}, in <module>\nModuleNotFoundError: No module named 'requests'",
            "  File \"app.py\", line {line}\nIndentationError: unexpected indent",
        ],
        "go" => &[
            "./main.go:{line}: undefined: fmt.Printn",
            "./main.go:{line}: cannot use x (variable of type string) as int value in assignment",
        ],
        "java" => &[
            "Main.java:{line}: error: cannot find symbol\n        symbol:   variable logger",
            "Main.java:{line}: error: incompatible types: String cannot be converted to int",
        ],
        "javascript" | "typescript" => &[
            "TypeError: Cannot read properties of undefined (reading 'map') at line {line}",
            "ReferenceError: config is not defined at line {line}",
        ],
        "cpp" | "c" => &[
            "main.cpp:{line}: error: 'vector' was not declared in this scope",
            "main.c:{line}: error: expected ';' before 'return'",
        ],
        "csharp" => &[
            "Program.cs({line},13): error CS0103: The name 'Console' does not exist in the current context",
        ],
        "shell" => &["script.sh: line {line}: unexpected EOF while looking for matching `\"'"],
        _ => &["build failed near line {line}: unresolved reference"],
    }
}

fn describe_regions(labels: &LabelSet) -> String {
    labels
        .reference_regions
        .iter()
        .map(|r| r.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn locale_directive(labels: &LabelSet) -> String {
    let target = match labels.query_locale_requirement {
        QueryLocaleRequirement::DiffersFromSystem => labels.system_locale.other(),
        _ => labels.system_locale,
    };
    let explicit = match labels.query_locale_requirement {
        QueryLocaleRequirement::DiffersFromSystem => {
            " The question must explicitly ask for an answer in that language."
        }
        QueryLocaleRequirement::SameAsSystem => {
            " The question must explicitly ask for an answer in that language."
        }
        QueryLocaleRequirement::NoRequirement => "",
    };
    let name = match target {
        Locale::Zh => "Chinese",
        Locale::En => "English",
    };
    format!("Write the question in {name}.{explicit}")
}

fn difficulty_hint(difficulty: Difficulty) -> &'static str {
    match difficulty {
        Difficulty::Elementary => "a beginner would ask",
        Difficulty::Intermediate => "a working developer would ask",
        Difficulty::Advanced => "a senior engineer would ask",
        Difficulty::Expert => "a domain expert would ask",
    }
}

/// Builds the query-generation prompt for one turn. `history` carries the
/// session transcript so far, so follow-up questions can reference it.
pub fn query_generation_messages(
    labels: &LabelSet,
    turn_index: u32,
    selected_code: Option<&str>,
    context_snippet: Option<&str>,
    error_message: Option<&str>,
    history: &[Message],
) -> Vec<Message> {
    let mut body = String::new();
    body.push_str(&format!(
        "Attributes:\n- intent: {}\n- difficulty: {} ({})\n- reference regions: {}\n- programming language: {}\n- trigger surface: {}\n- turn: {} of {}\n",
        labels.intent,
        labels.difficulty,
        difficulty_hint(labels.difficulty),
        describe_regions(labels),
        labels.programming_language,
        labels.trigger_method,
        turn_index + 1,
        labels.dialog_turns,
    ));
    body.push_str(&format!("- locale: {}\n", locale_directive(labels)));
    if let Some(code) = selected_code {
        body.push_str("\nSelected code:\n");
        body.push_str(code);
        body.push('\n');
    }
    if let Some(ctx) = context_snippet {
        body.push_str("\nSurrounding file context:\n");
        body.push_str(ctx);
        body.push('\n');
    }
    if let Some(err) = error_message {
        body.push_str("\nError messages shown to the developer:\n");
        body.push_str(err);
        body.push('\n');
    }
    if !history.is_empty() {
        body.push_str("\nDialogue so far:\n");
        for message in history {
            let who = match message.role {
                crate::taxonomy::Role::User => "developer",
                crate::taxonomy::Role::Assistant => "assistant",
                crate::taxonomy::Role::System => continue,
            };
            body.push_str(&format!("{who}: {}\n", message.content));
        }
        body.push_str("\nWrite the developer's next follow-up question. It must build on the dialogue above.\n");
    } else {
        body.push_str("\nWrite the developer's question.\n");
    }
    vec![Message::system(QUERY_GEN_SYSTEM), Message::user(body)]
}

/// Builds the quality-filter prompt for a generated query.
pub fn query_filter_messages(query: &str, labels: &LabelSet, repair: bool) -> Vec<Message> {
    let mut system = QUERY_FILTER_SYSTEM.to_string();
    if repair {
        system.push(' ');
        system.push_str(QUERY_FILTER_REPAIR);
    }
    let body = format!(
        "Question under review:\n{query}\n\nStated attributes: intent={}, difficulty={}, language={}, regions={}",
        labels.intent,
        labels.difficulty,
        labels.programming_language,
        describe_regions(labels),
    );
    vec![Message::system(system), Message::user(body)]
}

/// Builds the classifier prompt for one logged interaction.
pub fn classifier_messages(
    query: &str,
    response: &str,
    editor_summary: &str,
    repair: bool,
) -> Vec<Message> {
    let mut system = CLASSIFIER_SYSTEM.to_string();
    if repair {
        system.push(' ');
        system.push_str(CLASSIFIER_REPAIR);
    }
    let body = format!(
        "Editor state: {editor_summary}\n\nDeveloper query:\n{query}\n\nAssistant response:\n{response}"
    );
    vec![Message::system(system), Message::user(body)]
}

/// Builds the scoring prompt: the judged conversation plus one candidate.
pub fn scoring_messages(final_prompt: &[Message], candidate: &str, repair: bool) -> Vec<Message> {
    let mut system = SCORING_SYSTEM.to_string();
    if repair {
        system.push(' ');
        system.push_str(SCORING_REPAIR);
    }
    let mut body = String::from("Conversation:\n");
    for message in final_prompt {
        let who = match message.role {
            crate::taxonomy::Role::System => "system",
            crate::taxonomy::Role::User => "developer",
            crate::taxonomy::Role::Assistant => "assistant",
        };
        body.push_str(&format!("[{who}]\n{}\n", message.content));
    }
    body.push_str("\nCandidate answer:\n");
    body.push_str(candidate);
    vec![Message::system(system), Message::user(body)]
}

/// Builds the listwise comparison prompt over equally perfect candidates.
pub fn comparison_messages(final_prompt: &[Message], candidates: &[&str]) -> Vec<Message> {
    let mut body = String::from("Question:\n");
    for message in final_prompt
        .iter()
        .filter(|m| m.role == crate::taxonomy::Role::User)
    {
        body.push_str(&message.content);
        body.push('\n');
    }
    for (idx, text) in candidates.iter().enumerate() {
        body.push_str(&format!("\nCandidate {}:\n{text}\n", idx + 1));
    }
    vec![Message::system(COMPARISON_SYSTEM), Message::user(body)]
}

/// Marks regions considered reference-worthy for prompt assembly decisions.
pub fn wants_region(labels: &LabelSet, region: ReferenceRegion) -> bool {
    labels.reference_regions.contains(region)
}

/// Extracts the first balanced `{...}` object from a model reply; models
/// often wrap their JSON in prose.
pub fn first_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    for (offset, c) in text[start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + offset + 1]);
                }
            }
            _ => {}
        }
    }
    None
}
