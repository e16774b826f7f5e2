//! Response judgment: model scoring, rule-based deduction, and selection.
//!
//! Every candidate gets a 1-5 base score from the judge model (rationale
//! first, then the score). Deterministic detectors then subtract penalty
//! points for violations that rules catch more reliably than a model: wrong
//! response shape for the chat surface, locale mismatch, broken markdown,
//! unrequested edits, prompt leakage, truncation. Only candidates whose final
//! score is exactly 5 are admissible; several perfect candidates are ranked
//! listwise and the best one wins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{CandidateResponse, FinishReason, Gateway, GatewayRole};
use crate::prompts;
use crate::taxonomy::{
    detect_locale, Intent, Locale, Message, QueryLocaleRequirement, TriggerMethod,
};

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge endpoint failed: {0}")]
    Gateway(String),
}

// ---------------------------------------------------------------------------
// Deduction rules
// ---------------------------------------------------------------------------

/// Which chat surface a deduction rule applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scene {
    InlineChat,
    ChatView,
    Both,
}

impl Scene {
    pub fn applies_to(self, trigger: TriggerMethod) -> bool {
        match self {
            Scene::Both => true,
            Scene::InlineChat => trigger == TriggerMethod::InlineChat,
            Scene::ChatView => trigger == TriggerMethod::ChatView,
        }
    }
}

/// One deduction rule: the scene it applies to, a stable item id, and the
/// points it subtracts from the base score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DeductionRule {
    pub scene: Scene,
    pub item: &'static str,
    pub points: u8,
    pub description: &'static str,
}

/// The complete rule set, in canonical order.
pub const DEDUCTION_RULES: [DeductionRule; 7] = [
    DeductionRule {
        scene: Scene::InlineChat,
        item: "text_before_code",
        points: 1,
        description: "text description before the code",
    },
    DeductionRule {
        scene: Scene::ChatView,
        item: "missing_text_description",
        points: 1,
        description: "lack of basic text description",
    },
    DeductionRule {
        scene: Scene::Both,
        item: "locale_mismatch",
        points: 1,
        description:
            "response language inconsistent with the instruction request and system setting",
    },
    DeductionRule {
        scene: Scene::Both,
        item: "unbalanced_fences",
        points: 1,
        description: "incomplete code markdown symbols",
    },
    DeductionRule {
        scene: Scene::Both,
        item: "unrequested_edit",
        points: 2,
        description: "altering the original code when editing is not required",
    },
    DeductionRule {
        scene: Scene::Both,
        item: "prompt_leak",
        points: 2,
        description: "revealing the requirements in the prompt",
    },
    DeductionRule {
        scene: Scene::Both,
        item: "truncated",
        points: 5,
        description: "incomplete response, truncated in the middle of words or code",
    },
];

pub fn rule_by_item(item: &str) -> Option<&'static DeductionRule> {
    DEDUCTION_RULES.iter().find(|r| r.item == item)
}

/// JSON export of the rule table, for audit.
pub fn deduction_table_json() -> String {
    serde_json::to_string_pretty(&DEDUCTION_RULES).expect("rule table serializes")
}

// ---------------------------------------------------------------------------
// Detector configuration and context
// ---------------------------------------------------------------------------

/// Every detector threshold is configuration, not code.
#[derive(Debug, Clone)]
pub struct JudgeConfig {
    /// CJK-codepoint ratio above which prose counts as Chinese.
    pub cjk_threshold: f64,
    /// Minimum prose (in characters, whitespace-collapsed) a chat-view
    /// response must carry outside code fences.
    pub prose_min_chars: usize,
    /// Near-copy similarity band for the unrequested-edit detector.
    pub similarity_low: f64,
    pub similarity_high: f64,
    /// Phrases whose verbatim appearance means the prompt leaked.
    pub sentinels: Vec<String>,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            cjk_threshold: 0.3,
            prose_min_chars: 20,
            similarity_low: 0.5,
            similarity_high: 0.999,
            sentinels: prompts::HIDDEN_PROMPT_SENTINELS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Facts about the judged query that the detectors need.
#[derive(Debug, Clone)]
pub struct DeductionContext<'a> {
    pub scene: TriggerMethod,
    pub intent: Intent,
    pub selected_code: Option<&'a str>,
    pub system_locale: Locale,
    pub query_locale_requirement: QueryLocaleRequirement,
}

impl DeductionContext<'_> {
    /// The locale the response is required to use: an explicit request wins,
    /// otherwise the system locale.
    pub fn required_locale(&self) -> Locale {
        match self.query_locale_requirement {
            QueryLocaleRequirement::DiffersFromSystem => self.system_locale.other(),
            _ => self.system_locale,
        }
    }
}

// ---------------------------------------------------------------------------
// Markdown fence scanning
// ---------------------------------------------------------------------------

#[derive(Debug, Default)]
struct FenceScan {
    delimiter_count: usize,
    before_first_fence: String,
    prose_outside: String,
    blocks: Vec<String>,
    ends_inside_fence: bool,
}

fn scan_fences(text: &str) -> FenceScan {
    let mut scan = FenceScan::default();
    let mut in_code = false;
    let mut current_block = String::new();
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            scan.delimiter_count += 1;
            if in_code {
                scan.blocks.push(std::mem::take(&mut current_block));
            }
            in_code = !in_code;
            continue;
        }
        if in_code {
            current_block.push_str(line);
            current_block.push('\n');
        } else {
            if scan.delimiter_count == 0 {
                scan.before_first_fence.push_str(line);
                scan.before_first_fence.push('\n');
            }
            scan.prose_outside.push_str(line);
            scan.prose_outside.push('\n');
        }
    }
    if in_code && !current_block.is_empty() {
        scan.blocks.push(current_block);
    }
    scan.ends_inside_fence = in_code;
    scan
}

/// Line-level similarity in [0, 1]: twice the longest common subsequence of
/// normalized lines over the total line count. 1.0 means a verbatim copy.
pub fn line_similarity(a: &str, b: &str) -> f64 {
    fn norm(s: &str) -> Vec<&str> {
        s.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
    }
    let (la, lb) = (norm(a), norm(b));
    if la.is_empty() || lb.is_empty() {
        return 0.0;
    }
    let mut dp = vec![0usize; lb.len() + 1];
    for &line_a in &la {
        let mut prev = 0usize;
        for (j, &line_b) in lb.iter().enumerate() {
            let tmp = dp[j + 1];
            dp[j + 1] = if line_a == line_b {
                prev + 1
            } else {
                dp[j + 1].max(dp[j])
            };
            prev = tmp;
        }
    }
    2.0 * dp[lb.len()] as f64 / (la.len() + lb.len()) as f64
}

fn collapsed_len(text: &str) -> usize {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .chars()
        .count()
}

fn ends_mid_word(text: &str) -> bool {
    text.trim_end()
        .chars()
        .next_back()
        .map(|c| c.is_alphanumeric())
        .unwrap_or(false)
}

// ---------------------------------------------------------------------------
// Deduction application
// ---------------------------------------------------------------------------

/// One rule that fired against a candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiredDeduction {
    pub item: String,
    pub points: u8,
}

/// Runs every applicable detector against a candidate. Pure and
/// deterministic; candidates with an error finish are never judged.
pub fn apply_deductions(
    candidate: &CandidateResponse,
    ctx: &DeductionContext<'_>,
    config: &JudgeConfig,
) -> Vec<FiredDeduction> {
    debug_assert!(candidate.finish != FinishReason::Error);
    let text = &candidate.text;
    let scan = scan_fences(text);
    let mut fired = Vec::new();
    let mut fire = |item: &'static str| {
        let rule = rule_by_item(item).expect("rule exists");
        fired.push(FiredDeduction {
            item: rule.item.to_string(),
            points: rule.points,
        });
    };

    // (a) inline chat must lead with the code.
    if ctx.scene == TriggerMethod::InlineChat
        && scan.delimiter_count > 0
        && !scan.before_first_fence.trim().is_empty()
    {
        fire("text_before_code");
    }

    // (b) chat view needs real prose around the code.
    if ctx.scene == TriggerMethod::ChatView
        && collapsed_len(&scan.prose_outside) < config.prose_min_chars
    {
        fire("missing_text_description");
    }

    // (c) response locale must match the requirement.
    let prose = scan.prose_outside.trim();
    if collapsed_len(prose) >= 4
        && detect_locale(prose, config.cjk_threshold) != ctx.required_locale()
    {
        fire("locale_mismatch");
    }

    // (d) fence delimiters must pair up.
    if scan.delimiter_count % 2 == 1 {
        fire("unbalanced_fences");
    }

    // (e) explanation/comment intents must not hand back edited code.
    if matches!(
        ctx.intent,
        Intent::CodeExplanation | Intent::CommentGeneration
    ) {
        if let Some(selected) = ctx.selected_code {
            let near_copy = scan.blocks.iter().any(|block| {
                let similarity = line_similarity(selected, block);
                similarity >= config.similarity_low && similarity <= config.similarity_high
            });
            if near_copy {
                fire("unrequested_edit");
            }
        }
    }

    // (f) instruction sentences from our own templates must not leak.
    if config
        .sentinels
        .iter()
        .any(|s| !s.is_empty() && text.contains(s.as_str()))
    {
        fire("prompt_leak");
    }

    // (g) truncation: capped generation, an open fence at EOF, or text that
    // stops mid-word with no terminal punctuation.
    if candidate.finish == FinishReason::LengthCapped
        || scan.ends_inside_fence
        || ends_mid_word(text)
    {
        fire("truncated");
    }

    fired
}

// ---------------------------------------------------------------------------
// Score cards
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRef {
    pub query_id: String,
    pub endpoint_id: String,
}

/// One candidate's full judgment: model base score, fired deductions, and
/// the clamped final score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub candidate: CandidateRef,
    pub base_score: u8,
    pub rationale: String,
    pub deductions: Vec<FiredDeduction>,
    pub final_score: u8,
}

/// final = clamp(base − Σ points, 0, 5). The floor never matters for the
/// ==5 admission test but keeps downstream metrics well-defined.
pub fn finalize_score(base_score: u8, deductions: &[FiredDeduction]) -> u8 {
    let penalty: u8 = deductions
        .iter()
        .map(|d| d.points)
        .fold(0, u8::saturating_add);
    base_score.saturating_sub(penalty).min(5)
}

impl ScoreCard {
    pub fn new(
        candidate: CandidateRef,
        base_score: u8,
        rationale: String,
        deductions: Vec<FiredDeduction>,
    ) -> Self {
        let final_score = finalize_score(base_score, &deductions);
        ScoreCard {
            candidate,
            base_score,
            rationale,
            deductions,
            final_score,
        }
    }
}

// ---------------------------------------------------------------------------
// Model scoring
// ---------------------------------------------------------------------------

fn parse_score_reply(text: &str) -> Option<(u8, String)> {
    let lower = text.to_lowercase();
    let idx = lower.rfind("score:")?;
    let tail = &text[idx + "score:".len()..];
    let digits: String = tail
        .trim_start()
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    let score: u8 = digits.parse().ok()?;
    if !(1..=5).contains(&score) {
        return None;
    }
    let rationale = text[..idx].trim().to_string();
    Some((score, rationale))
}

/// Asks the judge model for a 1-5 base score, rationale first. One repair
/// retry on an unparseable or out-of-range reply, then score 1 with an
/// "unparseable" rationale. Gateway failures bubble up so the caller can
/// requeue the session.
pub fn score_response(
    final_prompt: &[Message],
    response_text: &str,
    gateway: &Gateway,
) -> Result<(u8, String), JudgeError> {
    for repair in [false, true] {
        let messages = prompts::scoring_messages(final_prompt, response_text, repair);
        let reply = gateway.complete_role(GatewayRole::Judge, &messages);
        if reply.is_error() {
            return Err(JudgeError::Gateway(reply.error.unwrap_or_default()));
        }
        if let Some(parsed) = parse_score_reply(&reply.text) {
            return Ok(parsed);
        }
    }
    Ok((1, "unparseable".to_string()))
}

// ---------------------------------------------------------------------------
// Comparison and selection
// ---------------------------------------------------------------------------

fn parse_best_reply(text: &str, len: usize) -> Option<usize> {
    let lower = text.to_lowercase();
    let idx = lower.rfind("best:")?;
    let tail = &text[idx + "best:".len()..];
    let digits: String = tail
        .trim_start()
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    let best: usize = digits.parse().ok()?;
    if (1..=len).contains(&best) {
        Some(best - 1)
    } else {
        None
    }
}

/// Picks the best of several perfect-scoring candidates with one listwise
/// ranking call. A tie, an unparseable ranking, or a judge failure falls back
/// to the earliest pool position (index 0 of the given order).
pub fn compare_responses(
    final_prompt: &[Message],
    candidates: &[&CandidateResponse],
    gateway: &Gateway,
) -> usize {
    debug_assert!(candidates.len() >= 2);
    let texts: Vec<&str> = candidates.iter().map(|c| c.text.as_str()).collect();
    let messages = prompts::comparison_messages(final_prompt, &texts);
    let reply = gateway.complete_role(GatewayRole::Judge, &messages);
    if reply.is_error() {
        return 0;
    }
    parse_best_reply(&reply.text, candidates.len()).unwrap_or(0)
}

/// Outcome of judging one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    /// Index into the scored-candidate list.
    Admit { index: usize },
    /// No perfect candidate; the query goes to the next production round.
    Requeue,
}

/// Applies the exactly-5 admission rule over a query's scorecards: zero
/// perfect candidates requeue the query, one is admitted directly, several
/// go through comparison.
pub fn select_training_example(
    final_prompt: &[Message],
    scored: &[(CandidateResponse, ScoreCard)],
    gateway: &Gateway,
) -> Selection {
    let fives: Vec<usize> = scored
        .iter()
        .enumerate()
        .filter(|(_, (_, card))| card.final_score == 5)
        .map(|(i, _)| i)
        .collect();
    match fives.len() {
        0 => Selection::Requeue,
        1 => Selection::Admit { index: fives[0] },
        _ => {
            let candidates: Vec<&CandidateResponse> = fives.iter().map(|&i| &scored[i].0).collect();
            let winner = compare_responses(final_prompt, &candidates, gateway);
            Selection::Admit {
                index: fives[winner],
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{stub_pool_config, Gateway, StubReply, StubRule, StubSpec};

    fn candidate(text: &str, finish: FinishReason) -> CandidateResponse {
        CandidateResponse {
            endpoint_id: "ep".into(),
            text: text.into(),
            finish,
            latency_ms: 0,
            prompt_tokens: None,
            completion_tokens: None,
            error: None,
        }
    }

    fn ctx(scene: TriggerMethod) -> DeductionContext<'static> {
        DeductionContext {
            scene,
            intent: Intent::CodeGeneration,
            selected_code: None,
            system_locale: Locale::En,
            query_locale_requirement: QueryLocaleRequirement::NoRequirement,
        }
    }

    fn items(fired: &[FiredDeduction]) -> Vec<&str> {
        fired.iter().map(|f| f.item.as_str()).collect()
    }

    #[test]
    fn rule_table_matches_golden_copy() {
        let golden: [(&str, &str, u8); 7] = [
            ("inline_chat", "text_before_code", 1),
            ("chat_view", "missing_text_description", 1),
            ("both", "locale_mismatch", 1),
            ("both", "unbalanced_fences", 1),
            ("both", "unrequested_edit", 2),
            ("both", "prompt_leak", 2),
            ("both", "truncated", 5),
        ];
        assert_eq!(DEDUCTION_RULES.len(), golden.len());
        for (rule, (scene, item, points)) in DEDUCTION_RULES.iter().zip(golden) {
            let scene_str = match rule.scene {
                Scene::InlineChat => "inline_chat",
                Scene::ChatView => "chat_view",
                Scene::Both => "both",
            };
            assert_eq!((scene_str, rule.item, rule.points), (scene, item, points));
        }
    }

    #[test]
    fn inline_prose_before_code_costs_one_point() {
        let response = candidate(
            "Here is the code:\n```go\nfunc main() {}\n```",
            FinishReason::Complete,
        );
        let fired = apply_deductions(
            &response,
            &ctx(TriggerMethod::InlineChat),
            &JudgeConfig::default(),
        );
        assert_eq!(items(&fired), ["text_before_code"]);
        assert_eq!(fired[0].points, 1);
    }

    #[test]
    fn chat_view_without_prose_costs_one_point() {
        let response = candidate("```py\nprint(1)\n```", FinishReason::Complete);
        let fired = apply_deductions(
            &response,
            &ctx(TriggerMethod::ChatView),
            &JudgeConfig::default(),
        );
        assert_eq!(items(&fired), ["missing_text_description"]);
    }

    #[test]
    fn open_fence_truncation_drives_final_to_zero() {
        let response = candidate(
            "The fix is below.\n```rust\nfn main() {",
            FinishReason::Complete,
        );
        let fired = apply_deductions(
            &response,
            &ctx(TriggerMethod::ChatView),
            &JudgeConfig::default(),
        );
        assert!(items(&fired).contains(&"truncated"));
        assert!(items(&fired).contains(&"unbalanced_fences"));
        let card = ScoreCard::new(
            CandidateRef {
                query_id: "q".into(),
                endpoint_id: "ep".into(),
            },
            5,
            "r".into(),
            fired,
        );
        assert_eq!(card.final_score, 0);
    }

    #[test]
    fn locale_mismatch_fires_against_required_locale() {
        let mut context = ctx(TriggerMethod::ChatView);
        context.system_locale = Locale::Zh;
        let response = candidate(
            "This function adds two numbers and returns the sum.",
            FinishReason::Complete,
        );
        let fired = apply_deductions(&response, &context, &JudgeConfig::default());
        assert!(items(&fired).contains(&"locale_mismatch"));

        // An explicit differs-from-system request flips the requirement.
        context.query_locale_requirement = QueryLocaleRequirement::DiffersFromSystem;
        let fired = apply_deductions(&response, &context, &JudgeConfig::default());
        assert!(!items(&fired).contains(&"locale_mismatch"));
    }

    #[test]
    fn near_copy_fires_but_verbatim_quote_does_not() {
        let selected: String = (1..=10).map(|i| format!("line number {i}\n")).collect();
        let mut altered: String = (1..=7).map(|i| format!("line number {i}\n")).collect();
        altered.push_str("changed a\nchanged b\nchanged c\n");
        let mut context = ctx(TriggerMethod::ChatView);
        context.intent = Intent::CodeExplanation;
        context.selected_code = Some(&selected);

        let near = candidate(
            &format!("This block mostly repeats the selection with edits applied to it.\n```\n{altered}```"),
            FinishReason::Complete,
        );
        let fired = apply_deductions(&near, &context, &JudgeConfig::default());
        assert!(items(&fired).contains(&"unrequested_edit"));

        let verbatim = candidate(
            &format!("The selection reads as follows, quoted without changes.\n```\n{selected}```"),
            FinishReason::Complete,
        );
        let fired = apply_deductions(&verbatim, &context, &JudgeConfig::default());
        assert!(!items(&fired).contains(&"unrequested_edit"));
    }

    #[test]
    fn sentinel_leak_costs_two_points() {
        let response = candidate(
            &format!(
                "I was told: {}. Anyway, here you go.",
                prompts::HIDDEN_PROMPT_SENTINELS[0]
            ),
            FinishReason::Complete,
        );
        let fired = apply_deductions(
            &response,
            &ctx(TriggerMethod::ChatView),
            &JudgeConfig::default(),
        );
        assert!(items(&fired).contains(&"prompt_leak"));
        assert_eq!(
            fired
                .iter()
                .find(|f| f.item == "prompt_leak")
                .unwrap()
                .points,
            2
        );
    }

    #[test]
    fn length_capped_and_mid_word_count_as_truncated() {
        let capped = candidate("An answer that got cut of", FinishReason::LengthCapped);
        let fired = apply_deductions(
            &capped,
            &ctx(TriggerMethod::ChatView),
            &JudgeConfig::default(),
        );
        assert!(items(&fired).contains(&"truncated"));

        let mid_word = candidate(
            "The function first parses the header and then it sor",
            FinishReason::Complete,
        );
        let fired = apply_deductions(
            &mid_word,
            &ctx(TriggerMethod::ChatView),
            &JudgeConfig::default(),
        );
        assert!(items(&fired).contains(&"truncated"));

        let finished = candidate(
            "The function parses the header and returns the result.",
            FinishReason::Complete,
        );
        let fired = apply_deductions(
            &finished,
            &ctx(TriggerMethod::ChatView),
            &JudgeConfig::default(),
        );
        assert!(!items(&fired).contains(&"truncated"));
    }

    #[test]
    fn detectors_are_deterministic() {
        let response = candidate(
            "Some prose.\n```\ncode\n```\nMore prose here.",
            FinishReason::Complete,
        );
        let context = ctx(TriggerMethod::ChatView);
        let config = JudgeConfig::default();
        assert_eq!(
            apply_deductions(&response, &context, &config),
            apply_deductions(&response, &context, &config)
        );
    }

    fn judge_gateway(reply: StubReply) -> Gateway {
        let spec = StubSpec {
            rules: vec![
                StubRule {
                    system_contains: Some("grade one assistant answer".into()),
                    last_user_contains: None,
                    reply: reply.clone(),
                },
                StubRule {
                    system_contains: Some("rank several candidate answers".into()),
                    last_user_contains: None,
                    reply,
                },
            ],
            default: StubReply::EchoLastUser,
        };
        Gateway::from_config(stub_pool_config(vec![("judge", spec)])).unwrap()
    }

    #[test]
    fn score_parses_rationale_then_score() {
        let gateway = judge_gateway(StubReply::Fixed {
            text: "The answer is complete and correct.\nScore: 5".into(),
            truncated: false,
        });
        let (score, rationale) = score_response(&[Message::user("q")], "answer", &gateway).unwrap();
        assert_eq!(score, 5);
        assert_eq!(rationale, "The answer is complete and correct.");
    }

    #[test]
    fn out_of_range_score_retries_then_unparseable() {
        let gateway = judge_gateway(StubReply::Fixed {
            text: "Score: 7".into(),
            truncated: false,
        });
        let (score, rationale) = score_response(&[Message::user("q")], "answer", &gateway).unwrap();
        assert_eq!(score, 1);
        assert_eq!(rationale, "unparseable");
    }

    #[test]
    fn judge_outage_is_an_error_not_a_score() {
        let gateway = judge_gateway(StubReply::Fail {
            message: "judge down".into(),
        });
        assert!(score_response(&[Message::user("q")], "answer", &gateway).is_err());
    }

    fn scored(
        query_id: &str,
        endpoint: &str,
        text: &str,
        base: u8,
    ) -> (CandidateResponse, ScoreCard) {
        let response = CandidateResponse {
            endpoint_id: endpoint.into(),
            text: text.into(),
            finish: FinishReason::Complete,
            latency_ms: 0,
            prompt_tokens: None,
            completion_tokens: None,
            error: None,
        };
        let card = ScoreCard::new(
            CandidateRef {
                query_id: query_id.into(),
                endpoint_id: endpoint.into(),
            },
            base,
            "r".into(),
            vec![],
        );
        (response, card)
    }

    #[test]
    fn unique_perfect_candidate_is_admitted() {
        let gateway = judge_gateway(StubReply::Fail {
            message: "never called".into(),
        });
        let scored = vec![
            scored("q", "a", "ta", 5),
            scored("q", "b", "tb", 3),
            scored("q", "c", "tc", 4),
        ];
        assert_eq!(
            select_training_example(&[Message::user("q")], &scored, &gateway),
            Selection::Admit { index: 0 }
        );
    }

    #[test]
    fn no_perfect_candidate_requeues() {
        let gateway = judge_gateway(StubReply::Fail {
            message: "never called".into(),
        });
        let scored = vec![scored("q", "a", "ta", 4), scored("q", "b", "tb", 4)];
        assert_eq!(
            select_training_example(&[Message::user("q")], &scored, &gateway),
            Selection::Requeue
        );
    }

    #[test]
    fn several_perfect_candidates_go_through_comparison() {
        let gateway = judge_gateway(StubReply::Fixed {
            text: "The second is more precise.\nBest: 2".into(),
            truncated: false,
        });
        let scored = vec![
            scored("q", "a", "ta", 5),
            scored("q", "b", "tb", 5),
            scored("q", "c", "tc", 2),
        ];
        assert_eq!(
            select_training_example(&[Message::user("q")], &scored, &gateway),
            Selection::Admit { index: 1 }
        );
    }

    #[test]
    fn unparseable_ranking_falls_back_to_pool_order() {
        let gateway = judge_gateway(StubReply::Fixed {
            text: "they are both great".into(),
            truncated: false,
        });
        let scored = vec![scored("q", "a", "ta", 5), scored("q", "b", "tb", 5)];
        assert_eq!(
            select_training_example(&[Message::user("q")], &scored, &gateway),
            Selection::Admit { index: 0 }
        );
    }

    #[test]
    fn score_arithmetic_clamps_into_range() {
        for base in 1..=5u8 {
            for penalty_items in [
                vec![],
                vec!["locale_mismatch"],
                vec!["truncated", "prompt_leak"],
            ] {
                let deductions: Vec<FiredDeduction> = penalty_items
                    .iter()
                    .map(|item| {
                        let rule = rule_by_item(item).unwrap();
                        FiredDeduction {
                            item: rule.item.into(),
                            points: rule.points,
                        }
                    })
                    .collect();
                let total: u8 = deductions.iter().map(|d| d.points).sum();
                let final_score = finalize_score(base, &deductions);
                assert_eq!(final_score, base.saturating_sub(total).min(5));
                assert!(final_score <= base);
            }
        }
    }

    #[test]
    fn table_exports_as_json() {
        let json = deduction_table_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value.as_array().unwrap().len(), 7);
        assert_eq!(value[6]["points"], 5);
    }
}
