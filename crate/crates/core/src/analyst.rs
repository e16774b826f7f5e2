//! Developer-behavior analysis and production planning.
//!
//! Logged interactions are labeled along all ten dimensions: the seven cheap
//! ones by a deterministic rule matcher, the remaining three (reference
//! regions, difficulty, intent) by a model behind the gateway. Labels
//! aggregate into a [`BehaviorProfile`] of per-dimension frequencies, and the
//! planner turns a profile into a concrete [`ProductionPlan`] whose marginals
//! track the profile while honoring hard compatibility constraints.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayRole};
use crate::prompts;
use crate::taxonomy::{
    cursor_behavior_of, CursorBehavior, DialogTurns, Difficulty, Dimension, InstructionType,
    Intent, LabelSet, LanguageRegistry, Locale, ProgrammingLanguage, QaInteraction,
    QueryLocaleRequirement, ReferenceRegion, ReferenceRegions, TriggerMethod,
};

#[derive(Debug, Error)]
pub enum AnalystError {
    #[error("no interactions")]
    NoInteractions,
    #[error("plan total must be at least 1")]
    InvalidTotal,
    #[error("profile is missing dimension {0}")]
    MissingDimension(String),
    #[error("profile dimension {0} has no positive-mass category")]
    EmptyDimension(String),
    #[error("profile category {value:?} is invalid for {dimension}: {reason}")]
    BadCategory {
        dimension: String,
        value: String,
        reason: String,
    },
    #[error("plan constraints unsatisfiable: {constraint}")]
    Unsatisfiable { constraint: &'static str },
}

// ---------------------------------------------------------------------------
// Rule matcher (seven dimensions)
// ---------------------------------------------------------------------------

/// Configuration for the rule matcher; all heuristics are data.
#[derive(Debug, Clone)]
pub struct ClassifierConfig {
    pub templates: Vec<String>,
    pub registry: LanguageRegistry,
    pub zh_directives: Vec<String>,
    pub en_directives: Vec<String>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            templates: prompts::QUICK_CHAT_TEMPLATES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            registry: LanguageRegistry::default(),
            zh_directives: [
                "answer in chinese",
                "reply in chinese",
                "respond in chinese",
                "in chinese",
                "use chinese",
                "用中文",
                "中文回答",
                "用汉语",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            en_directives: [
                "answer in english",
                "reply in english",
                "respond in english",
                "in english",
                "use english",
                "用英文",
                "用英语",
                "英文回答",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

/// Labels for the seven rule-classified dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleLabels {
    pub cursor_behavior: CursorBehavior,
    pub trigger_method: TriggerMethod,
    pub instruction_type: InstructionType,
    pub programming_language: ProgrammingLanguage,
    pub system_locale: Locale,
    pub dialog_turns: DialogTurns,
    pub query_locale_requirement: QueryLocaleRequirement,
}

fn detect_instruction_type(query: &str, templates: &[String]) -> InstructionType {
    let normalized = query.trim().to_lowercase();
    // Longest template first so a longer button name wins over its prefix.
    let mut sorted: Vec<&String> = templates.iter().collect();
    sorted.sort_by_key(|t| std::cmp::Reverse(t.len()));
    for template in sorted {
        let template = template.to_lowercase();
        if normalized == template {
            return InstructionType::TemplateOnly;
        }
        if let Some(rest) = normalized.strip_prefix(&template) {
            // Require a word boundary so "explain code" does not swallow
            // "explain codebase".
            let boundary = rest
                .chars()
                .next()
                .map(|c| !c.is_alphanumeric())
                .unwrap_or(false);
            if boundary && !rest.trim().is_empty() {
                return InstructionType::TemplatePlusQuery;
            }
        }
    }
    InstructionType::Query
}

fn detect_locale_requirement(
    query: &str,
    system_locale: Locale,
    config: &ClassifierConfig,
) -> QueryLocaleRequirement {
    let haystack = query.to_lowercase();
    let earliest = |directives: &[String]| -> Option<usize> {
        directives
            .iter()
            .filter_map(|needle| haystack.find(needle.as_str()))
            .min()
    };
    let zh = earliest(&config.zh_directives);
    let en = earliest(&config.en_directives);
    let requested = match (zh, en) {
        (Some(z), Some(e)) if z <= e => Some(Locale::Zh),
        (Some(_), Some(_)) => Some(Locale::En),
        (Some(_), None) => Some(Locale::Zh),
        (None, Some(_)) => Some(Locale::En),
        (None, None) => None,
    };
    match requested {
        Some(locale) if locale == system_locale => QueryLocaleRequirement::SameAsSystem,
        Some(_) => QueryLocaleRequirement::DiffersFromSystem,
        None => QueryLocaleRequirement::NoRequirement,
    }
}

/// Deterministically labels the seven rule dimensions of one interaction.
///
/// An unmapped file extension yields the `unknown` language sentinel rather
/// than a failure; the interaction's own language hint is the fallback.
pub fn classify_rule_dims(interaction: &QaInteraction, config: &ClassifierConfig) -> RuleLabels {
    let snapshot = &interaction.snapshot;
    let cursor_behavior = cursor_behavior_of(&snapshot.selections, snapshot.active_file.is_some());

    let mut language = snapshot
        .active_file
        .as_deref()
        .map(|path| config.registry.language_for_path(path))
        .unwrap_or_else(ProgrammingLanguage::unknown);
    if language.is_unknown() {
        if let Some(hint) = &interaction.language_hint {
            if let Ok(parsed) = config.registry.parse(hint) {
                language = parsed;
            }
        }
    }

    RuleLabels {
        cursor_behavior,
        trigger_method: interaction.trigger_method,
        instruction_type: detect_instruction_type(&interaction.query, &config.templates),
        programming_language: language,
        system_locale: interaction.system_locale,
        dialog_turns: DialogTurns::new(1 + interaction.prior_turn_ids.len() as u32).unwrap(),
        query_locale_requirement: detect_locale_requirement(
            &interaction.query,
            interaction.system_locale,
            config,
        ),
    }
}

// ---------------------------------------------------------------------------
// Model classifier (last three dimensions)
// ---------------------------------------------------------------------------

/// Labels for the three model-classified dimensions; `None` means the model
/// never produced a valid label and the dimension stays unknown.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelLabels {
    pub intent: Option<Intent>,
    pub difficulty: Option<Difficulty>,
    pub reference_regions: Option<ReferenceRegions>,
}

#[derive(Debug, Clone)]
pub enum ModelClassification {
    Labeled(ModelLabels),
    /// Endpoint failure after retries; skipped in profile aggregation.
    Unclassified {
        cause: String,
    },
}

fn parse_classifier_reply(text: &str) -> Option<ModelLabels> {
    let object = prompts::first_json_object(text)?;
    let value: serde_json::Value = serde_json::from_str(object).ok()?;
    let intent = Intent::parse(value.get("intent")?.as_str()?).ok()?;
    let difficulty = Difficulty::parse(value.get("difficulty")?.as_str()?).ok()?;
    let regions = value
        .get("reference_regions")?
        .as_array()?
        .iter()
        .map(|v| v.as_str().and_then(|s| ReferenceRegion::parse(s).ok()))
        .collect::<Option<std::collections::BTreeSet<_>>>()?;
    let reference_regions = ReferenceRegions::new(regions).ok()?;
    Some(ModelLabels {
        intent: Some(intent),
        difficulty: Some(difficulty),
        reference_regions: Some(reference_regions),
    })
}

fn editor_summary(interaction: &QaInteraction) -> String {
    let snapshot = &interaction.snapshot;
    let file = snapshot
        .active_file
        .as_deref()
        .unwrap_or("<no active file>");
    let selections = if snapshot.selections.is_empty() {
        "none".to_string()
    } else {
        snapshot
            .selections
            .iter()
            .map(|r| format!("{}-{}", r.start, r.end))
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!(
        "file={file}, selections={selections}, trigger={}, locale={}",
        interaction.trigger_method, interaction.system_locale
    )
}

/// Classifies reference regions, difficulty and intent with the gateway's
/// classifier model. One repair retry on an unparseable or out-of-set reply,
/// then the labels stay unknown; an endpoint failure marks the interaction
/// unclassified.
pub fn classify_model_dims(interaction: &QaInteraction, gateway: &Gateway) -> ModelClassification {
    let summary = editor_summary(interaction);
    for repair in [false, true] {
        let messages = prompts::classifier_messages(
            &interaction.query,
            &interaction.response,
            &summary,
            repair,
        );
        let reply = gateway.complete_role(GatewayRole::Classifier, &messages);
        if reply.is_error() {
            return ModelClassification::Unclassified {
                cause: reply.error.unwrap_or_else(|| "endpoint error".into()),
            };
        }
        if let Some(labels) = parse_classifier_reply(&reply.text) {
            return ModelClassification::Labeled(labels);
        }
    }
    ModelClassification::Labeled(ModelLabels::default())
}

/// An interaction with all ten dimensions resolved (model dimensions may be
/// unknown).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInteraction {
    pub id: String,
    pub rule: RuleLabels,
    pub model: ModelLabels,
}

// ---------------------------------------------------------------------------
// Behavior profiles
// ---------------------------------------------------------------------------

pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Per-dimension categorical distributions estimated from logged
/// interactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub sample_count: u64,
    pub dimensions: BTreeMap<String, BTreeMap<String, f64>>,
}

impl BehaviorProfile {
    pub fn validate(&self) -> Result<(), AnalystError> {
        if self.sample_count == 0 {
            return Err(AnalystError::NoInteractions);
        }
        for (dimension, categories) in &self.dimensions {
            let mut sum = 0.0;
            for (category, probability) in categories {
                if *probability < 0.0 {
                    return Err(AnalystError::BadCategory {
                        dimension: dimension.clone(),
                        value: category.clone(),
                        reason: format!("negative probability {probability}"),
                    });
                }
                sum += probability;
            }
            if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(AnalystError::EmptyDimension(format!(
                    "{dimension} probabilities sum to {sum}"
                )));
            }
        }
        Ok(())
    }

    pub fn dimension(&self, dim: Dimension) -> Option<&BTreeMap<String, f64>> {
        self.dimensions.get(dim.name())
    }
}

fn tally(counts: &mut BTreeMap<String, u64>, key: String) {
    *counts.entry(key).or_insert(0) += 1;
}

/// Aggregates per-dimension relative frequencies over labeled interactions.
///
/// The multi-valued reference-regions dimension is counted per occurrence and
/// then normalized; unknown model labels contribute nothing to their
/// dimension.
pub fn build_profile(labeled: &[LabeledInteraction]) -> Result<BehaviorProfile, AnalystError> {
    if labeled.is_empty() {
        return Err(AnalystError::NoInteractions);
    }
    let mut raw: BTreeMap<&'static str, BTreeMap<String, u64>> = BTreeMap::new();
    for interaction in labeled {
        let rule = &interaction.rule;
        tally(
            raw.entry("cursor_behavior").or_default(),
            rule.cursor_behavior.as_str().into(),
        );
        tally(
            raw.entry("trigger_method").or_default(),
            rule.trigger_method.as_str().into(),
        );
        tally(
            raw.entry("instruction_type").or_default(),
            rule.instruction_type.as_str().into(),
        );
        tally(
            raw.entry("programming_language").or_default(),
            rule.programming_language.as_str().into(),
        );
        tally(
            raw.entry("system_locale").or_default(),
            rule.system_locale.as_str().into(),
        );
        tally(
            raw.entry("dialog_turns").or_default(),
            rule.dialog_turns.to_string(),
        );
        tally(
            raw.entry("query_locale_requirement").or_default(),
            rule.query_locale_requirement.as_str().into(),
        );
        if let Some(intent) = interaction.model.intent {
            tally(raw.entry("intent").or_default(), intent.as_str().into());
        }
        if let Some(difficulty) = interaction.model.difficulty {
            tally(
                raw.entry("difficulty").or_default(),
                difficulty.as_str().into(),
            );
        }
        if let Some(regions) = &interaction.model.reference_regions {
            for region in regions.iter() {
                tally(
                    raw.entry("reference_regions").or_default(),
                    region.as_str().into(),
                );
            }
        }
    }
    let mut dimensions = BTreeMap::new();
    for (dimension, counts) in raw {
        let total: u64 = counts.values().sum();
        if total == 0 {
            continue;
        }
        let frequencies = counts
            .into_iter()
            .map(|(category, count)| (category, count as f64 / total as f64))
            .collect();
        dimensions.insert(dimension.to_string(), frequencies);
    }
    Ok(BehaviorProfile {
        sample_count: labeled.len() as u64,
        dimensions,
    })
}

// ---------------------------------------------------------------------------
// Production plans
// ---------------------------------------------------------------------------

/// One batch of identically-labeled sessions to produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanItem {
    pub count: u64,
    pub labels: LabelSet,
}

/// Ordered production targets matched to a behavior profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionPlan {
    pub total: u64,
    pub seed: u64,
    pub items: Vec<PlanItem>,
}

impl ProductionPlan {
    pub fn validate(&self) -> Result<(), AnalystError> {
        let sum: u64 = self.items.iter().map(|i| i.count).sum();
        if sum != self.total {
            return Err(AnalystError::BadCategory {
                dimension: "plan".into(),
                value: sum.to_string(),
                reason: format!("item counts sum to {sum}, expected {}", self.total),
            });
        }
        for item in &self.items {
            check_compatibility(&item.labels).map_err(|c| AnalystError::Unsatisfiable {
                constraint: c.name(),
            })?;
        }
        Ok(())
    }

    /// Per-dimension marginal distribution over the plan's label draws.
    pub fn marginals(&self) -> BTreeMap<String, BTreeMap<String, f64>> {
        let mut raw: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        for item in &self.items {
            for dim in Dimension::ALL {
                let entry = raw.entry(dim.name().to_string()).or_default();
                for key in item.labels.category_keys(dim) {
                    *entry.entry(key).or_insert(0) += item.count;
                }
            }
        }
        raw.into_iter()
            .map(|(dim, counts)| {
                let total: u64 = counts.values().sum();
                let freqs = counts
                    .into_iter()
                    .map(|(k, c)| (k, c as f64 / total as f64))
                    .collect();
                (dim, freqs)
            })
            .collect()
    }
}

/// Hard compatibility constraints a plan item must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanConstraint {
    NoActiveFileSelectedCode,
    TemplateWithoutSelection,
    InlineChatWithoutActiveFile,
    SelectedCodeWithoutSelection,
}

impl PlanConstraint {
    pub fn name(self) -> &'static str {
        match self {
            PlanConstraint::NoActiveFileSelectedCode => {
                "cursor_behavior=no_active_file with selected_code in reference_regions"
            }
            PlanConstraint::TemplateWithoutSelection => {
                "instruction_type!=query without a code selection"
            }
            PlanConstraint::InlineChatWithoutActiveFile => {
                "trigger_method=inline_chat without an active file"
            }
            PlanConstraint::SelectedCodeWithoutSelection => {
                "selected_code in reference_regions without a code selection"
            }
        }
    }
}

pub fn check_compatibility(labels: &LabelSet) -> Result<(), PlanConstraint> {
    if labels.cursor_behavior == CursorBehavior::NoActiveFile
        && labels
            .reference_regions
            .contains(ReferenceRegion::SelectedCode)
    {
        return Err(PlanConstraint::NoActiveFileSelectedCode);
    }
    if labels.instruction_type != InstructionType::Query && !labels.cursor_behavior.is_selection() {
        return Err(PlanConstraint::TemplateWithoutSelection);
    }
    if labels.trigger_method == TriggerMethod::InlineChat
        && labels.cursor_behavior == CursorBehavior::NoActiveFile
    {
        return Err(PlanConstraint::InlineChatWithoutActiveFile);
    }
    // A selected_code reference needs an actual selection; without this a
    // plan item could never become a valid configuration.
    if labels
        .reference_regions
        .contains(ReferenceRegion::SelectedCode)
        && !labels.cursor_behavior.is_selection()
    {
        return Err(PlanConstraint::SelectedCodeWithoutSelection);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PlanConfig {
    /// Minimum total at which every positive-mass category must appear.
    pub diversity_floor_min_total: u64,
    /// Dialogue turns are clamped to this many for plan sampling.
    pub turn_cap: u32,
    pub max_rejects_per_item: u32,
    pub registry: LanguageRegistry,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            diversity_floor_min_total: 40,
            turn_cap: 10,
            max_rejects_per_item: 10_000,
            registry: LanguageRegistry::default(),
        }
    }
}

struct DimSampler {
    categories: Vec<String>,
    cumulative: Vec<f64>,
}

impl DimSampler {
    fn new(dimension: &str, map: &BTreeMap<String, f64>) -> Result<Self, AnalystError> {
        let mut categories = Vec::new();
        let mut cumulative = Vec::new();
        let mut running = 0.0;
        for (category, mass) in map {
            if *mass > 0.0 {
                running += mass;
                categories.push(category.clone());
                cumulative.push(running);
            }
        }
        if categories.is_empty() {
            return Err(AnalystError::EmptyDimension(dimension.to_string()));
        }
        Ok(DimSampler {
            categories,
            cumulative,
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> &str {
        let total = *self.cumulative.last().unwrap();
        let point = rng.random::<f64>() * total;
        let idx = self
            .cumulative
            .partition_point(|c| *c <= point)
            .min(self.categories.len() - 1);
        &self.categories[idx]
    }
}

struct PlanSamplers {
    samplers: BTreeMap<Dimension, DimSampler>,
    registry: LanguageRegistry,
}

impl PlanSamplers {
    fn build(profile: &BehaviorProfile, config: &PlanConfig) -> Result<Self, AnalystError> {
        let mut samplers = BTreeMap::new();
        for dim in Dimension::ALL {
            let map = profile
                .dimension(dim)
                .ok_or_else(|| AnalystError::MissingDimension(dim.name().to_string()))?;
            let map = if dim == Dimension::DialogTurns {
                clamp_turn_keys(map, config.turn_cap)?
            } else {
                validate_keys(dim, map, &config.registry)?;
                map.clone()
            };
            samplers.insert(dim, DimSampler::new(dim.name(), &map)?);
        }
        Ok(PlanSamplers {
            samplers,
            registry: config.registry.clone(),
        })
    }

    fn draw_value(&self, dim: Dimension, rng: &mut ChaCha8Rng) -> String {
        self.samplers[&dim].sample(rng).to_string()
    }

    fn draw_item(&self, rng: &mut ChaCha8Rng) -> LabelSet {
        let mut draws = BTreeMap::new();
        for dim in Dimension::ALL {
            draws.insert(dim, self.draw_value(dim, rng));
        }
        self.assemble(&draws)
    }

    fn assemble(&self, draws: &BTreeMap<Dimension, String>) -> LabelSet {
        // Keys were validated when the samplers were built.
        LabelSet {
            cursor_behavior: CursorBehavior::parse(&draws[&Dimension::CursorBehavior]).unwrap(),
            trigger_method: TriggerMethod::parse(&draws[&Dimension::TriggerMethod]).unwrap(),
            instruction_type: InstructionType::parse(&draws[&Dimension::InstructionType]).unwrap(),
            programming_language: self
                .registry
                .parse(&draws[&Dimension::ProgrammingLanguage])
                .unwrap(),
            system_locale: Locale::parse(&draws[&Dimension::SystemLocale]).unwrap(),
            dialog_turns: DialogTurns::new(draws[&Dimension::DialogTurns].parse().unwrap())
                .unwrap(),
            query_locale_requirement: QueryLocaleRequirement::parse(
                &draws[&Dimension::QueryLocaleRequirement],
            )
            .unwrap(),
            reference_regions: ReferenceRegions::single(
                ReferenceRegion::parse(&draws[&Dimension::ReferenceRegions]).unwrap(),
            ),
            difficulty: Difficulty::parse(&draws[&Dimension::Difficulty]).unwrap(),
            intent: Intent::parse(&draws[&Dimension::Intent]).unwrap(),
        }
    }
}

fn clamp_turn_keys(
    map: &BTreeMap<String, f64>,
    cap: u32,
) -> Result<BTreeMap<String, f64>, AnalystError> {
    let mut clamped: BTreeMap<String, f64> = BTreeMap::new();
    for (key, mass) in map {
        let turns: u32 = key.parse().map_err(|_| AnalystError::BadCategory {
            dimension: "dialog_turns".into(),
            value: key.clone(),
            reason: "not a positive integer".into(),
        })?;
        if turns == 0 {
            return Err(AnalystError::BadCategory {
                dimension: "dialog_turns".into(),
                value: key.clone(),
                reason: "not a positive integer".into(),
            });
        }
        *clamped.entry(turns.min(cap).to_string()).or_insert(0.0) += mass;
    }
    Ok(clamped)
}

fn validate_keys(
    dim: Dimension,
    map: &BTreeMap<String, f64>,
    registry: &LanguageRegistry,
) -> Result<(), AnalystError> {
    for key in map.keys() {
        let ok = match dim {
            Dimension::CursorBehavior => CursorBehavior::parse(key).is_ok(),
            Dimension::TriggerMethod => TriggerMethod::parse(key).is_ok(),
            Dimension::InstructionType => InstructionType::parse(key).is_ok(),
            Dimension::ProgrammingLanguage => registry.parse(key).is_ok(),
            Dimension::SystemLocale => Locale::parse(key).is_ok(),
            Dimension::DialogTurns => unreachable!("handled by clamp_turn_keys"),
            Dimension::QueryLocaleRequirement => QueryLocaleRequirement::parse(key).is_ok(),
            Dimension::ReferenceRegions => ReferenceRegion::parse(key).is_ok(),
            Dimension::Difficulty => Difficulty::parse(key).is_ok(),
            Dimension::Intent => Intent::parse(key).is_ok(),
        };
        if !ok {
            return Err(AnalystError::BadCategory {
                dimension: dim.name().to_string(),
                value: key.clone(),
                reason: "outside the closed category set".into(),
            });
        }
    }
    Ok(())
}

fn set_dimension(
    samplers: &PlanSamplers,
    labels: &LabelSet,
    dim: Dimension,
    key: &str,
) -> LabelSet {
    let mut draws: BTreeMap<Dimension, String> = Dimension::ALL
        .iter()
        .map(|d| {
            let current = match d {
                Dimension::ReferenceRegions => {
                    // Floor placement works on singleton draws; keep the first
                    // region as the representative when overwriting others.
                    labels
                        .reference_regions
                        .iter()
                        .next()
                        .map(|r| r.as_str().to_string())
                        .unwrap()
                }
                _ => labels.category_keys(*d).remove(0),
            };
            (*d, current)
        })
        .collect();
    draws.insert(dim, key.to_string());
    samplers.assemble(&draws)
}

/// Samples a production plan matching the profile's per-dimension marginals.
///
/// Items violating a compatibility constraint are rejected and resampled.
/// When `total` reaches the diversity floor, every category with positive
/// profile mass is guaranteed at least one item. Deterministic for a fixed
/// (profile, total, seed).
pub fn make_production_plan(
    profile: &BehaviorProfile,
    total: u64,
    seed: u64,
    config: &PlanConfig,
) -> Result<ProductionPlan, AnalystError> {
    if total < 1 {
        return Err(AnalystError::InvalidTotal);
    }
    profile.validate()?;
    let samplers = PlanSamplers::build(profile, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut draws: Vec<LabelSet> = Vec::with_capacity(total as usize);
    let mut reject_counts: HashMap<&'static str, u64> = HashMap::new();
    for _ in 0..total {
        let mut accepted = None;
        for _ in 0..config.max_rejects_per_item {
            let candidate = samplers.draw_item(&mut rng);
            match check_compatibility(&candidate) {
                Ok(()) => {
                    accepted = Some(candidate);
                    break;
                }
                Err(constraint) => {
                    *reject_counts.entry(constraint.name()).or_insert(0) += 1;
                }
            }
        }
        match accepted {
            Some(labels) => draws.push(labels),
            None => {
                let constraint = reject_counts
                    .iter()
                    .max_by_key(|(_, count)| **count)
                    .map(|(name, _)| *name)
                    .unwrap_or("compatibility");
                return Err(AnalystError::Unsatisfiable { constraint });
            }
        }
    }

    if total >= config.diversity_floor_min_total {
        apply_diversity_floor(&samplers, &mut draws, &mut rng)?;
    }

    // Group identical label sets, preserving first-occurrence order.
    let mut items: Vec<PlanItem> = Vec::new();
    let mut index: HashMap<LabelSet, usize> = HashMap::new();
    for labels in draws {
        match index.get(&labels) {
            Some(&i) => items[i].count += 1,
            None => {
                index.insert(labels.clone(), items.len());
                items.push(PlanItem { count: 1, labels });
            }
        }
    }

    let plan = ProductionPlan { total, seed, items };
    plan.validate()?;
    Ok(plan)
}

fn missing_categories(samplers: &PlanSamplers, draws: &[LabelSet]) -> Vec<(Dimension, String)> {
    let mut missing = Vec::new();
    for dim in Dimension::ALL {
        let mut present = std::collections::BTreeSet::new();
        for labels in draws {
            for key in labels.category_keys(dim) {
                present.insert(key);
            }
        }
        for category in &samplers.samplers[&dim].categories {
            if !present.contains(category) {
                missing.push((dim, category.clone()));
            }
        }
    }
    missing
}

fn apply_diversity_floor(
    samplers: &PlanSamplers,
    draws: &mut [LabelSet],
    rng: &mut ChaCha8Rng,
) -> Result<(), AnalystError> {
    const MAX_PASSES: usize = 16;
    const RESAMPLE_TRIES: usize = 100;
    let mut pinned: Vec<std::collections::BTreeSet<Dimension>> =
        vec![Default::default(); draws.len()];
    let mut cursor = 0usize;

    for _ in 0..MAX_PASSES {
        let missing = missing_categories(samplers, draws);
        if missing.is_empty() {
            return Ok(());
        }
        let mut last_blocker: &'static str = "compatibility";
        for (dim, category) in missing {
            let mut placed = false;
            for step in 0..draws.len() {
                let idx = (cursor + step) % draws.len();
                if pinned[idx].contains(&dim) {
                    continue;
                }
                // Direct substitution first.
                let candidate = set_dimension(samplers, &draws[idx], dim, &category);
                if check_compatibility(&candidate).is_ok() {
                    draws[idx] = candidate;
                    pinned[idx].insert(dim);
                    cursor = idx + 1;
                    placed = true;
                    break;
                }
                // Otherwise resample the unpinned dimensions around the pin.
                let mut success = None;
                for _ in 0..RESAMPLE_TRIES {
                    let mut fresh = samplers.draw_item(rng);
                    for pin in &pinned[idx] {
                        let key = draws[idx].category_keys(*pin).remove(0);
                        fresh = set_dimension(samplers, &fresh, *pin, &key);
                    }
                    fresh = set_dimension(samplers, &fresh, dim, &category);
                    match check_compatibility(&fresh) {
                        Ok(()) => {
                            success = Some(fresh);
                            break;
                        }
                        Err(constraint) => last_blocker = constraint.name(),
                    }
                }
                if let Some(fresh) = success {
                    draws[idx] = fresh;
                    pinned[idx].insert(dim);
                    cursor = idx + 1;
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(AnalystError::Unsatisfiable {
                    constraint: last_blocker,
                });
            }
        }
    }
    let still_missing = missing_categories(samplers, draws);
    if still_missing.is_empty() {
        Ok(())
    } else {
        Err(AnalystError::Unsatisfiable {
            constraint: "diversity floor did not converge",
        })
    }
}
