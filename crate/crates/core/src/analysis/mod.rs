//! End-to-end analysis: exclusions, idea extraction, embeddings,
//! creativity and engagement metrics, questionnaire scoring and the
//! statistics that go into the report.
//!
//! Participants are processed in session-id order and every collection in
//! the report is ordered, so identical inputs give identical report bytes.

pub mod cache;
pub mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use coachlab_stats::ContingencyTable;

use crate::creativity::{build_portfolio, internal_diversity, originality, volume_tradeoff, ParticipantPortfolio};
use crate::engagement::{ending_persona_contingency, question_stats, session_behavior, QuestionStats, SessionBehavior};
use crate::gateway::{LlmGateway, DEFAULT_EMBEDDING_MODEL};
use crate::ideas::{extract_ideas, induce_categories, prompts::prompt_hash, CategorySet, IdeaRecord, PipelineSettings};
use crate::persona::{Condition, PersonaId};
use crate::session::jsonl::to_line;
use crate::session::{apply_exclusions, ExclusionRule, Session};
use crate::survey::{persona_deltas, score_bfi, KeyingTable, SurveyResponse, Trait, TraitScores};

use cache::StageCache;
use report::{
    chi_square, describe, one_sample_samples, pearson, spearman, welch_samples, Descriptive, ExcludedEntry,
    InjectedSummaries, Participants, Provenance, Report, StatRecord, REPORT_VERSION,
};

const EMBED_BATCH: usize = 256;
const CONDITIONS: [Condition; 2] = [Condition::Treatment, Condition::Control];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedSource {
    Title,
    Description,
    #[default]
    Both,
}

impl EmbedSource {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbedSource::Title => "title",
            EmbedSource::Description => "description",
            EmbedSource::Both => "both",
        }
    }

    pub fn text(self, idea: &IdeaRecord) -> String {
        let both = || format!("{}\n{}", idea.title.trim(), idea.description.trim()).trim().to_string();
        let t = match self {
            EmbedSource::Title => idea.title.trim().to_string(),
            EmbedSource::Description => idea.description.trim().to_string(),
            EmbedSource::Both => both(),
        };
        if t.is_empty() {
            both()
        } else {
            t
        }
    }
}

impl FromStr for EmbedSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "title" => Ok(EmbedSource::Title),
            "description" => Ok(EmbedSource::Description),
            "both" => Ok(EmbedSource::Both),
            other => Err(format!("unknown embed source {other:?} (title, description, both)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub include_quarter_1: bool,
    /// Also report question metrics for each quarter separately.
    pub per_quarter: bool,
    pub continuity_correction: bool,
    pub embed_source: EmbedSource,
    /// Reference value for the one-sample tests on the forced-choice item.
    pub forced_choice_reference: f64,
    pub exclusion: ExclusionRule,
    pub pipeline: PipelineSettings,
    pub embedding_model: String,
    pub keying: KeyingTable,
    /// Stage caches and per-stage JSONL artifacts go here when set.
    pub work_dir: Option<PathBuf>,
    pub injected: Option<InjectedSummaries>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            include_quarter_1: false,
            per_quarter: false,
            continuity_correction: true,
            embed_source: EmbedSource::Both,
            forced_choice_reference: 2.0,
            exclusion: ExclusionRule::default(),
            pipeline: PipelineSettings::default(),
            embedding_model: DEFAULT_EMBEDDING_MODEL.to_string(),
            keying: KeyingTable::bfi2_xs(),
            work_dir: None,
            injected: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Extraction,
    Embedding,
    Creativity,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Extraction => "extraction",
            Stage::Embedding => "embedding",
            Stage::Creativity => "creativity",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

fn fail(stage: Stage) -> impl Fn(String) -> PipelineError {
    move |message| PipelineError { stage, message }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantIdeas {
    pub participant_id: String,
    pub condition: Condition,
    pub ideas: Vec<IdeaRecord>,
    pub categories: CategorySet,
    pub dropped: usize,
    pub prompt_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub participant_id: String,
    pub condition: Condition,
    pub fluency: usize,
    pub same_condition: Option<f64>,
    pub all_participants: Option<f64>,
    pub cross_condition_nn: Option<f64>,
    pub mean_pairwise: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorRow {
    pub participant_id: String,
    pub condition: Condition,
    #[serde(flatten)]
    pub behavior: SessionBehavior,
    pub question_stats: BTreeMap<PersonaId, Option<QuestionStats>>,
}

struct Scored<'a> {
    session: &'a Session,
    survey: &'a SurveyResponse,
    traits: TraitScores,
}

fn write_jsonl<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), PipelineError> {
    let path = dir.join(name);
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).map_err(|e| fail(Stage::Output)(e.to_string()))?;
        buf.push(b'\n');
    }
    std::fs::File::create(&path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| fail(Stage::Output)(format!("{}: {e}", path.display())))
}

async fn extract_participant(
    gateway: &LlmGateway,
    session: &Session,
    settings: &PipelineSettings,
    cache: &StageCache,
    hash: &str,
) -> Result<ParticipantIdeas, PipelineError> {
    let key = StageCache::key(&[hash, &settings.model, &to_line(session)]);
    if let Some(hit) = cache.get::<ParticipantIdeas>(&key) {
        return Ok(hit);
    }
    let err = |e: crate::ideas::IdeaError| fail(Stage::Extraction)(format!("{}: {e}", session.session_id));
    let extraction = extract_ideas(gateway, session, settings).await.map_err(err)?;
    let categories = if extraction.ideas.is_empty() {
        CategorySet::default()
    } else {
        induce_categories(gateway, &session.session_id, &extraction.ideas, settings).await.map_err(err)?
    };
    let out = ParticipantIdeas {
        participant_id: session.session_id.clone(),
        condition: session.condition,
        ideas: extraction.ideas,
        categories,
        dropped: extraction.dropped,
        prompt_hash: hash.to_string(),
    };
    cache.put(&key, &out).map_err(|e| fail(Stage::Output)(e.to_string()))?;
    Ok(out)
}

async fn embed_all(
    gateway: &LlmGateway,
    ideas: &[ParticipantIdeas],
    opts: &AnalysisOptions,
) -> Result<Vec<Vec<Vec<f64>>>, PipelineError> {
    let texts: Vec<String> = ideas.iter().flat_map(|p| p.ideas.iter().map(|i| opts.embed_source.text(i))).collect();
    if let Some(i) = texts.iter().position(|t| t.is_empty()) {
        return Err(fail(Stage::Embedding)(format!("idea {i} has neither title nor description")));
    }
    let mut vectors = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(EMBED_BATCH) {
        let got = gateway
            .embed_texts(chunk, &opts.embedding_model)
            .await
            .map_err(|e| fail(Stage::Embedding)(e.to_string()))?;
        vectors.extend(got.into_iter().map(|v| v.values));
    }
    let mut it = vectors.into_iter();
    Ok(ideas.iter().map(|p| it.by_ref().take(p.ideas.len()).collect()).collect())
}

fn by_condition<T>(items: &[(Condition, T)], c: Condition) -> Vec<&T> {
    items.iter().filter(|(k, _)| *k == c).map(|(_, v)| v).collect()
}

fn split<F: Fn(&Scored) -> f64>(scored: &[Scored], f: F) -> (Vec<f64>, Vec<f64>) {
    let pick = |c| scored.iter().filter(|s| s.session.condition == c).map(&f).collect();
    (pick(Condition::Treatment), pick(Condition::Control))
}

fn item_value(s: &SurveyResponse, key: &str) -> f64 {
    f64::from(match key {
        "q1" => s.q1,
        "q2" => s.q2,
        "q3" => s.q3,
        "q4" => s.q4,
        "q5" => s.q5,
        "q6" => s.q6,
        "q7" => s.q7,
        "q8_forced_choice" => s.q8_forced_choice,
        _ => unreachable!("unknown item {key}"),
    })
}

const ITEMS: [&str; 8] = ["q1", "q2", "q3", "q4", "q5", "q6", "q7", "q8_forced_choice"];

fn to_value<T: Serialize>(v: T) -> Value {
    serde_json::to_value(v).expect("serializes")
}

/// Run every stage over `sessions` and assemble the report.
pub async fn run_analysis(
    gateway: &LlmGateway,
    mut sessions: Vec<Session>,
    opts: &AnalysisOptions,
) -> Result<Report, PipelineError> {
    sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    let input = sessions.len();
    let hash = prompt_hash();
    let outcome = apply_exclusions(sessions, &opts.exclusion);
    let retained = outcome.retained;

    let participants = {
        let mut retained_by_condition = BTreeMap::new();
        let mut complete = BTreeMap::new();
        for c in CONDITIONS {
            retained_by_condition.insert(c.as_str().to_string(), retained.iter().filter(|s| s.condition == c).count());
            let n = retained
                .iter()
                .filter(|s| s.condition == c && s.survey.as_ref().is_some_and(|r| r.validate().is_ok()))
                .count();
            complete.insert(c.as_str().to_string(), n);
        }
        let mut exclusion_counts = BTreeMap::new();
        for e in &outcome.excluded {
            *exclusion_counts.entry(to_value(e.reason).as_str().unwrap_or_default().to_string()).or_insert(0) += 1;
        }
        Participants {
            input,
            retained: retained.len(),
            retained_by_condition,
            excluded: outcome
                .excluded
                .iter()
                .map(|e| ExcludedEntry {
                    session_id: e.session.session_id.clone(),
                    condition: e.session.condition,
                    reason: e.reason,
                })
                .collect(),
            exclusion_counts,
            complete_surveys_by_condition: complete,
        }
    };

    // Extraction and categories, one participant per future; the gateway
    // bounds concurrency.
    let extract_cache = match &opts.work_dir {
        Some(d) => StageCache::at(d, "extraction").map_err(|e| fail(Stage::Output)(e.to_string()))?,
        None => StageCache::disabled(),
    };
    let ideas: Vec<ParticipantIdeas> = futures::future::join_all(
        retained.iter().map(|s| extract_participant(gateway, s, &opts.pipeline, &extract_cache, &hash)),
    )
    .await
    .into_iter()
    .collect::<Result<_, _>>()?;

    let embeddings = embed_all(gateway, &ideas, opts).await?;

    let mut portfolios: Vec<ParticipantPortfolio> = Vec::new();
    for (p, e) in ideas.iter().zip(&embeddings) {
        if !e.is_empty() {
            portfolios.push(
                build_portfolio(e, &p.participant_id, p.condition)
                    .map_err(|err| fail(Stage::Creativity)(format!("{}: {err}", p.participant_id)))?,
            );
        }
    }
    let metrics: Vec<MetricsRow> = ideas
        .iter()
        .map(|p| {
            let pf = portfolios.iter().find(|x| x.participant_id == p.participant_id);
            let orig = pf.and_then(|_| originality(&portfolios, &p.participant_id).ok());
            MetricsRow {
                participant_id: p.participant_id.clone(),
                condition: p.condition,
                fluency: p.ideas.len(),
                same_condition: orig.map(|o| o.same_condition),
                all_participants: orig.map(|o| o.all_participants),
                cross_condition_nn: orig.map(|o| o.cross_condition_nn),
                mean_pairwise: pf.and_then(|x| internal_diversity(x).ok()).map(|d| d.mean_pairwise),
            }
        })
        .collect();

    let quarters: Vec<u8> = if opts.include_quarter_1 { vec![1, 2, 3, 4] } else { vec![2, 3, 4] };
    let behaviors: Vec<BehaviorRow> = retained
        .iter()
        .filter_map(|s| {
            let behavior = session_behavior(s).ok()?;
            let question_stats =
                PersonaId::ALL.iter().map(|p| (*p, question_stats(&s.messages, &quarters, Some(*p)).ok())).collect();
            Some(BehaviorRow { participant_id: s.session_id.clone(), condition: s.condition, behavior, question_stats })
        })
        .collect();

    if let Some(dir) = &opts.work_dir {
        write_jsonl(dir, "ideas.jsonl", &ideas)?;
        write_jsonl(dir, "metrics.jsonl", &metrics)?;
        write_jsonl(dir, "behavior.jsonl", &behaviors)?;
    }

    let scored: Vec<Scored> = retained
        .iter()
        .filter_map(|s| {
            let survey = s.survey.as_ref().filter(|r| r.validate().is_ok())?;
            let traits = score_bfi(&survey.bfi_items, &opts.keying).ok()?;
            Some(Scored { session: s, survey, traits })
        })
        .collect();

    let mut sections = BTreeMap::new();
    sections.insert("demographics".to_string(), demographics_section(&scored));
    sections.insert("personality_baseline".to_string(), baseline_section(&scored));
    sections.insert("questionnaire".to_string(), questionnaire_section(&scored, opts.forced_choice_reference));
    sections.insert("trait_correlations".to_string(), trait_correlation_section(&scored));
    sections.insert(
        "engagement".to_string(),
        engagement_section(&retained, &behaviors, &scored, &quarters, opts),
    );
    sections.insert("creativity".to_string(), creativity_section(&portfolios, &metrics, &scored));

    Ok(Report {
        report_version: REPORT_VERSION,
        provenance: Provenance {
            prompt_hash: hash,
            extraction_model: opts.pipeline.model.clone(),
            embedding_model: opts.embedding_model.clone(),
            embed_source: opts.embed_source.as_str().to_string(),
            include_quarter_1: opts.include_quarter_1,
            continuity_correction: opts.continuity_correction,
            forced_choice_reference: opts.forced_choice_reference,
            exclusion_rule: opts.exclusion,
            keying_digest: StageCache::key(&[&serde_json::to_string(&opts.keying).expect("keying serializes")]),
        },
        participants,
        sections,
        injected: opts.injected.as_ref().map(|i| i.evaluate(opts.continuity_correction)),
    })
}

fn demographics_section(scored: &[Scored]) -> Value {
    let (t, c) = split(scored, |s| f64::from(s.survey.demographics.age));
    let mut fields: BTreeMap<&str, BTreeMap<String, usize>> = BTreeMap::new();
    for s in scored {
        let key = s.survey.demographics.field.trim().to_lowercase();
        *fields.entry(s.session.condition.as_str()).or_default().entry(key).or_insert(0) += 1;
    }
    json!({ "age": welch_samples(&t, &c), "field_counts": fields })
}

fn baseline_section(scored: &[Scored]) -> Value {
    let mut out = BTreeMap::new();
    for tr in Trait::ALL {
        let (t, c) = split(scored, |s| s.traits.get(tr));
        out.insert(tr.as_str(), welch_samples(&t, &c));
    }
    to_value(out)
}

fn questionnaire_section(scored: &[Scored], reference: f64) -> Value {
    let mut items = BTreeMap::new();
    for key in &ITEMS[..7] {
        let (t, c) = split(scored, |s| item_value(s.survey, key));
        items.insert(*key, welch_samples(&t, &c));
    }
    let (t8, c8) = split(scored, |s| f64::from(s.survey.q8_forced_choice));
    let mut distribution = BTreeMap::new();
    for (c, xs) in [(Condition::Treatment, &t8), (Condition::Control, &c8)] {
        let rows: BTreeMap<String, Value> = (1..=4)
            .map(|v| {
                let n = xs.iter().filter(|x| **x == f64::from(v)).count();
                let pct = if xs.is_empty() { None } else { Some(100.0 * n as f64 / xs.len() as f64) };
                (v.to_string(), json!({ "count": n, "pct": pct }))
            })
            .collect();
        distribution.insert(c.as_str(), rows);
    }
    let (ct, cc) = split(scored, |s| f64::from(persona_deltas(s.survey).creativity_delta));
    let (ht, hc) = split(scored, |s| f64::from(persona_deltas(s.survey).help_delta));
    json!({
        "items": items,
        "forced_choice": {
            "welch": welch_samples(&t8, &c8),
            "one_sample": {
                "treatment": one_sample_samples(&t8, reference),
                "control": one_sample_samples(&c8, reference),
            },
            "distribution": distribution,
        },
        "persona_deltas": {
            "creativity": welch_samples(&ct, &cc),
            "help": welch_samples(&ht, &hc),
        },
    })
}

fn trait_correlation_section(scored: &[Scored]) -> Value {
    let mut out: BTreeMap<&str, BTreeMap<&str, BTreeMap<&str, StatRecord>>> = BTreeMap::new();
    for c in CONDITIONS {
        let group: Vec<&Scored> = scored.iter().filter(|s| s.session.condition == c).collect();
        for tr in Trait::ALL {
            let x: Vec<f64> = group.iter().map(|s| s.traits.get(tr)).collect();
            for key in ITEMS {
                let y: Vec<f64> = group.iter().map(|s| item_value(s.survey, key)).collect();
                out.entry(c.as_str()).or_default().entry(tr.as_str()).or_default().insert(key, pearson(&x, &y));
            }
        }
    }
    to_value(out)
}

/// Question-metric units for one persona: treatment participants with an
/// in-scope message to that persona, and control participant-button pairs
/// pooled over both buttons.
fn question_units(behaviors: &[BehaviorRow], persona: PersonaId) -> (Vec<&QuestionStats>, Vec<&QuestionStats>) {
    let t = behaviors
        .iter()
        .filter(|b| b.condition == Condition::Treatment)
        .filter_map(|b| b.question_stats[&persona].as_ref())
        .collect();
    let c = behaviors
        .iter()
        .filter(|b| b.condition == Condition::Control)
        .flat_map(|b| b.question_stats.values().flatten())
        .collect();
    (t, c)
}

fn question_records(behaviors: &[BehaviorRow]) -> BTreeMap<&'static str, Value> {
    let mut out = BTreeMap::new();
    for p in PersonaId::ALL {
        let (t, c) = question_units(behaviors, p);
        let mean = |xs: &[&QuestionStats]| xs.iter().map(|q| q.mean_qmarks_per_message).collect::<Vec<_>>();
        let pct = |xs: &[&QuestionStats]| xs.iter().map(|q| q.pct_turns_with_question).collect::<Vec<_>>();
        out.insert(
            p.as_str(),
            json!({
                "mean_qmarks_per_message": welch_samples(&mean(&t), &mean(&c)),
                "pct_turns_with_question": welch_samples(&pct(&t), &pct(&c)),
            }),
        );
    }
    out
}

fn engagement_section(
    retained: &[Session],
    behaviors: &[BehaviorRow],
    scored: &[Scored],
    quarters: &[u8],
    opts: &AnalysisOptions,
) -> Value {
    let mut per_persona: BTreeMap<&str, BTreeMap<&str, Descriptive>> = BTreeMap::new();
    let mut switches: BTreeMap<&str, Descriptive> = BTreeMap::new();
    let tagged: Vec<(Condition, &SessionBehavior)> = behaviors.iter().map(|b| (b.condition, &b.behavior)).collect();
    for c in CONDITIONS {
        let group = by_condition(&tagged, c);
        for p in PersonaId::ALL {
            let xs: Vec<f64> = group.iter().map(|b| b.messages_per_persona[&p] as f64).collect();
            per_persona.entry(c.as_str()).or_default().insert(p.as_str(), describe(&xs));
        }
        let xs: Vec<f64> = group.iter().map(|b| b.switch_count as f64).collect();
        switches.insert(c.as_str(), describe(&xs));
    }

    let behavior_of: BTreeMap<&str, &SessionBehavior> =
        behaviors.iter().map(|b| (b.participant_id.as_str(), &b.behavior)).collect();
    let mut consc = BTreeMap::new();
    let mut ending = BTreeMap::new();
    for c in CONDITIONS {
        let joined: Vec<(&Scored, &SessionBehavior)> = scored
            .iter()
            .filter(|s| s.session.condition == c)
            .filter_map(|s| behavior_of.get(s.session.session_id.as_str()).map(|b| (s, *b)))
            .collect();
        let x: Vec<f64> = joined.iter().map(|(s, _)| s.traits.conscientiousness).collect();
        let msgs: Vec<f64> = joined.iter().map(|(_, b)| b.messages_per_persona[&PersonaId::Convergent] as f64).collect();
        let runs: Vec<f64> = joined.iter().map(|(_, b)| b.longest_run[&PersonaId::Convergent] as f64).collect();
        consc.insert(
            c.as_str(),
            json!({ "convergent_messages": pearson(&x, &msgs), "convergent_longest_run": pearson(&x, &runs) }),
        );

        let rows: Vec<(String, SessionBehavior)> =
            joined.iter().map(|(s, b)| (s.session.session_id.clone(), (*b).clone())).collect();
        let mut per_trait = BTreeMap::new();
        for tr in Trait::ALL {
            let scores: Vec<(String, f64)> =
                joined.iter().map(|(s, _)| (s.session.session_id.clone(), s.traits.get(tr))).collect();
            let record = match ending_persona_contingency(&rows, &scores) {
                Ok(table) => chi_square(&table, opts.continuity_correction),
                Err(e) => StatRecord {
                    formula: chi_square(&ContingencyTable::new([[0; 2]; 2]), opts.continuity_correction).formula,
                    inputs: json!({ "participants": scores.len() }),
                    result: None,
                    error: Some(e.to_string()),
                },
            };
            per_trait.insert(tr.as_str(), record);
        }
        ending.insert(c.as_str(), per_trait);
    }

    let mut out = json!({
        "messages_per_persona": per_persona,
        "switch_count": switches,
        "conscientiousness_links": consc,
        "ending_persona_by_trait_quartile": ending,
        "questions": {
            "quarters": quarters,
            "by_persona": question_records(behaviors),
        },
    });
    if opts.per_quarter {
        let mut per_q = BTreeMap::new();
        for q in 1..=4u8 {
            let session_of: BTreeMap<&str, &Session> = retained.iter().map(|s| (s.session_id.as_str(), s)).collect();
            let rows: Vec<BehaviorRow> = behaviors
                .iter()
                .map(|b| (session_of[b.participant_id.as_str()], b))
                .map(|(s, b)| {
                    let mut b = b.clone();
                    b.question_stats = PersonaId::ALL
                        .iter()
                        .map(|p| (*p, question_stats(&s.messages, &[q], Some(*p)).ok()))
                        .collect();
                    b
                })
                .collect();
            per_q.insert(q.to_string(), question_records(&rows));
        }
        out["questions"]["per_quarter"] = to_value(per_q);
    }
    out
}

fn creativity_section(portfolios: &[ParticipantPortfolio], metrics: &[MetricsRow], scored: &[Scored]) -> Value {
    let pick = |f: &dyn Fn(&MetricsRow) -> Option<f64>, c: Condition| -> Vec<f64> {
        metrics.iter().filter(|m| m.condition == c).filter_map(f).collect()
    };
    let cmp = |f: &dyn Fn(&MetricsRow) -> Option<f64>| {
        welch_samples(&pick(f, Condition::Treatment), &pick(f, Condition::Control))
    };
    let tradeoff = match volume_tradeoff(portfolios) {
        Ok(v) => json!({
            "fluency_vs_originality": StatRecord {
                formula: report::SPEARMAN.into(),
                inputs: json!({ "n": v.fluency_vs_originality.n, "originality": "all_participants" }),
                result: Some(to_value(v.fluency_vs_originality)),
                error: None,
            },
            "fluency_vs_diversity": match v.fluency_vs_diversity {
                Some(r) => StatRecord { formula: report::SPEARMAN.into(), inputs: json!({ "n": r.n }), result: Some(to_value(r)), error: None },
                None => StatRecord { formula: report::SPEARMAN.into(), inputs: json!({}), result: None, error: Some("fewer than four participants with two or more ideas".into()) },
            },
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };

    let metric_of: BTreeMap<&str, &MetricsRow> = metrics.iter().map(|m| (m.participant_id.as_str(), m)).collect();
    let treated: Vec<(&Scored, &MetricsRow)> = scored
        .iter()
        .filter(|s| s.session.condition == Condition::Treatment)
        .filter_map(|s| metric_of.get(s.session.session_id.as_str()).map(|m| (s, *m)))
        .collect();
    let q8: Vec<f64> = treated.iter().map(|(s, _)| f64::from(s.survey.q8_forced_choice)).collect();
    let q5: Vec<f64> = treated.iter().map(|(s, _)| f64::from(s.survey.q5)).collect();
    let fl: Vec<f64> = treated.iter().map(|(_, m)| m.fluency as f64).collect();
    let with_orig: Vec<(f64, f64)> = treated
        .iter()
        .filter_map(|(s, m)| m.all_participants.map(|o| (f64::from(s.survey.q8_forced_choice), o)))
        .collect();
    let (oq8, orig): (Vec<f64>, Vec<f64>) = with_orig.into_iter().unzip();

    json!({
        "fluency": cmp(&|m| Some(m.fluency as f64)),
        "originality": {
            "same_condition": cmp(&|m| m.same_condition),
            "all_participants": cmp(&|m| m.all_participants),
            "cross_condition_nn": cmp(&|m| m.cross_condition_nn),
        },
        "internal_diversity": cmp(&|m| m.mean_pairwise),
        "volume_tradeoff": tradeoff,
        "treatment_preference_links": {
            "q8_vs_q5": spearman(&q8, &q5),
            "q8_vs_fluency": spearman(&q8, &fl),
            "q8_vs_originality": spearman(&oq8, &orig),
        },
    })
}
