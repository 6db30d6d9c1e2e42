//! Seeded synthetic session corpus for pipeline tests and demos.
//!
//! Every proposal sentence opens with one of the offline stub's cue
//! phrases, so the stub extractor recovers exactly the planned number of
//! ideas per participant. Retained idea totals match `SynthSpec` exactly; four
//! extra treatment sessions each break one exclusion rule.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::gateway::PROPOSAL_CUES;
use crate::persona::{Condition, PersonaId};
use crate::session::{Message, Session, SessionStatus, Speaker, DEFAULT_SESSION_LIMIT_MS, DEFAULT_TASK, SESSION_SCHEMA_VERSION};
use crate::survey::{Demographics, KeyingTable, SurveyResponse, Trait, BFI_ITEMS};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    /// Retained sessions per condition.
    pub treatment: usize,
    pub control: usize,
    /// Total ideas across retained sessions per condition.
    pub treatment_ideas: usize,
    pub control_ideas: usize,
    /// Retained sessions per condition without a questionnaire.
    pub incomplete_surveys: usize,
    /// Add one treatment session per exclusion rule.
    pub with_exclusion_cases: bool,
    pub start_ms: i64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 20_250_101,
            treatment: 69,
            control: 32,
            treatment_ideas: 590,
            control_ideas: 295,
            incomplete_surveys: 3,
            with_exclusion_cases: true,
            start_ms: 1_735_725_600_000,
        }
    }
}

const THEMES: [&[&str]; 12] = [
    &["host esports tournaments", "lend board games", "run game design jams", "set up a retro console corner"],
    &["stage open mic nights", "lend musical instruments", "build a podcast booth", "hold vinyl listening sessions"],
    &["open late study rooms", "offer exam season quiet pods", "book group project tables", "provide free printing credits"],
    &["run a small cafe", "allow snacks in lounges", "host cooking demos", "start a community fridge"],
    &["open a makerspace", "lend laptops and tablets", "teach coding workshops", "offer 3D printing"],
    &["display student art", "host zine making workshops", "paint a community mural", "run photography walks"],
    &["host career coaching", "run CV review clinics", "invite alumni mentors", "post internship boards"],
    &["hold mindfulness sessions", "create nap friendly corners", "offer therapy dog visits", "run wellbeing book clubs"],
    &["create a rooftop reading garden", "run outdoor film screenings", "organize seed swaps", "lend camping gear"],
    &["launch a language exchange", "host speed friending evenings", "run trivia leagues", "start a debate society"],
    &["build a VR storytelling lab", "host escape room puzzles built from archives", "run an alternate reality game", "curate a meme history exhibit"],
    &["lend fashion and costume items", "host repair cafe afternoons", "run urban sketching meetups", "offer skateboard lending"],
];

const MODIFIERS: [&str; 16] = [
    "on friday nights", "with local creators", "for first year students", "during exam weeks", "with student volunteers",
    "every second weekend", "in the basement hall", "through a mobile app", "with neighbourhood partners", "on rainy afternoons",
    "as a monthly series", "with free entry", "for remote learners", "in partnership with the university", "after closing hours",
    "using the old archive room",
];

const QUESTIONS: [&str; 10] = [
    "Which of these is cheapest to start?",
    "Can you expand on the second one?",
    "Do you think students would actually come?",
    "How would we measure success?",
    "Which one has the highest impact?",
    "Is there evidence that this works elsewhere?",
    "Could you list the resources needed?",
    "Which option fits a small budget?",
    "How do other cities handle this?",
    "Does that sound realistic?",
];

const FILLERS: [&str; 6] = ["Thanks.", "Interesting.", "Okay, noted.", "Good point.", "I like that.", "Hmm, not sure."];

const FIELDS: [(&str, u32); 4] = [("design", 50), ("engineering", 30), ("business", 4), ("other", 16)];

fn cue_case(cue: &str) -> String {
    let mut c = cue.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Integer counts with roughly the given mean and spread that sum exactly
/// to `total`, each within `lo..=hi`.
fn counts_with_total(rng: &mut ChaCha8Rng, n: usize, total: usize, sd: f64, lo: usize, hi: usize) -> Vec<usize> {
    assert!(n * lo <= total && total <= n * hi, "total out of reach");
    let mean = total as f64 / n as f64;
    let normal = Normal::new(mean, sd).expect("valid normal");
    let mut counts: Vec<usize> =
        (0..n).map(|_| (normal.sample(rng).round() as i64).clamp(lo as i64, hi as i64) as usize).collect();
    loop {
        let sum: usize = counts.iter().sum();
        if sum == total {
            return counts;
        }
        let i = rng.random_range(0..n);
        if sum < total && counts[i] < hi {
            counts[i] += 1;
        } else if sum > total && counts[i] > lo {
            counts[i] -= 1;
        }
    }
}

fn weighted<'a, T>(rng: &mut ChaCha8Rng, items: &'a [(T, u32)]) -> &'a T {
    &items.choose_weighted(rng, |(_, w)| *w).expect("non-empty weights").0
}

fn likert(rng: &mut ChaCha8Rng, mean: f64, sd: f64, max: u8) -> u8 {
    let v = Normal::new(mean, sd).expect("valid normal").sample(rng).round();
    v.clamp(1.0, f64::from(max)) as u8
}

struct Plan {
    id: String,
    condition: Condition,
    ideas: usize,
    survey: bool,
    kind: Kind,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Normal,
    Minimal,
    Short,
    Late,
    Flagged,
}

fn idea_sentences(rng: &mut ChaCha8Rng, condition: Condition, k: usize) -> Vec<String> {
    let pool = match condition {
        Condition::Control => &THEMES[..6],
        Condition::Treatment => &THEMES[..],
    };
    let n_themes = rng.random_range(2..=4).min(pool.len());
    let themes: Vec<&&[&str]> = pool.choose_multiple(rng, n_themes).collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let theme = themes.choose(rng).expect("themes");
        let action = theme.choose(rng).expect("actions");
        let modifier = MODIFIERS.choose(rng).expect("modifiers");
        if !seen.insert((*action, *modifier)) {
            continue;
        }
        let cue = cue_case(PROPOSAL_CUES.choose(rng).expect("cues"));
        out.push(format!("{cue} {action} {modifier}."));
    }
    out
}

fn survey_for(rng: &mut ChaCha8Rng, condition: Condition, latent: &[f64; 5], keying: &KeyingTable) -> SurveyResponse {
    let t = condition == Condition::Treatment;
    let q8_weights: [(u8, u32); 4] = if t { [(1, 52), (2, 27), (3, 12), (4, 9)] } else { [(1, 17), (2, 24), (3, 28), (4, 31)] };
    let mut bfi = vec![3u8; BFI_ITEMS];
    for e in &keying.entries {
        let level = latent[Trait::ALL.iter().position(|x| *x == e.trait_name).expect("trait")];
        let raw = (level + Normal::new(0.0, 0.6).expect("valid").sample(rng)).round().clamp(1.0, 5.0) as u8;
        bfi[e.item_index - 1] = if e.reverse { 6 - raw } else { raw };
    }
    SurveyResponse {
        q1: likert(rng, 2.7, 1.25, 5),
        q2: likert(rng, if t { 3.65 } else { 2.75 }, 1.3, 5),
        q3: likert(rng, 2.75, 1.3, 5),
        q4: likert(rng, if t { 3.6 } else { 2.8 }, 1.3, 5),
        q5: likert(rng, if t { 3.55 } else { 4.05 }, 0.95, 5),
        q6: likert(rng, if t { 3.9 } else { 3.4 }, 1.0, 5),
        q7: likert(rng, 3.3, 1.0, 5),
        q8_forced_choice: *weighted(rng, &q8_weights),
        bfi_items: bfi,
        demographics: Demographics {
            age: rng.random_range(19..=38),
            field: weighted(rng, &FIELDS).to_string(),
        },
    }
}

fn build_session(rng: &mut ChaCha8Rng, plan: &Plan, start: i64, keying: &KeyingTable) -> Session {
    let deadline = start + DEFAULT_SESSION_LIMIT_MS;
    let latent: [f64; 5] = std::array::from_fn(|_| Normal::<f64>::new(3.5, 0.7).expect("valid").sample(rng).clamp(1.0, 5.0));
    let conscientiousness = latent[1];

    let ideas = idea_sentences(rng, plan.condition, plan.ideas);
    let n_user = match plan.kind {
        Kind::Minimal => 2,
        _ => (ideas.len().div_ceil(2) + rng.random_range(2..=6)).max(4),
    };
    let mut texts: Vec<Vec<String>> = vec![Vec::new(); n_user];
    for (i, idea) in ideas.into_iter().enumerate() {
        let slot = if i < n_user { i } else { rng.random_range(0..n_user) };
        texts[slot].push(idea);
    }
    let q_rate = if plan.condition == Condition::Treatment { 0.45 } else { 0.3 };
    for t in texts.iter_mut() {
        if rng.random_bool(q_rate) {
            t.push(QUESTIONS.choose(rng).expect("questions").to_string());
        }
        if t.is_empty() {
            t.push(FILLERS.choose(rng).expect("fillers").to_string());
        }
    }

    let mut targets = Vec::with_capacity(n_user);
    let mut current = if rng.random_bool(0.7) { PersonaId::Divergent } else { PersonaId::Convergent };
    for _ in 0..n_user {
        let stay = if plan.condition == Condition::Treatment { 0.6 } else { 0.5 };
        if !targets.is_empty() && !rng.random_bool(stay) {
            current = if current == PersonaId::Divergent { PersonaId::Convergent } else { PersonaId::Divergent };
        }
        targets.push(current);
    }
    let p_end_convergent = 1.0 / (1.0 + (-(conscientiousness - 3.5) * 2.0).exp());
    let last = if rng.random_bool(p_end_convergent) { PersonaId::Convergent } else { PersonaId::Divergent };
    *targets.last_mut().expect("n_user >= 2") = last;

    let span = match plan.kind {
        Kind::Short => rng.random_range(90_000..180_000),
        Kind::Late => DEFAULT_SESSION_LIMIT_MS + 30_000,
        _ => rng.random_range(8 * 60_000..19 * 60_000),
    };
    let mut messages = Vec::with_capacity(2 * n_user);
    for (i, (parts, persona)) in texts.into_iter().zip(targets).enumerate() {
        let user_at = start + 20_000 + (span - 20_000) * i as i64 / (n_user as i64 - 1).max(1);
        let reply_at = user_at + rng.random_range(4_000..15_000);
        messages.push(Message {
            message_id: format!("m{:05}", messages.len() + 1),
            speaker: Speaker::User,
            persona_target: persona,
            text: parts.join(" "),
            sent_at: user_at,
            unanswered: false,
        });
        let reply = match persona {
            PersonaId::Divergent => "Here are a few wilder directions to push that further.",
            PersonaId::Convergent => "Here is how I would rank those on cost and reach.",
        };
        messages.push(Message {
            message_id: format!("m{:05}", messages.len() + 1),
            speaker: Speaker::Assistant,
            persona_target: persona,
            text: reply.to_string(),
            sent_at: reply_at,
            unanswered: false,
        });
    }

    let survey = plan.survey.then(|| survey_for(rng, plan.condition, &latent, keying));
    Session {
        schema_version: SESSION_SCHEMA_VERSION,
        session_id: plan.id.clone(),
        condition: plan.condition,
        task_statement: DEFAULT_TASK.to_string(),
        started_at: start,
        deadline_at: deadline,
        button_order_seed: rng.random(),
        status: if survey.is_some() { SessionStatus::Submitted } else { SessionStatus::TimedOut },
        messages,
        survey,
        manual_flag: (plan.kind == Kind::Flagged).then(|| "content authenticity".to_string()),
    }
}

/// Sessions in id order.
pub fn synth_corpus(spec: &SynthSpec) -> Vec<Session> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let keying = KeyingTable::bfi2_xs();
    let t_counts = counts_with_total(&mut rng, spec.treatment, spec.treatment_ideas, 3.85, 2, 20);
    let c_counts = counts_with_total(&mut rng, spec.control, spec.control_ideas, 3.37, 2, 20);

    let mut plans: Vec<Plan> = Vec::new();
    let mut push = |condition, ideas, survey, kind| plans.push(Plan { id: String::new(), condition, ideas, survey, kind });
    for (i, k) in t_counts.into_iter().enumerate() {
        push(Condition::Treatment, k, i >= spec.incomplete_surveys, Kind::Normal);
    }
    for (i, k) in c_counts.into_iter().enumerate() {
        push(Condition::Control, k, i >= spec.incomplete_surveys, Kind::Normal);
    }
    if spec.with_exclusion_cases {
        for kind in [Kind::Minimal, Kind::Short, Kind::Late, Kind::Flagged] {
            push(Condition::Treatment, 4, true, kind);
        }
    }
    plans.shuffle(&mut rng);
    for (i, p) in plans.iter_mut().enumerate() {
        p.id = format!("s{:03}", i + 1);
    }
    plans
        .iter()
        .enumerate()
        .map(|(i, p)| build_session(&mut rng, p, spec.start_ms + i as i64 * 30 * 60_000, &keying))
        .collect()
}
