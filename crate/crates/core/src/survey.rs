//! Post-session questionnaire: capture, validation, short-form Big Five
//! scoring, trait quartiles and Taylor-minus-Alex difference scores.

use std::collections::BTreeSet;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BFI_ITEMS: usize = 15;
pub const DEFAULT_KEYING_CSV: &str = include_str!("../data/bfi2xs_keying.csv");
pub const QUESTIONNAIRE_EN: &str = include_str!("../data/questionnaire.en.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurveyError {
    #[error("item {item} = {value} is outside {min}..={max}")]
    OutOfScale { item: String, value: i64, min: i64, max: i64 },
    #[error("invalid keying: {0}")]
    InvalidKeying(String),
    #[error("insufficient cohort: {0}")]
    InsufficientCohort(String),
    /// One entry per offending item.
    #[error("invalid survey: {}", .0.join("; "))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: u32,
    pub field: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub q1: u8,
    pub q2: u8,
    pub q3: u8,
    pub q4: u8,
    pub q5: u8,
    pub q6: u8,
    pub q7: u8,
    /// 1 = Taylor ... 4 = Alex.
    pub q8_forced_choice: u8,
    pub bfi_items: Vec<u8>,
    pub demographics: Demographics,
}

impl SurveyResponse {
    pub fn likert(&self) -> [u8; 7] {
        [self.q1, self.q2, self.q3, self.q4, self.q5, self.q6, self.q7]
    }

    pub fn validate(&self) -> Result<(), SurveyError> {
        let mut problems = Vec::new();
        for (i, v) in self.likert().iter().enumerate() {
            if !(1..=5).contains(v) {
                problems.push(format!("q{}: {v} is outside 1..=5", i + 1));
            }
        }
        if !(1..=4).contains(&self.q8_forced_choice) {
            problems.push(format!("q8_forced_choice: {} is outside 1..=4", self.q8_forced_choice));
        }
        if self.bfi_items.len() != BFI_ITEMS {
            problems.push(format!("bfi_items: expected {BFI_ITEMS} answers, got {}", self.bfi_items.len()));
        }
        for (i, v) in self.bfi_items.iter().enumerate() {
            if !(1..=5).contains(v) {
                problems.push(format!("bfi_items[{}]: {v} is outside 1..=5", i + 1));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SurveyError::Validation(problems))
        }
    }
}

/// A submission as received; every field optional so that all problems can
/// be reported at once.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurveyDraft {
    pub q1: Option<i64>,
    pub q2: Option<i64>,
    pub q3: Option<i64>,
    pub q4: Option<i64>,
    pub q5: Option<i64>,
    pub q6: Option<i64>,
    pub q7: Option<i64>,
    pub q8_forced_choice: Option<i64>,
    pub bfi_items: Option<Vec<i64>>,
    pub demographics: Option<Demographics>,
}

impl SurveyDraft {
    pub fn into_response(self) -> Result<SurveyResponse, SurveyError> {
        let mut problems: Vec<String> = Vec::new();
        let item = |problems: &mut Vec<String>, name: &str, v: Option<i64>, max: i64| -> u8 {
            match v {
                None => {
                    problems.push(format!("{name}: missing"));
                    0
                }
                Some(v) if !(1..=max).contains(&v) => {
                    problems.push(format!("{name}: {v} is outside 1..={max}"));
                    0
                }
                Some(v) => v as u8,
            }
        };
        let likert = [
            item(&mut problems, "q1", self.q1, 5),
            item(&mut problems, "q2", self.q2, 5),
            item(&mut problems, "q3", self.q3, 5),
            item(&mut problems, "q4", self.q4, 5),
            item(&mut problems, "q5", self.q5, 5),
            item(&mut problems, "q6", self.q6, 5),
            item(&mut problems, "q7", self.q7, 5),
        ];
        let q8 = item(&mut problems, "q8_forced_choice", self.q8_forced_choice, 4);
        let bfi: Vec<u8> = match self.bfi_items {
            None => {
                problems.push("bfi_items: missing".into());
                vec![]
            }
            Some(items) => {
                if items.len() != BFI_ITEMS {
                    problems.push(format!("bfi_items: expected {BFI_ITEMS} answers, got {}", items.len()));
                }
                let mut out = Vec::with_capacity(items.len());
                for (i, v) in items.iter().enumerate() {
                    out.push(item(&mut problems, &format!("bfi_items[{}]", i + 1), Some(*v), 5));
                }
                out
            }
        };
        if self.demographics.is_none() {
            problems.push("demographics: missing".into());
        }
        if !problems.is_empty() {
            return Err(SurveyError::Validation(problems));
        }
        Ok(SurveyResponse {
            q1: likert[0],
            q2: likert[1],
            q3: likert[2],
            q4: likert[3],
            q5: likert[4],
            q6: likert[5],
            q7: likert[6],
            q8_forced_choice: q8,
            bfi_items: bfi,
            demographics: self.demographics.expect("checked above"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trait {
    Openness,
    Conscientiousness,
    Extraversion,
    Agreeableness,
    Neuroticism,
}

impl Trait {
    pub const ALL: [Trait; 5] =
        [Trait::Openness, Trait::Conscientiousness, Trait::Extraversion, Trait::Agreeableness, Trait::Neuroticism];

    pub fn as_str(self) -> &'static str {
        match self {
            Trait::Openness => "openness",
            Trait::Conscientiousness => "conscientiousness",
            Trait::Extraversion => "extraversion",
            Trait::Agreeableness => "agreeableness",
            Trait::Neuroticism => "neuroticism",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraitScores {
    pub openness: f64,
    pub conscientiousness: f64,
    pub extraversion: f64,
    pub agreeableness: f64,
    pub neuroticism: f64,
}

impl TraitScores {
    pub fn get(&self, t: Trait) -> f64 {
        match t {
            Trait::Openness => self.openness,
            Trait::Conscientiousness => self.conscientiousness,
            Trait::Extraversion => self.extraversion,
            Trait::Agreeableness => self.agreeableness,
            Trait::Neuroticism => self.neuroticism,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntry {
    /// 1-based position in the 15-item form.
    pub item_index: usize,
    #[serde(rename = "trait")]
    pub trait_name: Trait,
    pub reverse: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyingTable {
    pub entries: Vec<KeyEntry>,
}

impl KeyingTable {
    /// Reads `item_index,trait,reverse` rows with a header line.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, SurveyError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let entries = rdr
            .deserialize()
            .collect::<Result<Vec<KeyEntry>, _>>()
            .map_err(|e| SurveyError::InvalidKeying(e.to_string()))?;
        let table = Self { entries };
        table.validate()?;
        Ok(table)
    }

    pub fn bfi2_xs() -> Self {
        Self::from_csv(DEFAULT_KEYING_CSV.as_bytes()).expect("bundled keying is valid")
    }

    pub fn validate(&self) -> Result<(), SurveyError> {
        let items: BTreeSet<usize> = self.entries.iter().map(|e| e.item_index).collect();
        if self.entries.len() != BFI_ITEMS || items != (1..=BFI_ITEMS).collect() {
            return Err(SurveyError::InvalidKeying(format!("items must be 1..={BFI_ITEMS}, each exactly once")));
        }
        for t in Trait::ALL {
            let n = self.entries.iter().filter(|e| e.trait_name == t).count();
            if n != 3 {
                return Err(SurveyError::InvalidKeying(format!("{} has {n} items, expected 3", t.as_str())));
            }
        }
        Ok(())
    }
}

pub fn reverse_item(v: u8) -> u8 {
    6 - v
}

pub fn score_bfi(items: &[u8], keying: &KeyingTable) -> Result<TraitScores, SurveyError> {
    keying.validate()?;
    if items.len() != BFI_ITEMS {
        return Err(SurveyError::Validation(vec![format!("expected {BFI_ITEMS} items, got {}", items.len())]));
    }
    if let Some((i, v)) = items.iter().enumerate().find(|(_, v)| !(1..=5).contains(*v)) {
        return Err(SurveyError::OutOfScale { item: format!("bfi_items[{}]", i + 1), value: *v as i64, min: 1, max: 5 });
    }
    let score = |t: Trait| {
        let keyed = keying.entries.iter().filter(|e| e.trait_name == t);
        let sum: u32 = keyed
            .map(|e| {
                let v = items[e.item_index - 1];
                u32::from(if e.reverse { reverse_item(v) } else { v })
            })
            .sum();
        sum as f64 / 3.0
    };
    Ok(TraitScores {
        openness: score(Trait::Openness),
        conscientiousness: score(Trait::Conscientiousness),
        extraversion: score(Trait::Extraversion),
        agreeableness: score(Trait::Agreeableness),
        neuroticism: score(Trait::Neuroticism),
    })
}

/// Quartile (1..=4) per participant. Participants are ordered by
/// (score, participant id) and the `i`-th of `n` gets `ceil(4i / n)`, so
/// quartile sizes differ by at most one. Returned in that order.
pub fn trait_quartiles(scores: &[(String, f64)]) -> Result<Vec<(String, u8)>, SurveyError> {
    if scores.len() < 4 {
        return Err(SurveyError::InsufficientCohort(format!("{} participants, need 4", scores.len())));
    }
    if let Some((id, _)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(SurveyError::InsufficientCohort(format!("non-finite score for {id}")));
    }
    if scores.iter().all(|(_, s)| *s == scores[0].1) {
        return Err(SurveyError::InsufficientCohort("all scores identical".into()));
    }
    let mut sorted: Vec<&(String, f64)> = scores.iter().collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let n = sorted.len();
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(k, (id, _))| (id.clone(), (4 * (k + 1)).div_ceil(n) as u8))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaDeltas {
    /// Item 2 minus item 1.
    pub help_delta: i32,
    /// Item 4 minus item 3.
    pub creativity_delta: i32,
}

pub fn persona_deltas(resp: &SurveyResponse) -> PersonaDeltas {
    PersonaDeltas {
        help_delta: i32::from(resp.q2) - i32::from(resp.q1),
        creativity_delta: i32::from(resp.q4) - i32::from(resp.q3),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Scale {
    pub min: u8,
    pub max: u8,
    pub min_label: String,
    pub max_label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct QuestionnaireItem {
    pub key: String,
    pub text: String,
    pub min: Option<u8>,
    pub max: Option<u8>,
    pub min_label: Option<String>,
    pub max_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Questionnaire {
    pub likert: Scale,
    pub items: Vec<QuestionnaireItem>,
}

impl Questionnaire {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn english() -> Self {
        Self::from_toml_str(QUESTIONNAIRE_EN).expect("bundled questionnaire parses")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn response(bfi: Vec<u8>) -> SurveyResponse {
        SurveyResponse {
            q1: 2,
            q2: 5,
            q3: 3,
            q4: 3,
            q5: 4,
            q6: 4,
            q7: 3,
            q8_forced_choice: 1,
            bfi_items: bfi,
            demographics: Demographics { age: 24, field: "design".into() },
        }
    }

    #[test]
    fn bundled_keying_is_valid() {
        let k = KeyingTable::bfi2_xs();
        assert_eq!(k.entries.len(), 15);
        assert_eq!(k.entries.iter().filter(|e| e.reverse).count(), 6);
    }

    #[test]
    fn all_threes_score_three() {
        let s = score_bfi(&[3; 15], &KeyingTable::bfi2_xs()).unwrap();
        for t in Trait::ALL {
            assert_eq!(s.get(t), 3.0);
        }
    }

    #[test]
    fn hand_keyed_trait() {
        // Openness uses items 5, 10 (reversed) and 15.
        let mut items = [3u8; 15];
        items[4] = 5;
        items[9] = 1;
        items[14] = 3;
        let s = score_bfi(&items, &KeyingTable::bfi2_xs()).unwrap();
        assert_abs_diff_eq!(s.openness, 13.0 / 3.0, epsilon = 1e-12);
        let mut items = [3u8; 15];
        items[1] = 5;
        items[6] = 1;
        items[11] = 5;
        assert_eq!(score_bfi(&items, &KeyingTable::bfi2_xs()).unwrap().agreeableness, 5.0);
    }

    #[test]
    fn scoring_errors() {
        let k = KeyingTable::bfi2_xs();
        assert!(matches!(score_bfi(&[6; 15], &k), Err(SurveyError::OutOfScale { .. })));
        let mut bad = k.clone();
        bad.entries[0].item_index = 2;
        assert!(matches!(score_bfi(&[3; 15], &bad), Err(SurveyError::InvalidKeying(_))));
        assert!(KeyingTable::from_csv("item_index,trait,reverse\n1,grit,false\n".as_bytes()).is_err());
    }

    #[test]
    fn quartile_examples() {
        let scores: Vec<_> = (0..16).map(|i| (format!("p{i:02}"), i as f64)).collect();
        let q = trait_quartiles(&scores).unwrap();
        for quart in 1..=4u8 {
            assert_eq!(q.iter().filter(|(_, x)| *x == quart).count(), 4);
        }
        let flat: Vec<_> = (0..8).map(|i| (format!("p{i}"), 3.0)).collect();
        assert!(matches!(trait_quartiles(&flat), Err(SurveyError::InsufficientCohort(_))));
        assert!(trait_quartiles(&scores[..3]).is_err());
    }

    #[test]
    fn ties_split_by_id() {
        let scores = vec![("b".to_string(), 1.0), ("a".to_string(), 1.0), ("c".to_string(), 2.0), ("d".to_string(), 3.0)];
        let q = trait_quartiles(&scores).unwrap();
        assert_eq!(q[0], ("a".to_string(), 1));
        assert_eq!(q[1], ("b".to_string(), 2));
    }

    #[test]
    fn deltas() {
        let mut r = response(vec![3; 15]);
        r.q4 = 5;
        r.q3 = 2;
        assert_eq!(persona_deltas(&r), PersonaDeltas { help_delta: 3, creativity_delta: 3 });
        r.q4 = 2;
        r.q2 = 2;
        assert_eq!(persona_deltas(&r), PersonaDeltas { help_delta: 0, creativity_delta: 0 });
    }

    #[test]
    fn draft_validation_lists_every_problem() {
        let draft: SurveyDraft = serde_json::from_str(
            r#"{"q1":1,"q2":6,"q3":1,"q4":1,"q5":1,"q6":1,"q7":1,"bfi_items":[3,3],"demographics":{"age":30,"field":"x"}}"#,
        )
        .unwrap();
        let SurveyError::Validation(problems) = draft.into_response().unwrap_err() else { panic!() };
        assert!(problems.iter().any(|p| p.starts_with("q2:")));
        assert!(problems.iter().any(|p| p.starts_with("q8_forced_choice: missing")));
        assert!(problems.iter().any(|p| p.starts_with("bfi_items:")));
        assert!(response(vec![3; 15]).validate().is_ok());
        assert!(response(vec![3; 14]).validate().is_err());
    }

    #[test]
    fn questionnaire_loads() {
        let q = Questionnaire::english();
        assert_eq!(q.items.len(), 8);
        assert_eq!(q.items[7].max, Some(4));
    }
}
