use std::fmt;

use serde::{Deserialize, Serialize};

pub const NUM_CODES: usize = 11;

/// Sessions with a total at or above this value count as competent delivery.
pub const COMPETENCE_THRESHOLD: u32 = 40;

pub const MAX_CODE_SCORE: u8 = 6;

/// The eleven rating-scale codes, in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Code {
    Ag,
    Fb,
    Un,
    Ip,
    Co,
    Pt,
    Gd,
    Cb,
    Sc,
    At,
    Hw,
}

impl Code {
    pub const ALL: [Code; NUM_CODES] = [
        Code::Ag,
        Code::Fb,
        Code::Un,
        Code::Ip,
        Code::Co,
        Code::Pt,
        Code::Gd,
        Code::Cb,
        Code::Sc,
        Code::At,
        Code::Hw,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn abbrev(self) -> &'static str {
        match self {
            Code::Ag => "ag",
            Code::Fb => "fb",
            Code::Un => "un",
            Code::Ip => "ip",
            Code::Co => "co",
            Code::Pt => "pt",
            Code::Gd => "gd",
            Code::Cb => "cb",
            Code::Sc => "sc",
            Code::At => "at",
            Code::Hw => "hw",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Code::Ag => "agenda",
            Code::Fb => "feedback",
            Code::Un => "understanding",
            Code::Ip => "interpersonal effectiveness",
            Code::Co => "collaboration",
            Code::Pt => "pacing and efficient use of time",
            Code::Gd => "guided discovery",
            Code::Cb => "focusing on key cognitions and behaviors",
            Code::Sc => "strategy for change",
            Code::At => "application of techniques",
            Code::Hw => "homework",
        }
    }

    pub fn from_abbrev(s: &str) -> Option<Code> {
        Code::ALL.into_iter().find(|c| c.abbrev() == s)
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Therapist,
    Patient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub role: Role,
    pub tokens: Vec<String>,
    pub start_s: f64,
    pub end_s: f64,
}

impl Utterance {
    /// Lowercased, whitespace-split tokens of `text`.
    pub fn tokenize(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_lowercase).collect()
    }
}

/// Per-code scores, each in `0..=6`, in canonical code order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CtrsLabels {
    codes: [u8; NUM_CODES],
}

impl CtrsLabels {
    pub fn new(codes: [u8; NUM_CODES]) -> crate::Result<Self> {
        if let Some((i, v)) = codes.iter().enumerate().find(|(_, &v)| v > MAX_CODE_SCORE) {
            return Err(crate::Error::Validation(format!(
                "code `{}` = {v} is outside 0..=6",
                Code::ALL[i]
            )));
        }
        Ok(CtrsLabels { codes })
    }

    pub fn codes(&self) -> &[u8; NUM_CODES] {
        &self.codes
    }

    pub fn get(&self, code: Code) -> u8 {
        self.codes[code.index()]
    }

    pub fn total(&self) -> u32 {
        self.codes.iter().map(|&c| u32::from(c)).sum()
    }

    pub fn label(&self) -> u8 {
        binarize_total(self.total())
    }
}

/// 1 iff `total ≥ 40`.
pub fn binarize_total(total: u32) -> u8 {
    u8::from(total >= COMPETENCE_THRESHOLD)
}

/// Raw metadata category names as they appear in transcripts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub clinic: String,
    pub level_of_care: String,
    pub population: String,
    pub assessment_time: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub therapist_id: String,
    pub utterances: Vec<Utterance>,
    pub labels: CtrsLabels,
    pub metadata: MetadataRecord,
}

impl Session {
    pub fn token_count(&self) -> usize {
        self.utterances.iter().map(|u| u.tokens.len()).sum()
    }
}
