use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::schema::{Role, Session, Utterance};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Silence gap below which consecutive same-role turns are merged.
pub const DEFAULT_MERGE_GAP_S: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleFilter {
    TherapistOnly,
    All,
}

impl RoleFilter {
    pub fn keeps(self, role: Role) -> bool {
        match self {
            RoleFilter::TherapistOnly => role == Role::Therapist,
            RoleFilter::All => true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RoleFilter::TherapistOnly => "therapist_only",
            RoleFilter::All => "all",
        }
    }
}

impl fmt::Display for RoleFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoleFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "therapist_only" | "therapist" => Ok(RoleFilter::TherapistOnly),
            "all" => Ok(RoleFilter::All),
            other => Err(Error::Config(format!("unknown role filter `{other}`"))),
        }
    }
}

pub fn filter_role(session: &Session, keep: RoleFilter) -> Result<Session> {
    let utterances: Vec<Utterance> = session
        .utterances
        .iter()
        .filter(|u| keep.keeps(u.role))
        .cloned()
        .collect();
    if utterances.is_empty() {
        return Err(Error::EmptySession(session.session_id.clone()));
    }
    Ok(Session {
        utterances,
        ..session.clone()
    })
}

/// Merges consecutive same-role utterances separated by less than `max_gap_s`.
pub fn merge_turns(utterances: &[Utterance], max_gap_s: f64) -> Vec<Utterance> {
    let mut out: Vec<Utterance> = Vec::with_capacity(utterances.len());
    for u in utterances {
        match out.last_mut() {
            Some(prev) if prev.role == u.role && u.start_s - prev.end_s < max_gap_s => {
                prev.tokens.extend(u.tokens.iter().cloned());
                prev.end_s = prev.end_s.max(u.end_s);
            }
            _ => out.push(u.clone()),
        }
    }
    out
}

/// Keeps the first `max_len` rows (or zero-pads up to it) and returns the
/// validity mask.
pub fn truncate_pad(matrix: &Tensor, max_len: usize) -> (Tensor, Vec<bool>) {
    let (t, d) = matrix.dims2();
    let kept = t.min(max_len);
    let mut values = vec![0.0; max_len * d];
    values[..kept * d].copy_from_slice(&matrix.values()[..kept * d]);
    let mask = (0..max_len).map(|i| i < kept).collect();
    let padded = Tensor::new(vec![max_len, d], values).expect("consistent shape");
    (padded, mask)
}

/// Balanced class weights `N / (2·N_c)`.
pub fn class_weights(labels: &[u8]) -> Result<(f64, f64)> {
    let n = labels.len() as f64;
    let ones = labels.iter().filter(|&&y| y == 1).count() as f64;
    let zeros = n - ones;
    if ones == 0.0 || zeros == 0.0 {
        return Err(Error::DegenerateLabels(format!(
            "class weights need both classes ({zeros} negatives, {ones} positives)"
        )));
    }
    Ok((n / (2.0 * zeros), n / (2.0 * ones)))
}
