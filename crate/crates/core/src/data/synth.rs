//! Synthetic sessions with planted, recoverable signals.
//!
//! Each session draws its eleven code scores uniformly from `0..=6`. For every
//! code `i`, therapist turns whose normalized position falls in that code's
//! region receive the marker `a_i·u_i` on top of Gaussian noise, where the
//! `u_i` are orthonormal directions and `a_i = amplitude · score_i / 6`. The
//! same turns carry the code's keyword with probability `score_i / 6`, and a
//! label keyword appears at a rate that depends on the binarized total.
//! Assessment time is drawn from the bucket containing the total with
//! probability `metadata_signal`, so metadata is informative.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::io::EmbeddedSession;
use super::metadata::MetadataVocab;
use super::schema::{
    Code, CtrsLabels, MetadataRecord, Role, Session, Utterance, COMPETENCE_THRESHOLD, NUM_CODES,
};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::seeds;

pub const FILLER_VOCAB: usize = 300;
pub const LABEL_TOKEN: &str = "skillful";

/// Upper bounds (exclusive) of the total-score buckets behind the
/// assessment-time categories; the last bucket is open-ended.
const ASSESSMENT_BUCKETS: [u32; 6] = [28, 32, 36, 40, 44, 48];

pub fn code_keyword(code: Code) -> &'static str {
    match code {
        Code::Ag => "agenda",
        Code::Fb => "feedback",
        Code::Un => "understanding",
        Code::Ip => "interpersonal",
        Code::Co => "collaboration",
        Code::Pt => "pacing",
        Code::Gd => "discovery",
        Code::Cb => "cognitions",
        Code::Sc => "strategy",
        Code::At => "techniques",
        Code::Hw => "homework",
    }
}

pub fn default_regions() -> BTreeMap<Code, Vec<[f64; 2]>> {
    Code::ALL
        .into_iter()
        .map(|c| {
            let regions = match c {
                Code::Ag => vec![[0.0, 0.1]],
                Code::Hw => vec![[0.0, 0.1], [0.9, 1.0]],
                _ => vec![[0.0, 1.0]],
            };
            (c, regions)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_sessions: usize,
    pub n_therapists: usize,
    /// Embedding dimension; must hold eleven orthogonal directions.
    pub d: usize,
    /// Mean and standard deviation of the number of turns (both roles).
    pub turns_mean: f64,
    pub turns_std: f64,
    pub min_turns: usize,
    pub signal_amplitude: f64,
    pub noise_scale: f64,
    pub regions: BTreeMap<Code, Vec<[f64; 2]>>,
    /// Probability that assessment time reflects the total-score bucket.
    pub metadata_signal: f64,
    /// Per-turn probability of the label keyword for label 0 and label 1.
    pub lexical_signal: [f64; 2],
    /// Code vectors whose total lies within this distance of the competence
    /// boundary (39.5) are redrawn. 0 keeps every draw.
    pub label_margin: f64,
    /// Probability that a code copies the session's latent skill level
    /// instead of drawing independently. Either way each code is uniform on
    /// 0..=6; this only correlates the codes within a session.
    pub code_correlation: f64,
    /// Number of clinics; each therapist works at one.
    pub n_clinics: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_sessions: 200,
            n_therapists: 50,
            d: 24,
            turns_mean: 40.0,
            turns_std: 8.0,
            min_turns: 10,
            signal_amplitude: 1.0,
            noise_scale: 1.0,
            regions: default_regions(),
            metadata_signal: 0.9,
            lexical_signal: [0.05, 0.5],
            label_margin: 3.0,
            code_correlation: 0.5,
            n_clinics: 5,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    /// Default layout with a strong marker and little noise, so attention
    /// curves show where each code's signal lives.
    pub fn noise_controlled() -> Self {
        SyntheticSpec {
            signal_amplitude: 3.0,
            noise_scale: 0.2,
            ..SyntheticSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.n_therapists == 0 {
            return bad("n_therapists must be positive".into());
        }
        if self.n_sessions < 2 * self.n_therapists {
            return bad(format!(
                "{} sessions cannot give each of {} therapists at least 2 sessions",
                self.n_sessions, self.n_therapists
            ));
        }
        if self.d < NUM_CODES {
            return bad(format!("d = {} cannot hold {NUM_CODES} orthogonal directions", self.d));
        }
        if self.min_turns < 2 || !(self.turns_mean > 0.0) || !(self.turns_std >= 0.0) {
            return bad("turn count parameters out of range".into());
        }
        if !(self.noise_scale >= 0.0) || !self.signal_amplitude.is_finite() {
            return bad("noise_scale and signal_amplitude must be finite and nonnegative".into());
        }
        let probs = [
            self.metadata_signal,
            self.lexical_signal[0],
            self.lexical_signal[1],
            self.code_correlation,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        if self.n_clinics == 0 {
            return bad("n_clinics must be positive".into());
        }
        if !(0.0..=10.0).contains(&self.label_margin) {
            return bad(format!("label_margin must lie in [0, 10], got {}", self.label_margin));
        }
        for (code, regions) in &self.regions {
            for [a, b] in regions {
                if !(0.0..=1.0).contains(a) || !(0.0..=1.0).contains(b) || a > b {
                    return bad(format!("region [{a}, {b}] for `{code}` is not inside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Orthonormal marker directions, one per code.
    pub fn signal_directions(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(self.seed, "directions"));
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(NUM_CODES);
        while basis.len() < NUM_CODES {
            let mut v: Vec<f64> = (0..self.d).map(|_| normal.sample(&mut rng)).collect();
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= norm);
                basis.push(v);
            }
        }
        basis
    }

    fn in_region(&self, code: Code, pos: f64) -> bool {
        self.regions
            .get(&code)
            .is_some_and(|rs| rs.iter().any(|[a, b]| *a <= pos && pos <= *b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub sessions: Vec<Session>,
    pub embeddings: Vec<EmbeddedSession>,
    pub vocab: MetadataVocab,
}

pub fn assessment_bucket(total: u32) -> usize {
    ASSESSMENT_BUCKETS
        .iter()
        .position(|&ub| total < ub)
        .unwrap_or(ASSESSMENT_BUCKETS.len())
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let vocab = MetadataVocab {
        clinic: (1..=spec.n_clinics).map(|i| format!("clinic_{i:02}")).collect(),
        ..MetadataVocab::default()
    };
    let directions = spec.signal_directions();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let turns = Normal::new(spec.turns_mean, spec.turns_std).expect("finite turn distribution");

    let therapist_clinic: Vec<usize> = (0..spec.n_therapists)
        .map(|_| rng.random_range(0..vocab.clinic.len()))
        .collect();

    let mut sessions = Vec::with_capacity(spec.n_sessions);
    let mut embeddings = Vec::with_capacity(spec.n_sessions);
    for s in 0..spec.n_sessions {
        let therapist = s % spec.n_therapists;
        let boundary = f64::from(COMPETENCE_THRESHOLD) - 0.5;
        let mut codes = [0u8; NUM_CODES];
        loop {
            let level = rng.random_range(0..=6u8);
            for c in codes.iter_mut() {
                let independent = rng.random_range(0..=6u8);
                *c = if rng.random::<f64>() < spec.code_correlation {
                    level
                } else {
                    independent
                };
            }
            let total: u32 = codes.iter().map(|&c| u32::from(c)).sum();
            if (f64::from(total) - boundary).abs() >= spec.label_margin {
                break;
            }
        }
        let labels = CtrsLabels::new(codes)?;
        let label = labels.label();

        let n_turns = (turns.sample(&mut rng).round().max(0.0) as usize).max(spec.min_turns);
        let n_therapist = n_turns.div_ceil(2);

        let mut utterances = Vec::with_capacity(n_turns);
        let mut values = Vec::with_capacity(n_turns * spec.d);
        let mut clock = 0.0;
        for t in 0..n_turns {
            let role = if t % 2 == 0 { Role::Therapist } else { Role::Patient };
            let n_tokens = rng.random_range(3..=8usize);
            let mut tokens: Vec<String> = (0..n_tokens)
                .map(|_| format!("w{:03}", rng.random_range(0..FILLER_VOCAB)))
                .collect();
            let mut row: Vec<f64> = (0..spec.d)
                .map(|_| spec.noise_scale * noise.sample(&mut rng))
                .collect();

            if role == Role::Therapist {
                let pos = ((t / 2) as f64 + 0.5) / n_therapist as f64;
                for code in Code::ALL {
                    if !spec.in_region(code, pos) {
                        continue;
                    }
                    let score = f64::from(labels.get(code)) / 6.0;
                    let a = spec.signal_amplitude * score;
                    row.iter_mut()
                        .zip(&directions[code.index()])
                        .for_each(|(x, u)| *x += a * u);
                    if rng.random::<f64>() < score {
                        tokens.push(code_keyword(code).to_string());
                    }
                }
                if rng.random::<f64>() < spec.lexical_signal[usize::from(label)] {
                    tokens.push(LABEL_TOKEN.to_string());
                }
            }

            let start = clock + 0.5;
            let end = start + 0.4 * tokens.len() as f64;
            clock = end;
            utterances.push(Utterance {
                role,
                tokens,
                start_s: start,
                end_s: end,
            });
            values.extend(row.into_iter().map(|x| f64::from(x as f32)));
        }

        let assessment = if rng.random::<f64>() < spec.metadata_signal {
            assessment_bucket(labels.total())
        } else {
            rng.random_range(0..vocab.assessment_time.len())
        };
        let metadata = MetadataRecord {
            clinic: vocab.clinic[therapist_clinic[therapist]].clone(),
            level_of_care: vocab.level_of_care[rng.random_range(0..vocab.level_of_care.len())]
                .clone(),
            population: vocab.population[rng.random_range(0..vocab.population.len())].clone(),
            assessment_time: vocab.assessment_time[assessment].clone(),
        };

        let session_id = format!("S{s:04}");
        embeddings.push(EmbeddedSession {
            session_id: session_id.clone(),
            matrix: Tensor::new(vec![n_turns, spec.d], values)?,
        });
        sessions.push(Session {
            session_id,
            therapist_id: format!("T{therapist:03}"),
            utterances,
            labels,
            metadata,
        });
    }
    Ok(SyntheticData {
        sessions,
        embeddings,
        vocab,
    })
}
