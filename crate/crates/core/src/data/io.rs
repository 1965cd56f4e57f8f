//! JSONL readers and writers for transcripts and embeddings, plus the
//! metadata vocabulary file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metadata::MetadataVocab;
use super::schema::{Code, CtrsLabels, MetadataRecord, Role, Session, Utterance, NUM_CODES};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUtterance {
    role: Role,
    start_s: f64,
    end_s: f64,
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawSession {
    session_id: String,
    therapist_id: String,
    metadata: MetadataRecord,
    ctrs: BTreeMap<String, i64>,
    utterances: Vec<RawUtterance>,
}

fn invalid(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Validation(format!("line {line}: {msg}"))
}

fn validate(raw: RawSession, line: usize) -> Result<Session> {
    if raw.session_id.is_empty() {
        return Err(invalid(line, "empty session_id"));
    }
    if raw.therapist_id.is_empty() {
        return Err(invalid(line, "empty therapist_id"));
    }
    let mut codes = [0u8; NUM_CODES];
    for (key, value) in &raw.ctrs {
        let code = Code::from_abbrev(key)
            .ok_or_else(|| invalid(line, format!("unknown code `{key}`")))?;
        if !(0..=6).contains(value) {
            return Err(invalid(line, format!("code `{key}` = {value} is outside 0..=6")));
        }
        codes[code.index()] = *value as u8;
    }
    if raw.ctrs.len() != NUM_CODES {
        let missing: Vec<_> = Code::ALL
            .iter()
            .filter(|c| !raw.ctrs.contains_key(c.abbrev()))
            .map(|c| c.abbrev())
            .collect();
        return Err(invalid(line, format!("missing codes {missing:?}")));
    }

    let mut utterances = Vec::with_capacity(raw.utterances.len());
    for (i, u) in raw.utterances.into_iter().enumerate() {
        let tokens = Utterance::tokenize(&u.text);
        if tokens.is_empty() {
            return Err(invalid(line, format!("utterance {i} has no tokens")));
        }
        if !(u.start_s >= 0.0 && u.end_s >= u.start_s) {
            return Err(invalid(
                line,
                format!("utterance {i} has invalid span [{}, {}]", u.start_s, u.end_s),
            ));
        }
        utterances.push(Utterance {
            role: u.role,
            tokens,
            start_s: u.start_s,
            end_s: u.end_s,
        });
    }
    utterances.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));

    Ok(Session {
        session_id: raw.session_id,
        therapist_id: raw.therapist_id,
        utterances,
        labels: CtrsLabels::new(codes)?,
        metadata: raw.metadata,
    })
}

pub fn parse_sessions<R: BufRead>(reader: R) -> Result<Vec<Session>> {
    let mut sessions = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSession = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let session = validate(raw, line_no)?;
        if !seen.insert(session.session_id.clone()) {
            return Err(Error::DuplicateSession(session.session_id));
        }
        sessions.push(session);
    }
    Ok(sessions)
}

pub fn load_sessions(path: &Path) -> Result<Vec<Session>> {
    parse_sessions(BufReader::new(File::open(path)?))
}

pub fn write_sessions<W: Write>(mut writer: W, sessions: &[Session]) -> Result<()> {
    for s in sessions {
        let raw = RawSession {
            session_id: s.session_id.clone(),
            therapist_id: s.therapist_id.clone(),
            metadata: s.metadata.clone(),
            ctrs: Code::ALL
                .iter()
                .map(|c| (c.abbrev().to_string(), i64::from(s.labels.get(*c))))
                .collect(),
            utterances: s
                .utterances
                .iter()
                .map(|u| RawUtterance {
                    role: u.role,
                    start_s: u.start_s,
                    end_s: u.end_s,
                    text: u.tokens.join(" "),
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &raw)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_sessions(path: &Path, sessions: &[Session]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sessions(&mut w, sessions)?;
    w.flush()?;
    Ok(())
}

/// Utterance embeddings of one session, one row per utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSession {
    pub session_id: String,
    pub matrix: Tensor,
}

impl EmbeddedSession {
    pub fn rows(&self) -> usize {
        self.matrix.dims2().0
    }

    pub fn dim(&self) -> usize {
        self.matrix.dims2().1
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawEmbedding {
    session_id: String,
    dim: usize,
    vectors: Vec<Vec<f32>>,
}

/// Parses embedding JSONL. Values are stored as 32-bit floats and widened.
pub fn parse_embeddings<R: BufRead>(reader: R) -> Result<BTreeMap<String, EmbeddedSession>> {
    let mut out = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEmbedding = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let expected = *dim.get_or_insert(raw.dim);
        if raw.dim != expected {
            return Err(Error::Dimension {
                expected,
                found: raw.dim,
                session: raw.session_id,
            });
        }
        if raw.vectors.is_empty() {
            return Err(invalid(line_no, format!("session `{}` has no vectors", raw.session_id)));
        }
        let mut values = Vec::with_capacity(raw.vectors.len() * expected);
        for v in &raw.vectors {
            if v.len() != expected {
                return Err(Error::Dimension {
                    expected,
                    found: v.len(),
                    session: raw.session_id,
                });
            }
            values.extend(v.iter().map(|&x| f64::from(x)));
        }
        let matrix = Tensor::new(vec![raw.vectors.len(), expected], values)?;
        if !matrix.all_finite() {
            return Err(invalid(line_no, "non-finite embedding value"));
        }
        let id = raw.session_id.clone();
        if out
            .insert(
                id.clone(),
                EmbeddedSession {
                    session_id: raw.session_id,
                    matrix,
                },
            )
            .is_some()
        {
            return Err(Error::DuplicateSession(id));
        }
    }
    Ok(out)
}

pub fn load_embeddings(path: &Path) -> Result<BTreeMap<String, EmbeddedSession>> {
    parse_embeddings(BufReader::new(File::open(path)?))
}

/// Writes embeddings as 32-bit floats in their shortest round-trip form.
pub fn write_embeddings<'a, W, I>(mut writer: W, sessions: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a EmbeddedSession>,
{
    for s in sessions {
        let raw = RawEmbedding {
            session_id: s.session_id.clone(),
            dim: s.dim(),
            vectors: (0..s.rows())
                .map(|r| s.matrix.row_slice(r).iter().map(|&x| x as f32).collect())
                .collect(),
        };
        serde_json::to_writer(&mut writer, &raw)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_embeddings<'a, I>(path: &Path, sessions: I) -> Result<()>
where
    I: IntoIterator<Item = &'a EmbeddedSession>,
{
    let mut w = BufWriter::new(File::create(path)?);
    write_embeddings(&mut w, sessions)?;
    w.flush()?;
    Ok(())
}

pub fn load_vocab(path: &Path) -> Result<MetadataVocab> {
    let vocab: MetadataVocab = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    vocab.validate()?;
    Ok(vocab)
}

pub fn save_vocab(path: &Path, vocab: &MetadataVocab) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, vocab)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
