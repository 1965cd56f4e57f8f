//! Deterministic feature-hashing utterance embedder.
//!
//! Each token is hashed with 64-bit FNV-1a into one of `d` buckets and given
//! a ±1 sign from a second FNV-1a pass with a different offset basis. The
//! utterance vector is the average of its token vectors.

use super::io::EmbeddedSession;
use super::schema::{Session, Utterance};
use crate::numerics::Tensor;

const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
/// Standard FNV-1a 64-bit offset basis, used for the bucket hash.
const BUCKET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
/// Offset basis for the sign hash: the standard basis xor the golden-ratio constant.
const SIGN_BASIS: u64 = BUCKET_BASIS ^ 0x9e37_79b9_7f4a_7c15;

pub fn fnv1a64(basis: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(basis, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn hash_embed(tokens: &[String], d: usize) -> Vec<f64> {
    assert!(d >= 1, "embedding dimension must be positive");
    let mut out = vec![0.0; d];
    if tokens.is_empty() {
        return out;
    }
    for tok in tokens {
        let bucket = (fnv1a64(BUCKET_BASIS, tok.as_bytes()) % d as u64) as usize;
        let sign = if fnv1a64(SIGN_BASIS, tok.as_bytes()) >> 63 == 1 {
            -1.0
        } else {
            1.0
        };
        out[bucket] += sign;
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Embeds every utterance of `session` in order.
pub fn embed_session(session: &Session, d: usize) -> EmbeddedSession {
    embed_utterances(&session.session_id, &session.utterances, d)
}

pub fn embed_utterances(session_id: &str, utterances: &[Utterance], d: usize) -> EmbeddedSession {
    let values: Vec<f64> = utterances
        .iter()
        .flat_map(|u| hash_embed(&u.tokens, d))
        .collect();
    EmbeddedSession {
        session_id: session_id.to_string(),
        matrix: Tensor::new(vec![utterances.len(), d], values).expect("rows × d values"),
    }
}
